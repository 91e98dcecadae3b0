#include "proprio/grad.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace proprio {

namespace {

using SensorSamples = TotalLossState::SensorSamples;

SensorSamples eval_sensor(const BSplineSurface& surface, const Sensor& sensor, int K) {
    const std::vector<UV> uv = sample_uv(sensor, K);
    SensorSamples out;
    out.position.resize(uv.size());
    out.du.resize(uv.size());
    out.dv.resize(uv.size());
    out.chord.resize(uv.size() - 1);
    for (std::size_t t = 0; t < uv.size(); ++t)
        surface_eval(surface, uv[t].u, uv[t].v, &out.position[t], &out.du[t], &out.dv[t]);
    double length = 0.0;
    for (std::size_t t = 1; t < uv.size(); ++t) {
        const double c = std::sqrt(squared_norm(out.position[t] - out.position[t - 1]) + kChordEpsilon);
        out.chord[t - 1] = c;
        length += c;
    }
    out.length = length;
    return out;
}

/// Adds `scale` * d(length)/d(u_s, v_s, u_e, v_e) from cached samples.
/// The chord-sum gradient w.r.t. sample point t is g_t - g_{t+1} with
/// g_t = M_t / ||M_t||_eps, which then chains through the surface partials
/// and the linear sample weights.
void accumulate_length_gradient(const SensorSamples& s, double scale, std::array<double, 4>& grad) {
    const int K = static_cast<int>(s.position.size());
    const double inv = 1.0 / (K - 1);
    Vec3 next_g{};  // g_{t+1}, zero beyond the last chord
    for (int t = K - 1; t >= 0; --t) {
        Vec3 g{};
        if (t >= 1) {
            const Vec3 chord_vec = s.position[static_cast<std::size_t>(t)] - s.position[static_cast<std::size_t>(t - 1)];
            g = (1.0 / s.chord[static_cast<std::size_t>(t - 1)]) * chord_vec;
        }
        const Vec3 h = g - next_g;
        const double w_end = t * inv;
        const double w_start = 1.0 - w_end;
        const double du = dot(h, s.du[static_cast<std::size_t>(t)]);
        const double dv = dot(h, s.dv[static_cast<std::size_t>(t)]);
        grad[0] += scale * du * w_start;
        grad[1] += scale * dv * w_start;
        grad[2] += scale * du * w_end;
        grad[3] += scale * dv * w_end;
        next_g = g;
    }
}

/// Adds `scale` * d(soft-min distance)/d(sample positions) for one pair.
/// The softmax weights are rebuilt from the cached shift and partition sum so
/// they match the forward value exactly; directions are eps-regularized.
void accumulate_softmin_gradient(const SensorSamples& a, const SensorSamples& b,
                                 const TotalLossState::PairState& pair, double beta, double scale,
                                 std::vector<Vec3>& grad_a, std::vector<Vec3>& grad_b) {
    const double inv_sum = 1.0 / pair.exp_sum;
    for (std::size_t i = 0; i < a.position.size(); ++i) {
        for (std::size_t j = 0; j < b.position.size(); ++j) {
            const Vec3 delta = a.position[i] - b.position[j];
            const double d = norm(delta);
            const double w = std::exp(-beta * (d - pair.min_dist)) * inv_sum;
            const Vec3 dir = (w * scale / std::sqrt(squared_norm(delta) + kChordEpsilon)) * delta;
            grad_a[i] += dir;
            grad_b[j] -= dir;
        }
    }
}

/// Maps a per-sample position gradient to the sensor's four UV parameters.
void samples_to_endpoints(const SensorSamples& s, const std::vector<Vec3>& sample_grad,
                          std::array<double, 4>& grad) {
    const int K = static_cast<int>(s.position.size());
    const double inv = 1.0 / (K - 1);
    for (int t = 0; t < K; ++t) {
        const double w_end = t * inv;
        const double w_start = 1.0 - w_end;
        const double du = dot(sample_grad[static_cast<std::size_t>(t)], s.du[static_cast<std::size_t>(t)]);
        const double dv = dot(sample_grad[static_cast<std::size_t>(t)], s.dv[static_cast<std::size_t>(t)]);
        grad[0] += du * w_start;
        grad[1] += dv * w_start;
        grad[2] += du * w_end;
        grad[3] += dv * w_end;
    }
}

struct P2 {
    double x = 0.0;
    double y = 0.0;
};

/// cross(a,b)/(|a||b|), the crossing sine used by overlap_terms.
double crossing_sine(const P2& a, const P2& b) {
    const double cross = a.x * b.y - a.y * b.x;
    const double denom = std::sqrt((a.x * a.x + a.y * a.y) * (b.x * b.x + b.y * b.y));
    return denom > 0.0 ? cross / denom : 0.0;
}

/// d(crossing_sine(P-Q, R-S)) accumulated into the endpoint gradients with
/// `scale`, via the quotient rule:
/// d(c/D)/da = ((b.y, -b.x) - sine * (|b|/|a|) * a) / D, D = |a||b|.
void accumulate_sine_gradient(const P2& p, const P2& q, const P2& r, const P2& s, double scale, P2& gp,
                              P2& gq, P2& gr, P2& gs) {
    const P2 a{p.x - q.x, p.y - q.y};
    const P2 b{r.x - s.x, r.y - s.y};
    const double na2 = a.x * a.x + a.y * a.y;
    const double nb2 = b.x * b.x + b.y * b.y;
    if (na2 == 0.0 || nb2 == 0.0) return;
    const double denom = std::sqrt(na2 * nb2);
    const double sine = (a.x * b.y - a.y * b.x) / denom;
    const double ca = scale / denom;
    const double da_x = ca * (b.y - sine * denom / na2 * a.x);
    const double da_y = ca * (-b.x - sine * denom / na2 * a.y);
    const double db_x = ca * (-a.y - sine * denom / nb2 * b.x);
    const double db_y = ca * (a.x - sine * denom / nb2 * b.y);
    gp.x += da_x;
    gp.y += da_y;
    gq.x -= da_x;
    gq.y -= da_y;
    gr.x += db_x;
    gr.y += db_y;
    gs.x -= db_x;
    gs.y -= db_y;
}

/// Gradient of loss_overlap w.r.t. the eight endpoint coordinates,
/// accumulated with `scale` into the two layout rows. Uses the factored form
/// f1 = sine(B-D, D-C) * sine(D-A, D-C), f2 = sine(B-D, B-A) * sine(B-A, B-C)
/// with A,B the first sensor's endpoints and C,D the second's.
void accumulate_overlap_gradient(const Sensor& s1, const Sensor& s2, double alpha,
                                 const TotalLossState::PairState& pair, double scale,
                                 std::array<double, 4>& g1, std::array<double, 4>& g2) {
    const P2 A{s1.u_s, s1.v_s};
    const P2 B{s1.u_e, s1.v_e};
    const P2 C{s2.u_s, s2.v_s};
    const P2 D{s2.u_e, s2.v_e};

    const double t1 = std::tanh(alpha * pair.f1);
    const double t2 = std::tanh(alpha * pair.f2);
    const double dL_df1 = 0.25 * alpha * (1.0 - t1 * t1) * (1.0 + t2) * scale;
    const double dL_df2 = 0.25 * alpha * (1.0 - t2 * t2) * (1.0 + t1) * scale;

    P2 gA{};
    P2 gB{};
    P2 gC{};
    P2 gD{};

    // f1 = c1 * c2, c1 = sine(B-D, D-C), c2 = sine(D-A, D-C)
    const double c1 = crossing_sine({B.x - D.x, B.y - D.y}, {D.x - C.x, D.y - C.y});
    const double c2 = crossing_sine({D.x - A.x, D.y - A.y}, {D.x - C.x, D.y - C.y});
    accumulate_sine_gradient(B, D, D, C, dL_df1 * c2, gB, gD, gD, gC);
    accumulate_sine_gradient(D, A, D, C, dL_df1 * c1, gD, gA, gD, gC);

    // f2 = c3 * c4, c3 = sine(B-D, B-A), c4 = sine(B-A, B-C)
    const double c3 = crossing_sine({B.x - D.x, B.y - D.y}, {B.x - A.x, B.y - A.y});
    const double c4 = crossing_sine({B.x - A.x, B.y - A.y}, {B.x - C.x, B.y - C.y});
    accumulate_sine_gradient(B, D, B, A, dL_df2 * c4, gB, gD, gB, gA);
    accumulate_sine_gradient(B, A, B, C, dL_df2 * c3, gB, gA, gB, gC);

    g1[0] += gA.x;
    g1[1] += gA.y;
    g1[2] += gB.x;
    g1[3] += gB.y;
    g2[0] += gC.x;
    g2[1] += gC.y;
    g2[2] += gD.x;
    g2[3] += gD.y;
}

}  // namespace

std::vector<double> GradientBundle::flatten() const {
    std::vector<double> flat;
    flat.reserve(d_layout.size() * 4 + d_logits.size() + d_predictor.size());
    for (const auto& row : d_layout) flat.insert(flat.end(), row.begin(), row.end());
    flat.insert(flat.end(), d_logits.begin(), d_logits.end());
    flat.insert(flat.end(), d_predictor.begin(), d_predictor.end());
    return flat;
}

std::array<double, 4> grad_sensor_length(const BSplineSurface& surface, const Sensor& sensor, int K) {
    const SensorSamples samples = eval_sensor(surface, sensor, K);
    std::array<double, 4> grad{};
    accumulate_length_gradient(samples, 1.0, grad);
    return grad;
}

TotalLossState forward_total(const std::vector<ControlGrid>& truth, int m, int n,
                             const SensorLayout& layout, const PredictorParams& params,
                             const BaseShape& base, const LossConfig& cfg, MaskMode mask_mode,
                             const ControlGrid* anchor_grid) {
    if (truth.empty()) throw std::invalid_argument("forward_total needs a nonempty batch");
    if (params.mode != PredictorMode::kTraining)
        throw std::invalid_argument("forward_total runs the predictor in training mode");
    if (params.input_dim != layout.size())
        throw std::invalid_argument("layout size does not match predictor input dimension");

    TotalLossState state;
    state.m = m;
    state.n = n;
    state.cfg = cfg;
    state.layout = layout;
    state.base = base;
    state.params = params;
    state.truth = truth;

    const int M = layout.size();
    state.mask.resize(static_cast<std::size_t>(M));
    state.d_mask.resize(static_cast<std::size_t>(M));
    for (int k = 0; k < M; ++k) {
        const double logit = layout.logits[static_cast<std::size_t>(k)];
        state.mask[static_cast<std::size_t>(k)] = mask_mode == MaskMode::kStraightThrough
                                                      ? binary_occupancy(logit)
                                                      : project_occupancy(logit, layout.alpha);
        state.d_mask[static_cast<std::size_t>(k)] = occupancy_derivative(logit, layout.alpha);
    }

    const int batch = static_cast<int>(truth.size());
    state.samples.resize(static_cast<std::size_t>(batch));
    state.signals.resize(static_cast<std::size_t>(batch));
    for (int b = 0; b < batch; ++b) {
        const BSplineSurface surface = make_surface(m, n, truth[static_cast<std::size_t>(b)]);
        auto& per_sensor = state.samples[static_cast<std::size_t>(b)];
        per_sensor.reserve(static_cast<std::size_t>(M));
        auto& sig = state.signals[static_cast<std::size_t>(b)].values;
        sig.resize(static_cast<std::size_t>(M));
        for (int k = 0; k < M; ++k) {
            per_sensor.push_back(eval_sensor(surface, layout.sensors[static_cast<std::size_t>(k)], cfg.K));
            sig[static_cast<std::size_t>(k)] = state.mask[static_cast<std::size_t>(k)] * per_sensor.back().length;
        }
    }

    if (anchor_grid != nullptr) {
        const BSplineSurface anchor_surface = make_surface(m, n, *anchor_grid);
        state.anchor_samples.clear();
        state.anchor_samples.reserve(static_cast<std::size_t>(M));
        for (int k = 0; k < M; ++k)
            state.anchor_samples.push_back(eval_sensor(anchor_surface, layout.sensors[static_cast<std::size_t>(k)], cfg.K));
    } else {
        state.anchor_samples = state.samples[0];
    }

    LossBreakdown& out = state.breakdown;
    const auto& anchor = state.anchor_samples;
    for (int k = 0; k < M; ++k) {
        out.total_length += state.mask[static_cast<std::size_t>(k)] * anchor[static_cast<std::size_t>(k)].length;
        const double gap = cfg.l_min_mm - anchor[static_cast<std::size_t>(k)].length;
        if (gap > 0.0) out.min_length += state.mask[static_cast<std::size_t>(k)] * gap * gap;
    }

    const double beta = cfg.beta_per_mm;
    for (int i = 0; i < M; ++i) {
        for (int j = i + 1; j < M; ++j) {
            TotalLossState::PairState pair;
            pair.i = i;
            pair.j = j;
            const auto [f1, f2] =
                overlap_terms(layout.sensors[static_cast<std::size_t>(i)], layout.sensors[static_cast<std::size_t>(j)]);
            pair.f1 = f1;
            pair.f2 = f2;
            pair.overlap = 0.25 * (1.0 + std::tanh(cfg.alpha * f1)) * (1.0 + std::tanh(cfg.alpha * f2));

            const auto& pa = anchor[static_cast<std::size_t>(i)].position;
            const auto& pb = anchor[static_cast<std::size_t>(j)].position;
            double min_dist = std::numeric_limits<double>::infinity();
            for (const Vec3& p : pa)
                for (const Vec3& q : pb) min_dist = std::min(min_dist, norm(p - q));
            double exp_sum = 0.0;
            for (const Vec3& p : pa)
                for (const Vec3& q : pb) exp_sum += std::exp(-beta * (norm(p - q) - min_dist));
            pair.min_dist = min_dist;
            pair.exp_sum = exp_sum;
            pair.soft_min = min_dist - std::log(exp_sum) / beta;

            const double hh = state.mask[static_cast<std::size_t>(i)] * state.mask[static_cast<std::size_t>(j)];
            out.overlap += hh * pair.overlap;
            const double gap = cfg.tau_mm - pair.soft_min;
            if (gap > 0.0) out.min_space += hh * gap * gap;
            state.pairs.push_back(pair);
        }
    }

    state.predicted =
        predictor_forward(state.params, state.signals, base, &state.batch_stats, &state.predictor_state);
    out.recon = loss_recon(state.predicted, truth, m, n);
    out.total = out.recon + cfg.w_t * out.total_length + cfg.w_m * out.min_length + cfg.w_p * out.overlap +
                cfg.w_s * out.min_space;

    state.evaluated = true;
    return state;
}

GradientBundle backward_total(const TotalLossState& state) {
    return backward_total(state, TermWeights::from_config(state.cfg));
}

GradientBundle backward_total(const TotalLossState& state, const TermWeights& weights) {
    if (!state.evaluated) throw std::logic_error("backward_total needs an evaluated forward state");

    const int M = state.layout.size();
    const int batch = static_cast<int>(state.truth.size());
    const LossConfig& cfg = state.cfg;

    GradientBundle bundle;
    bundle.d_layout.assign(static_cast<std::size_t>(M), {0.0, 0.0, 0.0, 0.0});
    bundle.d_logits.assign(static_cast<std::size_t>(M), 0.0);

    // d(total)/d(mask_k), folded into logits at the end.
    std::vector<double> d_mask(static_cast<std::size_t>(M), 0.0);

    // Reconstruction term: through the predictor into signals, then into
    // each shape's sensor lengths and the masks.
    if (weights.recon != 0.0) {
        const std::size_t grid_size = static_cast<std::size_t>(state.m) * state.n;
        const double scale = 2.0 * weights.recon / (static_cast<double>(grid_size) * batch);
        std::vector<ControlGrid> upstream(static_cast<std::size_t>(batch));
        for (int b = 0; b < batch; ++b) {
            upstream[static_cast<std::size_t>(b)].resize(grid_size);
            for (std::size_t p = 0; p < grid_size; ++p)
                upstream[static_cast<std::size_t>(b)][p] =
                    scale * (state.predicted[static_cast<std::size_t>(b)][p] - state.truth[static_cast<std::size_t>(b)][p]);
        }
        PredictorGradients pgrads = predictor_backward(state.params, state.predictor_state, upstream);
        for (int b = 0; b < batch; ++b) {
            for (int k = 0; k < M; ++k) {
                const double ds = pgrads.d_signals[static_cast<std::size_t>(b) * M + k];
                if (ds == 0.0) continue;
                accumulate_length_gradient(state.samples[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)],
                                           ds * state.mask[static_cast<std::size_t>(k)],
                                           bundle.d_layout[static_cast<std::size_t>(k)]);
                d_mask[static_cast<std::size_t>(k)] +=
                    ds * state.samples[static_cast<std::size_t>(b)][static_cast<std::size_t>(k)].length;
            }
        }
        bundle.d_predictor = flatten_gradients(pgrads);
    } else {
        bundle.d_predictor.assign(static_cast<std::size_t>(state.params.parameter_count()), 0.0);
    }

    // Length terms on the anchor surface.
    const auto& anchor = state.anchor_samples;
    for (int k = 0; k < M; ++k) {
        const double mask = state.mask[static_cast<std::size_t>(k)];
        const double length = anchor[static_cast<std::size_t>(k)].length;
        double d_length = 0.0;
        if (weights.total_length != 0.0) {
            d_length += weights.total_length * mask;
            d_mask[static_cast<std::size_t>(k)] += weights.total_length * length;
        }
        if (weights.min_length != 0.0) {
            const double gap = cfg.l_min_mm - length;
            if (gap > 0.0) {
                d_length += weights.min_length * mask * (-2.0 * gap);
                d_mask[static_cast<std::size_t>(k)] += weights.min_length * gap * gap;
            }
        }
        if (d_length != 0.0)
            accumulate_length_gradient(anchor[static_cast<std::size_t>(k)], d_length,
                                       bundle.d_layout[static_cast<std::size_t>(k)]);
    }

    // Pairwise terms.
    if (weights.overlap != 0.0 || weights.min_space != 0.0) {
        std::vector<Vec3> grad_a(static_cast<std::size_t>(cfg.K));
        std::vector<Vec3> grad_b(static_cast<std::size_t>(cfg.K));
        for (const auto& pair : state.pairs) {
            const double hi = state.mask[static_cast<std::size_t>(pair.i)];
            const double hj = state.mask[static_cast<std::size_t>(pair.j)];
            const double hh = hi * hj;

            if (weights.overlap != 0.0) {
                accumulate_overlap_gradient(state.layout.sensors[static_cast<std::size_t>(pair.i)],
                                            state.layout.sensors[static_cast<std::size_t>(pair.j)], cfg.alpha, pair,
                                            weights.overlap * hh, bundle.d_layout[static_cast<std::size_t>(pair.i)],
                                            bundle.d_layout[static_cast<std::size_t>(pair.j)]);
                d_mask[static_cast<std::size_t>(pair.i)] += weights.overlap * hj * pair.overlap;
                d_mask[static_cast<std::size_t>(pair.j)] += weights.overlap * hi * pair.overlap;
            }

            if (weights.min_space != 0.0) {
                const double gap = cfg.tau_mm - pair.soft_min;
                if (gap > 0.0) {
                    d_mask[static_cast<std::size_t>(pair.i)] += weights.min_space * hj * gap * gap;
                    d_mask[static_cast<std::size_t>(pair.j)] += weights.min_space * hi * gap * gap;
                    const double d_softmin = weights.min_space * hh * (-2.0 * gap);
                    std::fill(grad_a.begin(), grad_a.end(), Vec3{});
                    std::fill(grad_b.begin(), grad_b.end(), Vec3{});
                    accumulate_softmin_gradient(anchor[static_cast<std::size_t>(pair.i)],
                                                anchor[static_cast<std::size_t>(pair.j)], pair, cfg.beta_per_mm,
                                                d_softmin, grad_a, grad_b);
                    samples_to_endpoints(anchor[static_cast<std::size_t>(pair.i)], grad_a,
                                         bundle.d_layout[static_cast<std::size_t>(pair.i)]);
                    samples_to_endpoints(anchor[static_cast<std::size_t>(pair.j)], grad_b,
                                         bundle.d_layout[static_cast<std::size_t>(pair.j)]);
                }
            }
        }
    }

    for (int k = 0; k < M; ++k)
        bundle.d_logits[static_cast<std::size_t>(k)] =
            d_mask[static_cast<std::size_t>(k)] * state.d_mask[static_cast<std::size_t>(k)];

    return bundle;
}

double finite_difference_check(const std::function<double(const std::vector<double>&)>& f,
                               const std::vector<double>& x, const std::vector<double>& analytic,
                               double h, double denominator_floor) {
    if (x.size() != analytic.size())
        throw std::invalid_argument("finite_difference_check needs matching vector sizes");
    if (!(h > 0.0)) throw std::invalid_argument("finite_difference_check needs h > 0");
    std::vector<double> probe = x;
    double worst = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        probe[i] = x[i] + h;
        const double fp = f(probe);
        probe[i] = x[i] - h;
        const double fm = f(probe);
        probe[i] = x[i];
        if (!std::isfinite(fp) || !std::isfinite(fm))
            throw std::runtime_error("non-finite value in finite_difference_check");
        const double fd = (fp - fm) / (2.0 * h);
        const double denom = std::max({1e-8, std::abs(analytic[i]), denominator_floor});
        worst = std::max(worst, std::abs(analytic[i] - fd) / denom);
    }
    return worst;
}

std::vector<double> pack_variables(const SensorLayout& layout, const PredictorParams& params) {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(layout.size()) * 5 + static_cast<std::size_t>(params.parameter_count()));
    for (const Sensor& s : layout.sensors) {
        flat.push_back(s.u_s);
        flat.push_back(s.v_s);
        flat.push_back(s.u_e);
        flat.push_back(s.v_e);
    }
    flat.insert(flat.end(), layout.logits.begin(), layout.logits.end());
    const std::vector<double> theta = flatten_parameters(params);
    flat.insert(flat.end(), theta.begin(), theta.end());
    return flat;
}

void unpack_variables(const std::vector<double>& flat, SensorLayout& layout, PredictorParams& params) {
    const std::size_t M = layout.sensors.size();
    const std::size_t expected = M * 5 + static_cast<std::size_t>(params.parameter_count());
    if (flat.size() != expected) throw std::invalid_argument("packed variable vector has wrong length");
    for (std::size_t k = 0; k < M; ++k) {
        layout.sensors[k].u_s = flat[4 * k];
        layout.sensors[k].v_s = flat[4 * k + 1];
        layout.sensors[k].u_e = flat[4 * k + 2];
        layout.sensors[k].v_e = flat[4 * k + 3];
    }
    for (std::size_t k = 0; k < M; ++k) layout.logits[k] = flat[4 * M + k];
    std::vector<double> theta(flat.begin() + static_cast<std::ptrdiff_t>(5 * M), flat.end());
    unflatten_parameters(theta, params);
}

}  // namespace proprio
