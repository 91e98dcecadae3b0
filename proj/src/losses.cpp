#include "proprio/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace proprio {

double loss_recon(const std::vector<ControlGrid>& predicted, const std::vector<ControlGrid>& truth, int m,
                  int n) {
    if (predicted.size() != truth.size() || predicted.empty())
        throw std::invalid_argument("loss_recon needs equally sized, nonempty batches");
    const std::size_t grid_size = static_cast<std::size_t>(m) * static_cast<std::size_t>(n);
    double sum = 0.0;
    for (std::size_t s = 0; s < predicted.size(); ++s) {
        if (predicted[s].size() != grid_size || truth[s].size() != grid_size)
            throw std::invalid_argument("loss_recon grid does not match m*n");
        for (std::size_t i = 0; i < grid_size; ++i) sum += squared_norm(predicted[s][i] - truth[s][i]);
    }
    return sum / (static_cast<double>(grid_size) * static_cast<double>(predicted.size()));
}

namespace {

/// cross(a, b) / (|a| |b|): the sine of the angle between the two vectors.
/// Raw cross products scale with the segment lengths (the indicator would be
/// quartic in them), which starves short-sensor crossings of restoring
/// gradient; the sine form is scale-free in [-1, 1] with the same sign.
double crossing_sine(double ax, double ay, double bx, double by) {
    const double cross = ax * by - ay * bx;
    const double denom = std::sqrt((ax * ax + ay * ay) * (bx * bx + by * by));
    return denom > 0.0 ? cross / denom : 0.0;
}

}  // namespace

std::pair<double, double> overlap_terms(const Sensor& s1, const Sensor& s2) {
    const double us1 = s1.u_s, vs1 = s1.v_s, ue1 = s1.u_e, ve1 = s1.v_e;
    const double us2 = s2.u_s, vs2 = s2.v_s, ue2 = s2.u_e, ve2 = s2.v_e;
    // f1: endpoints of the first sensor on opposite sides of the second;
    // f2: the reverse. Positive products exactly when the segments cross.
    const double f1 = crossing_sine(ue1 - ue2, ve1 - ve2, ue2 - us2, ve2 - vs2) *
                      crossing_sine(ue2 - us1, ve2 - vs1, ue2 - us2, ve2 - vs2);
    const double f2 = crossing_sine(ue1 - ue2, ve1 - ve2, ue1 - us1, ve1 - vs1) *
                      crossing_sine(ue1 - us1, ve1 - vs1, ue1 - us2, ve1 - vs2);
    return {f1, f2};
}

namespace {

double orient(double ax, double ay, double bx, double by, double cx, double cy) {
    return (bx - ax) * (cy - ay) - (by - ay) * (cx - ax);
}

}  // namespace

bool segments_properly_cross(const Sensor& s1, const Sensor& s2) {
    const double d1 = orient(s2.u_s, s2.v_s, s2.u_e, s2.v_e, s1.u_s, s1.v_s);
    const double d2 = orient(s2.u_s, s2.v_s, s2.u_e, s2.v_e, s1.u_e, s1.v_e);
    const double d3 = orient(s1.u_s, s1.v_s, s1.u_e, s1.v_e, s2.u_s, s2.v_s);
    const double d4 = orient(s1.u_s, s1.v_s, s1.u_e, s1.v_e, s2.u_e, s2.v_e);
    return d1 * d2 < 0.0 && d3 * d4 < 0.0;
}

double loss_overlap(const Sensor& s1, const Sensor& s2, double alpha) {
    const auto [f1, f2] = overlap_terms(s1, s2);
    return 0.25 * (1.0 + std::tanh(alpha * f1)) * (1.0 + std::tanh(alpha * f2));
}

double exact_min_distance(const BSplineSurface& surface, const Sensor& s1, const Sensor& s2, int K) {
    const std::vector<UV> a = sample_uv(s1, K);
    const std::vector<UV> b = sample_uv(s2, K);
    std::vector<Vec3> pa(a.size());
    std::vector<Vec3> pb(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) pa[i] = surface_point(surface, a[i].u, a[i].v);
    for (std::size_t i = 0; i < b.size(); ++i) pb[i] = surface_point(surface, b[i].u, b[i].v);
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3& p : pa)
        for (const Vec3& q : pb) best = std::min(best, norm(p - q));
    return best;
}

double soft_min_distance(const BSplineSurface& surface, const Sensor& s1, const Sensor& s2, int K,
                         double beta_per_mm) {
    if (beta_per_mm <= 0.0) throw std::invalid_argument("soft-min temperature must be positive");
    const std::vector<UV> a = sample_uv(s1, K);
    const std::vector<UV> b = sample_uv(s2, K);
    std::vector<Vec3> pa(a.size());
    std::vector<Vec3> pb(b.size());
    for (std::size_t i = 0; i < a.size(); ++i) pa[i] = surface_point(surface, a[i].u, a[i].v);
    for (std::size_t i = 0; i < b.size(); ++i) pb[i] = surface_point(surface, b[i].u, b[i].v);

    std::vector<double> dist(pa.size() * pb.size());
    double min_dist = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < pa.size(); ++i)
        for (std::size_t j = 0; j < pb.size(); ++j) {
            const double d = norm(pa[i] - pb[j]);
            dist[i * pb.size() + j] = d;
            min_dist = std::min(min_dist, d);
        }

    double sum = 0.0;
    for (const double d : dist) sum += std::exp(-beta_per_mm * (d - min_dist));
    return min_dist - std::log(sum) / beta_per_mm;
}

double loss_min_space(const BSplineSurface& surface, const Sensor& s1, const Sensor& s2,
                      const LossConfig& cfg) {
    const double d = soft_min_distance(surface, s1, s2, cfg.K, cfg.beta_per_mm);
    const double gap = cfg.tau_mm - d;
    return gap > 0.0 ? gap * gap : 0.0;
}

double loss_total_length(const BSplineSurface& surface, const SensorLayout& layout, int K) {
    double sum = 0.0;
    for (int k = 0; k < layout.size(); ++k)
        sum += project_occupancy(layout.logits[static_cast<std::size_t>(k)], layout.alpha) *
               sensor_length(surface, layout.sensors[static_cast<std::size_t>(k)], K);
    return sum;
}

double loss_min_length(const BSplineSurface& surface, const SensorLayout& layout, const LossConfig& cfg) {
    double sum = 0.0;
    for (int k = 0; k < layout.size(); ++k) {
        const double l = sensor_length(surface, layout.sensors[static_cast<std::size_t>(k)], cfg.K);
        const double gap = cfg.l_min_mm - l;
        if (gap > 0.0)
            sum += project_occupancy(layout.logits[static_cast<std::size_t>(k)], layout.alpha) * gap * gap;
    }
    return sum;
}

LossBreakdown loss_total(const std::vector<ControlGrid>& truth, const std::vector<ControlGrid>& predicted,
                         const SensorLayout& layout, const LossConfig& cfg, int m, int n) {
    if (truth.empty()) throw std::invalid_argument("loss_total needs a nonempty batch");
    LossBreakdown out;
    out.recon = loss_recon(predicted, truth, m, n);

    const BSplineSurface anchor = make_surface(m, n, truth.front());
    out.total_length = loss_total_length(anchor, layout, cfg.K);
    out.min_length = loss_min_length(anchor, layout, cfg);

    std::vector<double> mask(static_cast<std::size_t>(layout.size()));
    for (int k = 0; k < layout.size(); ++k)
        mask[static_cast<std::size_t>(k)] = project_occupancy(layout.logits[static_cast<std::size_t>(k)], layout.alpha);

    for (int i = 0; i < layout.size(); ++i) {
        for (int j = i + 1; j < layout.size(); ++j) {
            const double hh = mask[static_cast<std::size_t>(i)] * mask[static_cast<std::size_t>(j)];
            out.overlap += hh * loss_overlap(layout.sensors[static_cast<std::size_t>(i)],
                                             layout.sensors[static_cast<std::size_t>(j)], cfg.alpha);
            out.min_space += hh * loss_min_space(anchor, layout.sensors[static_cast<std::size_t>(i)],
                                                 layout.sensors[static_cast<std::size_t>(j)], cfg);
        }
    }

    out.total = out.recon + cfg.w_t * out.total_length + cfg.w_m * out.min_length + cfg.w_p * out.overlap +
                cfg.w_s * out.min_space;
    return out;
}

}  // namespace proprio
