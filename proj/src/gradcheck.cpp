#include "proprio/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

#include "proprio/rng.hpp"

namespace proprio {

namespace {

struct Fixture {
    int m = 5;
    int n = 5;
    std::vector<ControlGrid> truth;
    SensorLayout layout;
    PredictorParams params;
    BaseShape base;
    LossConfig cfg;
};

// Probe steps shift a pre-activation by |d pre-act / d coordinate| * h, and
// the largest such sensitivities run through mm-scale sensor lengths
// (~few hundred per unit coordinate), so the kink guard must clear that.
constexpr double kReluGuard = 2e-3;
constexpr double kThresholdGuard = 1e-3;

bool fixture_is_guarded(const Fixture& fixture, const TotalLossState& state) {
    for (int l = 0; l < kHiddenLayers; ++l) {
        const auto& hidden = state.predictor_state.hidden[static_cast<std::size_t>(l)];
        const auto& norm = fixture.params.norms[static_cast<std::size_t>(l)];
        for (std::size_t idx = 0; idx < hidden.xhat.size(); ++idx) {
            const std::size_t f = idx % kHiddenWidth;
            const double pre_relu = norm.gamma[f] * hidden.xhat[idx] + norm.shift[f];
            if (std::abs(pre_relu) < kReluGuard) return false;
        }
    }
    for (const auto& pair : state.pairs)
        if (std::abs(fixture.cfg.tau_mm - pair.soft_min) < kThresholdGuard) return false;
    for (const auto& samples : state.samples[0])
        if (std::abs(fixture.cfg.l_min_mm - samples.length) < kThresholdGuard) return false;
    return true;
}

Fixture make_fixture(const Rng& parent) {
    for (int attempt = 0; attempt < 400; ++attempt) {
        Rng rng = parent.substream("attempt", static_cast<std::uint64_t>(attempt));

        Fixture fixture;
        fixture.cfg.K = 8;

        GenConfig gen;
        gen.m = fixture.m;
        gen.n = fixture.n;
        gen.width_mm = 120.0;
        gen.height_mm = 120.0;
        gen.count = 6;
        gen.modes = 3;
        gen.amplitude_mm = 0.3;
        gen.seed = rng.next_u64();
        const ShapeDataset ds = generate_synthetic_dataset(gen);
        fixture.truth = ds.shapes;
        fixture.base = base_shape(ds);

        const int M = 4;
        fixture.layout.alpha = fixture.cfg.alpha;
        fixture.layout.sensors.resize(M);
        fixture.layout.logits.resize(M);
        for (int k = 0; k < M; ++k) {
            fixture.layout.sensors[static_cast<std::size_t>(k)] = {rng.uniform(0.12, 0.88), rng.uniform(0.12, 0.88),
                                                                   rng.uniform(0.12, 0.88), rng.uniform(0.12, 0.88)};
            fixture.layout.logits[static_cast<std::size_t>(k)] = rng.uniform(-1.0, 1.0);
        }

        fixture.params = init_predictor(M, fixture.m, fixture.n, rng.next_u64());
        // jitter all parameters so batch-norm shifts and biases are generic,
        // and shrink the output layer so the reconstruction residual stays
        // small (keeps the central-difference cancellation noise well below
        // the gradient magnitudes being verified)
        std::vector<double> theta = flatten_parameters(fixture.params);
        for (double& value : theta) value += rng.uniform(-0.1, 0.1);
        unflatten_parameters(theta, fixture.params);
        for (double& w : fixture.params.layers[kHiddenLayers].weights) w *= 0.05;

        const TotalLossState state = forward_total(fixture.truth, fixture.m, fixture.n, fixture.layout,
                                                   fixture.params, fixture.base, fixture.cfg, MaskMode::kSmooth);
        if (fixture_is_guarded(fixture, state)) return fixture;
    }
    throw std::runtime_error("could not draw a guarded gradient-check fixture");
}

struct Target {
    const char* name;
    TermWeights weights;
    double LossBreakdown::* field;
};

const Target kTargets[] = {
    {"recon", {1, 0, 0, 0, 0}, &LossBreakdown::recon},
    {"total_length", {0, 1, 0, 0, 0}, &LossBreakdown::total_length},
    {"min_length", {0, 0, 1, 0, 0}, &LossBreakdown::min_length},
    {"overlap", {0, 0, 0, 1, 0}, &LossBreakdown::overlap},
    {"min_space", {0, 0, 0, 0, 1}, &LossBreakdown::min_space},
    {"total", {}, &LossBreakdown::total},
};

}  // namespace

std::vector<GradCheckRow> run_gradient_checks(const GradCheckOptions& options) {
    const Rng master(options.seed);
    std::vector<GradCheckRow> rows;

    for (const Target& target : kTargets) {
        if (!options.only.empty() && options.only != target.name) continue;
        GradCheckRow row;
        row.name = target.name;

        for (int point = 0; point < options.points; ++point) {
            const Fixture fixture = make_fixture(master.substream(target.name).substream("point", static_cast<std::uint64_t>(point)));
            const TotalLossState state = forward_total(fixture.truth, fixture.m, fixture.n, fixture.layout,
                                                       fixture.params, fixture.base, fixture.cfg, MaskMode::kSmooth);
            const TermWeights weights = std::string(target.name) == "total"
                                            ? TermWeights::from_config(fixture.cfg)
                                            : target.weights;
            const std::vector<double> analytic = backward_total(state, weights).flatten();
            const std::vector<double> x = pack_variables(fixture.layout, fixture.params);

            const auto f = [&fixture, &target](const std::vector<double>& probe) {
                SensorLayout layout = fixture.layout;
                PredictorParams params = fixture.params;
                unpack_variables(probe, layout, params);
                const TotalLossState probe_state = forward_total(fixture.truth, fixture.m, fixture.n, layout,
                                                                 params, fixture.base, fixture.cfg, MaskMode::kSmooth);
                return probe_state.breakdown.*(target.field);
            };
            // A central difference of f cannot resolve slopes below the
            // rounding noise |f|*eps/(2h); coordinates down there (notably
            // the pre-batch-norm biases, whose true gradient is identically
            // zero) are held to that absolute scale instead of a pure ratio.
            const double f0 = std::abs(state.breakdown.*(target.field));
            const double noise_floor = 300.0 * f0 * 2.22e-16 / (2.0 * options.h) / options.tolerance;
            row.max_rel_error =
                std::max(row.max_rel_error, finite_difference_check(f, x, analytic, options.h, noise_floor));
        }

        row.passed = row.max_rel_error <= options.tolerance;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace proprio
