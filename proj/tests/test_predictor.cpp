#include <cmath>
#include <stdexcept>

#include <doctest.h>

#include "proprio/data.hpp"
#include "proprio/grad.hpp"
#include "proprio/predictor.hpp"
#include "proprio/rng.hpp"

using namespace proprio;

namespace {

std::vector<SignalVector> random_signals(int batch, int width, Rng& rng) {
    std::vector<SignalVector> signals(static_cast<std::size_t>(batch));
    for (auto& s : signals) {
        s.values.resize(static_cast<std::size_t>(width));
        for (double& v : s.values) v = rng.uniform(10.0, 300.0);
    }
    return signals;
}

BaseShape flat_base(int m, int n, double extent) {
    BaseShape base;
    base.m = m;
    base.n = n;
    base.control_points = make_flat_surface(m, n, extent, extent).control_points;
    return base;
}

}  // namespace

TEST_SUITE_BEGIN("predictor");

TEST_CASE("initialization is deterministic and correctly sized") {
    const PredictorParams a = init_predictor(20, 15, 15, 7);
    const PredictorParams b = init_predictor(20, 15, 15, 7);
    CHECK(flatten_parameters(a) == flatten_parameters(b));

    const PredictorParams c = init_predictor(20, 15, 15, 8);
    CHECK(flatten_parameters(a) != flatten_parameters(c));

    // 20*36+36 + 2*(36*36+36) + 36*675+675 + 2*3*36
    CHECK(a.parameter_count() == 28611);
    CHECK(static_cast<int>(flatten_parameters(a).size()) == 28611);

    CHECK(a.layers[0].in == 20);
    CHECK(a.layers[0].out == 36);
    CHECK(a.layers[3].out == 3 * 15 * 15);
    for (const auto& norm : a.norms) {
        for (const double g : norm.gamma) CHECK(g == 1.0);
        for (const double v : norm.running_var) CHECK(v == 1.0);
    }
}

TEST_CASE("zero weights predict the base shape exactly") {
    PredictorParams params = init_predictor(5, 5, 5, 1);
    for (auto& layer : params.layers) {
        std::fill(layer.weights.begin(), layer.weights.end(), 0.0);
        std::fill(layer.bias.begin(), layer.bias.end(), 0.0);
    }
    const BaseShape base = flat_base(5, 5, 200.0);
    Rng rng(3);
    const auto signals = random_signals(4, 5, rng);

    SUBCASE("training mode") {
        const auto predicted = predictor_forward(params, signals, base);
        for (const ControlGrid& grid : predicted)
            for (std::size_t p = 0; p < grid.size(); ++p) {
                CHECK(grid[p].x == base.control_points[p].x);
                CHECK(grid[p].y == base.control_points[p].y);
                CHECK(grid[p].z == base.control_points[p].z);
            }
    }
    SUBCASE("inference mode") {
        params.mode = PredictorMode::kInference;
        const auto predicted = predictor_forward(params, signals, base);
        CHECK(predicted[0][7].z == base.control_points[7].z);
    }
}

TEST_CASE("output dimensionality follows the grid") {
    const PredictorParams params = init_predictor(20, 30, 30, 2);
    CHECK(params.output_dim() == 2700);
    const BaseShape base = flat_base(30, 30, 300.0);
    Rng rng(5);
    const auto predicted = predictor_forward(params, random_signals(2, 20, rng), base);
    CHECK(predicted[0].size() == 900);
}

TEST_CASE("mode preconditions") {
    PredictorParams params = init_predictor(4, 5, 5, 9);
    const BaseShape base = flat_base(5, 5, 100.0);
    Rng rng(7);
    CHECK_THROWS_AS(predictor_forward(params, random_signals(1, 4, rng), base), std::invalid_argument);

    params.mode = PredictorMode::kInference;
    CHECK_NOTHROW(predictor_forward(params, random_signals(1, 4, rng), base));

    const auto bad = random_signals(2, 3, rng);
    CHECK_THROWS_AS(predictor_forward(params, bad, base), std::invalid_argument);
}

TEST_CASE("inference is a pure function") {
    PredictorParams params = init_predictor(6, 6, 6, 11);
    params.mode = PredictorMode::kInference;
    const BaseShape base = flat_base(6, 6, 150.0);
    Rng rng(13);
    const auto signals = random_signals(3, 6, rng);
    const auto first = predictor_forward(params, signals, base);
    const auto second = predictor_forward(params, signals, base);
    for (std::size_t b = 0; b < first.size(); ++b)
        for (std::size_t p = 0; p < first[b].size(); ++p) {
            CHECK(first[b][p].x == second[b][p].x);
            CHECK(first[b][p].z == second[b][p].z);
        }
}

TEST_CASE("training stats folded with momentum 1 reproduce the training output") {
    PredictorParams params = init_predictor(5, 5, 5, 17);
    const BaseShape base = flat_base(5, 5, 120.0);
    Rng rng(19);
    const auto signals = random_signals(6, 5, rng);

    BatchStats stats;
    const auto train_out = predictor_forward(params, signals, base, &stats);
    apply_batch_stats(params, stats, 1.0);
    params.mode = PredictorMode::kInference;
    const auto infer_out = predictor_forward(params, signals, base);

    for (std::size_t b = 0; b < train_out.size(); ++b)
        for (std::size_t p = 0; p < train_out[b].size(); ++p)
            CHECK(norm(train_out[b][p] - infer_out[b][p]) <= 1e-10);
}

TEST_CASE("fresh zero-weight network baseline equals the mean deviation from base") {
    GenConfig gen;
    gen.m = gen.n = 6;
    gen.width_mm = gen.height_mm = 200.0;
    gen.count = 12;
    gen.modes = 4;
    gen.amplitude_mm = 25.0;
    gen.seed = 23;
    const ShapeDataset ds = generate_synthetic_dataset(gen);
    const BaseShape base = base_shape(ds);

    PredictorParams params = init_predictor(3, 6, 6, 29);
    for (auto& layer : params.layers) std::fill(layer.weights.begin(), layer.weights.end(), 0.0);

    SensorLayout layout;
    layout.alpha = 10.0;
    layout.sensors = {{0, 0, 1, 1}, {0.5, 0, 0.5, 1}, {0, 0.5, 1, 0.5}};
    layout.logits = {0, 0, 0};

    std::vector<SignalVector> signals;
    for (int s = 0; s < ds.count(); ++s) signals.push_back(signal_vector(shape_surface(ds, s), layout, 16));
    const auto predicted = predictor_forward(params, signals, base);
    const double loss = loss_recon(predicted, ds.shapes, ds.m, ds.n);

    double direct = 0.0;
    for (const ControlGrid& grid : ds.shapes)
        for (std::size_t p = 0; p < grid.size(); ++p) direct += squared_norm(grid[p] - base.control_points[p]);
    direct /= (static_cast<double>(ds.m) * ds.n * ds.count());
    CHECK(std::abs(loss - direct) <= 1e-10 * std::max(1.0, direct));
}

TEST_CASE("backward matches finite differences on a tiny network") {
    const int M = 2, m = 4, n = 4;
    const BaseShape base = flat_base(m, n, 90.0);

    for (const std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL, 5ULL, 6ULL, 7ULL, 8ULL, 9ULL, 10ULL}) {
        PredictorParams params = init_predictor(M, m, n, seed);
        // jitter so batch-norm shifts are nonzero and ReLUs sit away from
        // kinks; shrink the output layer so the residual (and with it the
        // finite-difference cancellation noise) stays small
        Rng rng(seed * 31 + 1);
        std::vector<double> theta = flatten_parameters(params);
        for (double& t : theta) t += rng.uniform(-0.05, 0.05);
        unflatten_parameters(theta, params);
        for (double& w : params.layers[kHiddenLayers].weights) w *= 0.05;

        const auto signals = random_signals(2, M, rng);
        ControlGrid target = base.control_points;
        for (Vec3& p : target) p += {rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5)};

        // scalar objective: recon of batch against (target, target)
        const std::vector<ControlGrid> truth{target, target};
        const auto objective = [&](const PredictorParams& candidate) {
            const auto out = predictor_forward(candidate, signals, base);
            return loss_recon(out, truth, m, n);
        };

        PredictorForwardState state;
        const auto predicted = predictor_forward(params, signals, base, nullptr, &state);
        const double scale = 2.0 / (static_cast<double>(m) * n * 2);
        std::vector<ControlGrid> upstream(2);
        for (int b = 0; b < 2; ++b) {
            upstream[static_cast<std::size_t>(b)].resize(target.size());
            for (std::size_t p = 0; p < target.size(); ++p)
                upstream[static_cast<std::size_t>(b)][p] =
                    scale * (predicted[static_cast<std::size_t>(b)][p] - truth[static_cast<std::size_t>(b)][p]);
        }
        const PredictorGradients grads = predictor_backward(params, state, upstream);
        const std::vector<double> analytic = flatten_gradients(grads);

        const std::vector<double> x = flatten_parameters(params);
        const auto f = [&](const std::vector<double>& probe) {
            PredictorParams candidate = params;
            unflatten_parameters(probe, candidate);
            return objective(candidate);
        };
        // two-sample batch norm pins the normalized activations to +-1, so
        // hidden-weight slopes are epsilon-scale; hold those to the
        // finite-difference noise floor rather than a pure ratio
        const double f0 = objective(params);
        const double noise_floor = 300.0 * f0 * 2.22e-16 / 2e-6 / 1e-4;
        const double err = finite_difference_check(f, x, analytic, 1e-6, noise_floor);
        CHECK(err <= 1e-4);
    }
}

TEST_CASE("backward propagates into the input signals") {
    const int M = 4, m = 4, n = 4;
    const BaseShape base = flat_base(m, n, 90.0);
    Rng rng(43);
    PredictorParams params = init_predictor(M, m, n, 43);
    const auto signals = random_signals(3, M, rng);

    PredictorForwardState state;
    const auto predicted = predictor_forward(params, signals, base, nullptr, &state);

    std::vector<ControlGrid> upstream(3, ControlGrid(static_cast<std::size_t>(m) * n));
    SUBCASE("zero upstream gives zero gradients") {
        const PredictorGradients grads = predictor_backward(params, state, upstream);
        for (const double g : flatten_gradients(grads)) CHECK(g == 0.0);
        for (const double g : grads.d_signals) CHECK(g == 0.0);
    }
    SUBCASE("generic upstream reaches every input slot") {
        Rng noise(47);
        for (auto& grid : upstream)
            for (Vec3& p : grid) p = {noise.uniform(-1, 1), noise.uniform(-1, 1), noise.uniform(-1, 1)};
        const PredictorGradients grads = predictor_backward(params, state, upstream);
        double magnitude = 0.0;
        for (const double g : grads.d_signals) magnitude += std::abs(g);
        CHECK(magnitude > 0.0);
        CHECK(grads.d_signals.size() == 3 * 4);
    }
}

TEST_CASE("serialization round trip and dimension validation") {
    PredictorParams params = init_predictor(5, 6, 7, 57);
    params.norms[1].running_mean[3] = 0.25;
    params.norms[2].running_var[11] = 2.5;
    const std::string text = predictor_to_json(params);
    const PredictorParams back = predictor_from_json(text);
    CHECK(flatten_parameters(back) == flatten_parameters(params));
    CHECK(back.norms[1].running_mean[3] == 0.25);
    CHECK(back.norms[2].running_var[11] == 2.5);
    CHECK(back.input_dim == 5);
    CHECK(back.grid_m == 6);
    CHECK(back.grid_n == 7);

    // corrupting the version or a dimension is rejected
    std::string bad = text;
    bad.replace(bad.find("\"format_version\":1"), 18, "\"format_version\":9");
    CHECK_THROWS(predictor_from_json(bad));
}

TEST_SUITE_END();
