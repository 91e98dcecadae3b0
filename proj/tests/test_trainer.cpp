#include <cmath>
#include <stdexcept>

#include <doctest.h>

#include "proprio/rng.hpp"
#include "proprio/trainer.hpp"

using namespace proprio;

namespace {

struct TinySetup {
    ShapeDataset train;
    ShapeDataset test;
    BaseShape base;
    SensorLayout layout;
    TrainConfig cfg;
};

TinySetup make_tiny(std::uint64_t seed, int count = 24, int sensors = 6) {
    GenConfig gen;
    gen.m = gen.n = 6;
    gen.width_mm = gen.height_mm = 200.0;
    gen.count = count;
    gen.modes = 4;
    gen.amplitude_mm = 20.0;
    gen.seed = seed;
    const ShapeDataset ds = generate_synthetic_dataset(gen);

    TinySetup setup;
    auto [train, test] = split_dataset(ds, 0.8, seed);
    setup.train = std::move(train);
    setup.test = std::move(test);
    setup.base = base_shape(ds);

    Rng rng = Rng(seed).substream("layout-init");
    setup.layout = make_random_layout(sensors, 10.0, rng);

    setup.cfg.epochs = 2;
    setup.cfg.batch_size = 8;
    setup.cfg.seed = seed;
    setup.cfg.sensors = sensors;
    setup.cfg.loss.K = 8;
    return setup;
}

}  // namespace

TEST_SUITE_BEGIN("trainer");

TEST_CASE("adam single step on a quadratic") {
    std::vector<double> x{1.0};
    AdamState state;
    adam_step(x, {2.0}, state, 0.1);  // gradient of x^2 at 1
    CHECK(x[0] == doctest::Approx(0.9).epsilon(1e-7));
    CHECK(state.step == 1);

    SUBCASE("zero gradient leaves parameters unchanged, moments decay") {
        std::vector<double> y{0.5};
        AdamState s2;
        adam_step(y, {0.0}, s2, 0.1);
        CHECK(y[0] == 0.5);
        CHECK(s2.m[0] == 0.0);

        adam_step(y, {1.0}, s2, 0.1);
        const double m_after = s2.m[0];
        adam_step(y, {0.0}, s2, 0.1);
        CHECK(std::abs(s2.m[0]) < std::abs(m_after));
    }

    SUBCASE("size mismatches are rejected") {
        std::vector<double> z{1.0, 2.0};
        AdamState s3;
        CHECK_THROWS_AS(adam_step(z, {1.0}, s3, 0.1), std::invalid_argument);
    }
}

TEST_CASE("adam drives a quadratic toward its minimum") {
    std::vector<double> x{1.0};
    AdamState state;
    for (int t = 0; t < 300; ++t) adam_step(x, {2.0 * x[0]}, state, 0.05);
    CHECK(std::abs(x[0]) < 0.02);
}

TEST_CASE("steps per epoch follows the ceil plan with singleton rebalance") {
    CHECK(steps_per_epoch(1600, 16) == 100);
    CHECK(steps_per_epoch(20, 8) == 3);   // 8 + 8 + 4
    CHECK(steps_per_epoch(17, 8) == 3);   // 8 + 7 + 2 after rebalance
    CHECK_THROWS_AS(steps_per_epoch(9, 2), std::invalid_argument);
    CHECK_THROWS_AS(steps_per_epoch(10, 1), std::invalid_argument);
}

TEST_CASE("zero epochs returns the initial state untouched") {
    TinySetup setup = make_tiny(5);
    setup.cfg.epochs = 0;
    const TrainReport report = co_optimize(setup.train, setup.test, setup.base, setup.layout, setup.cfg);
    CHECK(report.steps.empty());
    CHECK(report.epochs.empty());
    REQUIRE(report.final_layout.size() == setup.layout.size());
    for (int k = 0; k < setup.layout.size(); ++k) {
        CHECK(report.final_layout.sensors[static_cast<std::size_t>(k)].u_s ==
              setup.layout.sensors[static_cast<std::size_t>(k)].u_s);
        CHECK(report.final_layout.logits[static_cast<std::size_t>(k)] ==
              setup.layout.logits[static_cast<std::size_t>(k)]);
    }
    const PredictorParams expected =
        init_predictor(setup.layout.size(), setup.train.m, setup.train.n, setup.cfg.seed);
    CHECK(flatten_parameters(report.final_params) == flatten_parameters(expected));
}

TEST_CASE("co-optimization logs every step and stays in the constraint box") {
    TinySetup setup = make_tiny(7);
    setup.cfg.constraint_mode = ConstraintMode::kHalfDomain;

    int callbacks = 0;
    const TrainReport report = co_optimize(
        setup.train, setup.test, setup.base, setup.layout, setup.cfg,
        [&](int epoch, const SensorLayout& layout, const PredictorParams&, const EpochRecord& record) {
            ++callbacks;
            CHECK(record.epoch == epoch);
            for (const Sensor& s : layout.sensors) {
                CHECK(s.u_s <= 0.5 + 1e-12);
                CHECK(s.u_e <= 0.5 + 1e-12);
                CHECK(s.v_s >= 0.0);
                CHECK(s.v_e <= 1.0);
            }
        });

    CHECK(callbacks == 2);
    CHECK(static_cast<int>(report.steps.size()) ==
          setup.cfg.epochs * steps_per_epoch(setup.train.count(), setup.cfg.batch_size));
    CHECK(report.epochs.size() == 2);
    for (const StepRecord& row : report.steps) {
        CHECK(std::isfinite(row.loss.total));
        CHECK(row.loss.total >= row.loss.recon);
    }
    CHECK_FALSE(report.aborted);
    CHECK(report.wall_seconds > 0.0);
}

TEST_CASE("identical seeds give bitwise-identical reports") {
    const TinySetup a = make_tiny(11);
    const TinySetup b = make_tiny(11);
    const TrainReport ra = co_optimize(a.train, a.test, a.base, a.layout, a.cfg);
    const TrainReport rb = co_optimize(b.train, b.test, b.base, b.layout, b.cfg);
    CHECK(steps_csv(ra) == steps_csv(rb));
    CHECK(epochs_csv(ra) == epochs_csv(rb));
    CHECK(layout_to_json(ra.final_layout) == layout_to_json(rb.final_layout));
    CHECK(flatten_parameters(ra.final_params) == flatten_parameters(rb.final_params));
}

TEST_CASE("mirrored pairs stay exactly mirror-symmetric") {
    TinySetup setup = make_tiny(13);
    setup.cfg.constraint_mode = ConstraintMode::kMirroredPairs;
    const TrainReport report = co_optimize(setup.train, setup.test, setup.base, setup.layout, setup.cfg);
    const SensorLayout& layout = report.final_layout;
    for (int k = 0; k + 1 < layout.size(); k += 2) {
        CHECK(layout.sensors[static_cast<std::size_t>(k + 1)].u_s ==
              1.0 - layout.sensors[static_cast<std::size_t>(k)].u_s);
        CHECK(layout.sensors[static_cast<std::size_t>(k + 1)].u_e ==
              1.0 - layout.sensors[static_cast<std::size_t>(k)].u_e);
        CHECK(layout.sensors[static_cast<std::size_t>(k + 1)].v_s ==
              layout.sensors[static_cast<std::size_t>(k)].v_s);
        CHECK(layout.logits[static_cast<std::size_t>(k + 1)] == layout.logits[static_cast<std::size_t>(k)]);
    }
}

TEST_CASE("supervised predictor-only training reduces the test loss") {
    TinySetup setup = make_tiny(17, 96);
    setup.cfg.epochs = 16;
    setup.cfg.learning_rate = 0.02;
    std::vector<Sensor> sensors = {{0.1, 0.1, 0.9, 0.9}, {0.1, 0.9, 0.9, 0.1}, {0.5, 0.05, 0.5, 0.95},
                                   {0.05, 0.5, 0.95, 0.5}};
    const PredictorOnlyResult result =
        train_predictor_only(setup.train, setup.test, setup.base, sensors, setup.cfg);
    REQUIRE(result.test_recon_per_epoch.size() == 16);
    // inference-mode evaluations are noisy under minibatch batch norm;
    // compare the best of the last epochs against the first
    double late = result.test_recon_per_epoch.back();
    for (std::size_t e = result.test_recon_per_epoch.size() - 5; e < result.test_recon_per_epoch.size(); ++e)
        late = std::min(late, result.test_recon_per_epoch[e]);
    CHECK(late < result.test_recon_per_epoch.front());
}

TEST_CASE("evaluation metrics") {
    GenConfig gen;
    gen.m = gen.n = 5;
    gen.width_mm = gen.height_mm = 150.0;
    gen.count = 4;
    gen.amplitude_mm = 0.0;  // every shape equals the base
    gen.seed = 23;
    const ShapeDataset ds = generate_synthetic_dataset(gen);
    const BaseShape base = base_shape(ds);

    SensorLayout layout;
    layout.alpha = 10.0;
    layout.sensors = {{0, 0, 1, 1}, {0, 1, 1, 0}};
    layout.logits = {0.0, 0.0};

    PredictorParams params = init_predictor(2, 5, 5, 29);
    for (auto& layer : params.layers) std::fill(layer.weights.begin(), layer.weights.end(), 0.0);

    SUBCASE("exact prediction gives all-zero metrics") {
        const EvalMetrics metrics = evaluate(ds, base, layout, params, 10, 8);
        CHECK(metrics.max_of_avg_mm == 0.0);
        CHECK(metrics.mean_of_avg_mm == 0.0);
        for (const double v : metrics.per_shape_max_mm) CHECK(v == 0.0);
    }

    SUBCASE("constant control-point offset moves every surface point by it") {
        // output bias (1,0,0) on every control point: prediction = truth + (1,0,0)
        for (std::size_t p = 0; p < params.layers[3].bias.size(); p += 3) params.layers[3].bias[p] = 1.0;
        const EvalMetrics metrics = evaluate(ds, base, layout, params, 12, 8);
        for (std::size_t s = 0; s < metrics.per_shape_avg_mm.size(); ++s) {
            CHECK(metrics.per_shape_avg_mm[s] == doctest::Approx(1.0).epsilon(1e-10));
            CHECK(metrics.per_shape_max_mm[s] == doctest::Approx(1.0).epsilon(1e-10));
        }
        CHECK(metrics.max_of_avg_mm == doctest::Approx(1.0).epsilon(1e-10));
    }

    SUBCASE("metrics match a naive per-sample recomputation") {
        Rng rng(31);
        PredictorParams noisy = init_predictor(2, 5, 5, 37);
        const EvalMetrics metrics = evaluate(ds, base, layout, noisy, 7, 8);

        PredictorParams inference = noisy;
        inference.mode = PredictorMode::kInference;
        for (int s = 0; s < ds.count(); ++s) {
            // binarized signal convention: raw lengths for active sensors
            SignalVector sig;
            for (int k = 0; k < layout.size(); ++k)
                sig.values.push_back(layout.logits[static_cast<std::size_t>(k)] >= 0.0
                                         ? sensor_length(shape_surface(ds, s),
                                                         layout.sensors[static_cast<std::size_t>(k)], 8)
                                         : 0.0);
            std::vector<SignalVector> one{sig};
            const auto predicted = predictor_forward(inference, one, base);
            const BSplineSurface pred_surface = make_surface(5, 5, predicted[0]);
            const BSplineSurface truth_surface = shape_surface(ds, s);
            double sum = 0.0;
            double peak = 0.0;
            for (int i = 0; i < 7; ++i)
                for (int j = 0; j < 7; ++j) {
                    const double u = i / 6.0;
                    const double v = j / 6.0;
                    const double d =
                        norm(surface_point(pred_surface, u, v) - surface_point(truth_surface, u, v));
                    sum += d;
                    peak = std::max(peak, d);
                }
            CHECK(metrics.per_shape_avg_mm[static_cast<std::size_t>(s)] ==
                  doctest::Approx(sum / 49.0).epsilon(1e-12));
            CHECK(metrics.per_shape_max_mm[static_cast<std::size_t>(s)] ==
                  doctest::Approx(peak).epsilon(1e-12));
        }
    }

    SUBCASE("schema mismatches are rejected") {
        const PredictorParams wrong = init_predictor(2, 6, 6, 41);
        CHECK_THROWS_AS(evaluate(ds, base, layout, wrong, 10, 8), std::invalid_argument);
        const PredictorParams wrong_m = init_predictor(3, 5, 5, 43);
        CHECK_THROWS_AS(evaluate(ds, base, layout, wrong_m, 10, 8), std::invalid_argument);
        CHECK_THROWS_AS(evaluate(ds, base, layout, params, 1, 8), std::invalid_argument);
    }
}

TEST_CASE("recon-only co-optimization degenerates to supervised training") {
    TinySetup setup = make_tiny(43, 96);
    setup.cfg.epochs = 24;
    setup.cfg.loss.w_t = setup.cfg.loss.w_m = setup.cfg.loss.w_p = setup.cfg.loss.w_s = 0.0;
    const TrainReport report = co_optimize(setup.train, setup.test, setup.base, setup.layout, setup.cfg);
    REQUIRE(report.epochs.size() == 24);
    for (const StepRecord& row : report.steps) CHECK(row.loss.total == row.loss.recon);

    // training loss falls on a 10-epoch moving average
    const int per_epoch = steps_per_epoch(setup.train.count(), setup.cfg.batch_size);
    const auto window_mean = [&](int first_epoch) {
        double acc = 0.0;
        int count = 0;
        for (int e = first_epoch; e < first_epoch + 10; ++e)
            for (int s = 0; s < per_epoch; ++s) {
                acc += report.steps[static_cast<std::size_t>(e * per_epoch + s)].loss.recon;
                ++count;
            }
        return acc / count;
    };
    CHECK(window_mean(14) < window_mean(0));
}

TEST_SUITE_END();
