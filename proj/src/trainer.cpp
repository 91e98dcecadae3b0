#include "proprio/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "proprio/format.hpp"
#include "proprio/rng.hpp"

namespace proprio {

void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state, double lr) {
    if (params.size() != grads.size()) throw std::invalid_argument("adam_step size mismatch");
    if (state.m.empty()) {
        state.m.assign(params.size(), 0.0);
        state.v.assign(params.size(), 0.0);
    }
    if (state.m.size() != params.size()) throw std::invalid_argument("adam_step state size mismatch");

    state.step += 1;
    const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.step));
    for (std::size_t i = 0; i < params.size(); ++i) {
        state.m[i] = kAdamBeta1 * state.m[i] + (1.0 - kAdamBeta1) * grads[i];
        state.v[i] = kAdamBeta2 * state.v[i] + (1.0 - kAdamBeta2) * grads[i] * grads[i];
        const double m_hat = state.m[i] / bc1;
        const double v_hat = state.v[i] / bc2;
        params[i] -= lr * m_hat / (std::sqrt(v_hat) + kAdamEpsilon);
    }
}

namespace {

std::vector<int> batch_sizes(int shape_count, int batch_size) {
    if (batch_size < 2) throw std::invalid_argument("training needs batch_size >= 2");
    if (shape_count < 2) throw std::invalid_argument("training needs at least 2 shapes");
    const int steps = (shape_count + batch_size - 1) / batch_size;
    std::vector<int> sizes(static_cast<std::size_t>(steps), batch_size);
    const int last = shape_count - batch_size * (steps - 1);
    sizes.back() = last;
    if (last == 1) {
        // rebalance so the trailing batch still satisfies the batch-norm minimum
        if (steps < 2 || batch_size < 3)
            throw std::invalid_argument("batch plan leaves a singleton batch; adjust batch_size");
        sizes[static_cast<std::size_t>(steps - 2)] = batch_size - 1;
        sizes.back() = 2;
    }
    return sizes;
}

double masked_signal(const SensorLayout& layout, int k, double length, bool binarized) {
    const double h = project_occupancy(layout.logits[static_cast<std::size_t>(k)], layout.alpha);
    if (binarized) return h >= 0.5 ? length : 0.0;
    return h * length;
}

std::vector<SignalVector> dataset_signals(const ShapeDataset& ds, const SensorLayout& layout, int K,
                                          bool binarized) {
    std::vector<SignalVector> signals(static_cast<std::size_t>(ds.count()));
    for (int s = 0; s < ds.count(); ++s) {
        const BSplineSurface surface = shape_surface(ds, s);
        auto& values = signals[static_cast<std::size_t>(s)].values;
        values.resize(static_cast<std::size_t>(layout.size()));
        for (int k = 0; k < layout.size(); ++k) {
            const double length = sensor_length(surface, layout.sensors[static_cast<std::size_t>(k)], K);
            values[static_cast<std::size_t>(k)] = masked_signal(layout, k, length, binarized);
        }
    }
    return signals;
}

double test_reconstruction(const ShapeDataset& test, const BaseShape& base, const SensorLayout& layout,
                           const PredictorParams& params, int K) {
    if (test.count() == 0) return 0.0;
    PredictorParams inference = params;
    inference.mode = PredictorMode::kInference;
    // binarized masks, matching the straight-through convention of training
    const std::vector<SignalVector> signals = dataset_signals(test, layout, K, true);
    const std::vector<ControlGrid> predicted = predictor_forward(inference, signals, base);
    return loss_recon(predicted, test.shapes, test.m, test.n);
}

EpochRecord epoch_diagnostics(int epoch, const ShapeDataset& train, const ShapeDataset& test,
                              const BaseShape& base, const SensorLayout& layout,
                              const PredictorParams& params, const LossConfig& loss_cfg) {
    EpochRecord record;
    record.epoch = epoch;
    const std::vector<int> active = active_sensors(layout);
    record.active_count = static_cast<int>(active.size());

    const BSplineSurface anchor = shape_surface(train, 0);
    record.min_pair_distance_mm = std::numeric_limits<double>::infinity();
    record.min_active_length_mm = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < active.size(); ++a) {
        const Sensor& sa = layout.sensors[static_cast<std::size_t>(active[a])];
        record.min_active_length_mm =
            std::min(record.min_active_length_mm, sensor_length(anchor, sa, loss_cfg.K));
        for (std::size_t b = a + 1; b < active.size(); ++b) {
            const Sensor& sb = layout.sensors[static_cast<std::size_t>(active[b])];
            if (segments_properly_cross(sa, sb)) ++record.intersections;
            record.min_pair_distance_mm =
                std::min(record.min_pair_distance_mm, exact_min_distance(anchor, sa, sb, loss_cfg.K));
        }
    }
    record.test_recon = test_reconstruction(test, base, layout, params, loss_cfg.K);
    return record;
}

}  // namespace

int steps_per_epoch(int shape_count, int batch_size) {
    return static_cast<int>(batch_sizes(shape_count, batch_size).size());
}

TrainReport co_optimize(const ShapeDataset& train, const ShapeDataset& test, const BaseShape& base,
                        const SensorLayout& init_layout, const TrainConfig& cfg,
                        const EpochCallback& on_epoch) {
    if (train.count() == 0) throw std::invalid_argument("co_optimize needs a nonempty training set");
    if (init_layout.size() < 1) throw std::invalid_argument("co_optimize needs at least one sensor");
    const auto start_time = std::chrono::steady_clock::now();

    const Rng master(cfg.seed);
    SensorLayout layout = apply_domain_constraints(init_layout, cfg.constraint_mode);
    PredictorParams params = init_predictor(layout.size(), train.m, train.n, cfg.seed);

    TrainReport report;
    AdamState adam;
    int global_step = 0;

    if (cfg.epochs > 0) (void)batch_sizes(train.count(), cfg.batch_size);  // validate the plan up front

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<int> order(static_cast<std::size_t>(train.count()));
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng = master.substream("shuffle", static_cast<std::uint64_t>(epoch));
        shuffle(order, shuffle_rng);

        const std::vector<int> sizes = batch_sizes(train.count(), cfg.batch_size);
        std::size_t cursor = 0;
        for (const int size : sizes) {
            const SensorLayout layout_checkpoint = layout;
            const PredictorParams params_checkpoint = params;

            std::vector<ControlGrid> batch;
            batch.reserve(static_cast<std::size_t>(size));
            for (int i = 0; i < size; ++i)
                batch.push_back(train.shapes[static_cast<std::size_t>(order[cursor + static_cast<std::size_t>(i)])]);
            cursor += static_cast<std::size_t>(size);

            const TotalLossState state =
                forward_total(batch, train.m, train.n, layout, params, base, cfg.loss,
                              MaskMode::kStraightThrough, &train.shapes.front());
            if (!std::isfinite(state.breakdown.total)) {
                report.aborted = true;
                report.abort_reason = "non-finite loss at step " + std::to_string(global_step + 1);
                report.final_layout = layout_checkpoint;
                report.final_params = params_checkpoint;
                return report;
            }
            const GradientBundle bundle = backward_total(state);
            std::vector<double> grads = bundle.flatten();
            if (std::any_of(grads.begin(), grads.end(), [](double g) { return !std::isfinite(g); })) {
                report.aborted = true;
                report.abort_reason = "non-finite gradient at step " + std::to_string(global_step + 1);
                report.final_layout = layout_checkpoint;
                report.final_params = params_checkpoint;
                return report;
            }

            apply_batch_stats(params, state.batch_stats, kBatchNormMomentum);
            std::vector<double> variables = pack_variables(layout, params);
            adam_step(variables, grads, adam, cfg.learning_rate);
            unpack_variables(variables, layout, params);
            layout = apply_domain_constraints(layout, cfg.constraint_mode);

            ++global_step;
            StepRecord row;
            row.step = global_step;
            row.loss = state.breakdown;
            row.active_count = static_cast<int>(active_sensors(layout).size());
            report.steps.push_back(row);
        }

        const EpochRecord record = epoch_diagnostics(epoch, train, test, base, layout, params, cfg.loss);
        report.epochs.push_back(record);
        if (on_epoch) on_epoch(epoch, layout, params, record);
    }

    report.final_layout = layout;
    report.final_params = params;
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start_time).count();
    return report;
}

PredictorOnlyResult train_predictor_only(const ShapeDataset& train, const ShapeDataset& test,
                                         const BaseShape& base, const std::vector<Sensor>& sensors,
                                         const TrainConfig& cfg) {
    if (train.count() == 0) throw std::invalid_argument("train_predictor_only needs a nonempty training set");
    if (sensors.empty()) throw std::invalid_argument("train_predictor_only needs at least one sensor");

    SensorLayout frozen;
    frozen.sensors = sensors;
    frozen.logits.assign(sensors.size(), 0.0);
    frozen.alpha = cfg.loss.alpha;

    const Rng master(cfg.seed);
    PredictorParams params = init_predictor(static_cast<int>(sensors.size()), train.m, train.n, cfg.seed);

    // Layout is frozen, so per-shape signals never change; compute them once.
    const std::vector<SignalVector> train_signals = dataset_signals(train, frozen, cfg.loss.K, true);
    const std::vector<SignalVector> test_signals = dataset_signals(test, frozen, cfg.loss.K, true);

    PredictorOnlyResult result;
    AdamState adam;
    const std::size_t grid_size = static_cast<std::size_t>(train.m) * train.n;

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::vector<int> order(static_cast<std::size_t>(train.count()));
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng = master.substream("shuffle", static_cast<std::uint64_t>(epoch));
        shuffle(order, shuffle_rng);

        const std::vector<int> sizes = batch_sizes(train.count(), cfg.batch_size);
        std::size_t cursor = 0;
        for (const int size : sizes) {
            std::vector<SignalVector> signals;
            std::vector<const ControlGrid*> truth;
            signals.reserve(static_cast<std::size_t>(size));
            truth.reserve(static_cast<std::size_t>(size));
            for (int i = 0; i < size; ++i) {
                const int idx = order[cursor + static_cast<std::size_t>(i)];
                signals.push_back(train_signals[static_cast<std::size_t>(idx)]);
                truth.push_back(&train.shapes[static_cast<std::size_t>(idx)]);
            }
            cursor += static_cast<std::size_t>(size);

            BatchStats stats;
            PredictorForwardState fstate;
            const std::vector<ControlGrid> predicted = predictor_forward(params, signals, base, &stats, &fstate);

            const double scale = 2.0 / (static_cast<double>(grid_size) * size);
            std::vector<ControlGrid> upstream(static_cast<std::size_t>(size));
            for (int b = 0; b < size; ++b) {
                upstream[static_cast<std::size_t>(b)].resize(grid_size);
                for (std::size_t p = 0; p < grid_size; ++p)
                    upstream[static_cast<std::size_t>(b)][p] =
                        scale * (predicted[static_cast<std::size_t>(b)][p] - (*truth[static_cast<std::size_t>(b)])[p]);
            }
            const PredictorGradients grads = predictor_backward(params, fstate, upstream);
            apply_batch_stats(params, stats, kBatchNormMomentum);

            std::vector<double> theta = flatten_parameters(params);
            adam_step(theta, flatten_gradients(grads), adam, cfg.learning_rate);
            unflatten_parameters(theta, params);
        }

        PredictorParams inference = params;
        inference.mode = PredictorMode::kInference;
        const std::vector<ControlGrid> predicted = predictor_forward(inference, test_signals, base);
        result.test_recon_per_epoch.push_back(loss_recon(predicted, test.shapes, test.m, test.n));
    }

    result.params = std::move(params);
    return result;
}

EvalMetrics evaluate(const ShapeDataset& test, const BaseShape& base, const SensorLayout& layout,
                     const PredictorParams& params, int grid, int K, bool binarized_signals) {
    if (grid < 2) throw std::invalid_argument("evaluation grid must be >= 2");
    if (test.m != params.grid_m || test.n != params.grid_n)
        throw std::invalid_argument("dataset schema does not match predictor grid");
    if (layout.size() != params.input_dim)
        throw std::invalid_argument("layout size does not match predictor input dimension");

    PredictorParams inference = params;
    inference.mode = PredictorMode::kInference;
    const std::vector<SignalVector> signals = dataset_signals(test, layout, K, binarized_signals);
    const std::vector<ControlGrid> predicted = predictor_forward(inference, signals, base);

    EvalMetrics metrics;
    metrics.per_shape_avg_mm.reserve(static_cast<std::size_t>(test.count()));
    metrics.per_shape_max_mm.reserve(static_cast<std::size_t>(test.count()));
    const double step = 1.0 / (grid - 1);
    for (int s = 0; s < test.count(); ++s) {
        const BSplineSurface truth_surface = shape_surface(test, s);
        const BSplineSurface pred_surface = make_surface(test.m, test.n, predicted[static_cast<std::size_t>(s)]);
        double sum = 0.0;
        double peak = 0.0;
        for (int i = 0; i < grid; ++i) {
            for (int j = 0; j < grid; ++j) {
                const double u = i * step;
                const double v = j * step;
                const double d = norm(surface_point(pred_surface, u, v) - surface_point(truth_surface, u, v));
                sum += d;
                peak = std::max(peak, d);
            }
        }
        metrics.per_shape_avg_mm.push_back(sum / (static_cast<double>(grid) * grid));
        metrics.per_shape_max_mm.push_back(peak);
    }
    if (!metrics.per_shape_avg_mm.empty()) {
        metrics.max_of_avg_mm =
            *std::max_element(metrics.per_shape_avg_mm.begin(), metrics.per_shape_avg_mm.end());
        metrics.mean_of_avg_mm =
            std::accumulate(metrics.per_shape_avg_mm.begin(), metrics.per_shape_avg_mm.end(), 0.0) /
            static_cast<double>(metrics.per_shape_avg_mm.size());
    }
    return metrics;
}

std::string steps_csv(const TrainReport& report) {
    std::ostringstream out;
    out << "step,recon,total_length,min_length,overlap,min_space,total,active_count\n";
    for (const StepRecord& row : report.steps) {
        out << row.step << ',' << format_double(row.loss.recon) << ',' << format_double(row.loss.total_length)
            << ',' << format_double(row.loss.min_length) << ',' << format_double(row.loss.overlap) << ','
            << format_double(row.loss.min_space) << ',' << format_double(row.loss.total) << ','
            << row.active_count << '\n';
    }
    return out.str();
}

std::string epochs_csv(const TrainReport& report) {
    std::ostringstream out;
    out << "epoch,intersections,active_count,min_pair_distance_mm,min_active_length_mm,test_recon\n";
    for (const EpochRecord& row : report.epochs) {
        out << row.epoch << ',' << row.intersections << ',' << row.active_count << ','
            << format_double(row.min_pair_distance_mm) << ',' << format_double(row.min_active_length_mm)
            << ',' << format_double(row.test_recon) << '\n';
    }
    return out.str();
}

}  // namespace proprio
