#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "proprio/data.hpp"
#include "proprio/grad.hpp"

namespace proprio {

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEpsilon = 1e-8;

struct TrainConfig {
    double learning_rate = 0.06;
    int epochs = 100;
    int batch_size = 16;
    std::uint64_t seed = 0;
    int sensors = 20;
    ConstraintMode constraint_mode = ConstraintMode::kFree;
    LossConfig loss;
};

/// First/second moment accumulators shared by all parameter groups.
struct AdamState {
    std::vector<double> m;
    std::vector<double> v;
    long step = 0;
};

/// Standard Adam update with bias correction (beta1=0.9, beta2=0.999,
/// eps=1e-8); `params` and `grads` must match the state size.
void adam_step(std::vector<double>& params, const std::vector<double>& grads, AdamState& state, double lr);

struct StepRecord {
    int step = 0;
    LossBreakdown loss;
    int active_count = 0;
};

struct EpochRecord {
    int epoch = 0;
    int intersections = 0;  // exact predicate over active pairs
    int active_count = 0;
    double min_pair_distance_mm = 0.0;  // exact sampled min over active pairs, first train shape
    double min_active_length_mm = 0.0;  // min active sensor length, first train shape
    double test_recon = 0.0;            // inference-mode reconstruction loss on the test set
};

struct TrainReport {
    std::vector<StepRecord> steps;
    std::vector<EpochRecord> epochs;
    SensorLayout final_layout;
    PredictorParams final_params;
    double wall_seconds = 0.0;
    bool aborted = false;
    std::string abort_reason;
};

using EpochCallback =
    std::function<void(int epoch, const SensorLayout&, const PredictorParams&, const EpochRecord&)>;

/// Joint Adam optimization of (layout, logits, predictor) against the total
/// loss. Shapes are shuffled per epoch from a seeded substream, the layout is
/// projected by apply_domain_constraints after every step, and per-epoch
/// diagnostics are logged. A NaN loss or gradient aborts the run and returns
/// the last completed step's parameters.
TrainReport co_optimize(const ShapeDataset& train, const ShapeDataset& test, const BaseShape& base,
                        const SensorLayout& init_layout, const TrainConfig& cfg,
                        const EpochCallback& on_epoch = {});

struct PredictorOnlyResult {
    PredictorParams params;
    std::vector<double> test_recon_per_epoch;
};

/// Supervised training of the predictor alone on a frozen, fully-on sensor
/// set (signals are raw lengths). Same budget semantics as co_optimize.
PredictorOnlyResult train_predictor_only(const ShapeDataset& train, const ShapeDataset& test,
                                         const BaseShape& base, const std::vector<Sensor>& sensors,
                                         const TrainConfig& cfg);

struct EvalMetrics {
    std::vector<double> per_shape_avg_mm;
    std::vector<double> per_shape_max_mm;
    double max_of_avg_mm = 0.0;
    double mean_of_avg_mm = 0.0;
};

/// Surface-distance evaluation over a grid x grid UV sampling: per shape the
/// average and maximum of |S_pred - S_truth|, aggregated over the dataset.
/// Signals are hardened at the 0.5 mask threshold by default (active sensors
/// feed raw lengths, inactive ones 0), matching the training convention;
/// pass binarized_signals = false for the relaxed masked signals.
EvalMetrics evaluate(const ShapeDataset& test, const BaseShape& base, const SensorLayout& layout,
                     const PredictorParams& params, int grid, int K, bool binarized_signals = true);

/// Steps per epoch used by co_optimize: ceil(N / batch), with a trailing
/// singleton batch rebalanced to satisfy the batch-norm minimum of 2.
int steps_per_epoch(int shape_count, int batch_size);

/// CSV serializations (locale-independent, '.' decimal separator).
std::string steps_csv(const TrainReport& report);
std::string epochs_csv(const TrainReport& report);

}  // namespace proprio
