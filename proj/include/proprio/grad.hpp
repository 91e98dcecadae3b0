#pragma once

#include <array>
#include <functional>
#include <vector>

#include "proprio/losses.hpp"
#include "proprio/predictor.hpp"

namespace proprio {

/// Gradients of one total-loss evaluation with respect to the layout rows
/// (u_s, v_s, u_e, v_e per sensor), the occupancy logits, and the flattened
/// predictor parameters.
struct GradientBundle {
    std::vector<std::array<double, 4>> d_layout;
    std::vector<double> d_logits;
    std::vector<double> d_predictor;

    /// [layout rows | logits | predictor], matching pack_variables.
    std::vector<double> flatten() const;
};

/// (dL/du_s, dL/dv_s, dL/du_e, dL/dv_e) of the eps-regularized chord-sum
/// length, assembled from the surface partials at the K samples and the
/// linear sample weights dd u_t/du_s = 1 - t/(K-1), du_t/du_e = t/(K-1).
std::array<double, 4> grad_sensor_length(const BSplineSurface& surface, const Sensor& sensor, int K);

/// Multipliers for the five terms of the total loss. from_config reproduces
/// the total; an indicator selects a single term for gradient checking.
struct TermWeights {
    double recon = 0.0;
    double total_length = 0.0;
    double min_length = 0.0;
    double overlap = 0.0;
    double min_space = 0.0;

    static TermWeights from_config(const LossConfig& cfg) {
        return {1.0, cfg.w_t, cfg.w_m, cfg.w_p, cfg.w_s};
    }
};

/// How the occupancy mask enters the forward pass. The smooth mode evaluates
/// Eq-5-style relaxed masks everywhere (fully differentiable, used by the
/// gradient checks); the straight-through mode hardens the mask to {0,1} in
/// the forward while the backward keeps the smooth derivative, which is what
/// the optimizer trains with -- a relaxed mask in front of a batch-norm
/// network is invariant to uniform mask decay (the normalization rescales the
/// signals right back), so without hardening every run collapses to the
/// all-off state.
enum class MaskMode { kSmooth, kStraightThrough };

/// Recording of a full forward evaluation: per-shape sensor samples (surface
/// points, partials, chords), occupancy masks, pair terms on the anchor
/// surface (the batch's first truth grid), the predictor forward state, and
/// the loss breakdown.
struct TotalLossState {
    bool evaluated = false;
    int m = 0;
    int n = 0;
    LossConfig cfg;
    SensorLayout layout;
    BaseShape base;
    PredictorParams params;
    std::vector<ControlGrid> truth;

    struct SensorSamples {
        std::vector<Vec3> position;
        std::vector<Vec3> du;
        std::vector<Vec3> dv;
        std::vector<double> chord;  // K-1 regularized chord norms
        double length = 0.0;
    };

    std::vector<double> mask;    // occupancy per sensor
    std::vector<double> d_mask;  // d(mask)/d(logit)
    std::vector<std::vector<SensorSamples>> samples;  // [shape][sensor]
    std::vector<SensorSamples> anchor_samples;        // manufacturability anchor

    struct PairState {
        int i = 0;
        int j = 0;
        double f1 = 0.0;
        double f2 = 0.0;
        double overlap = 0.0;
        double soft_min = 0.0;
        double exp_sum = 0.0;   // max-shifted partition sum
        double min_dist = 0.0;  // shift used for exp_sum
    };
    std::vector<PairState> pairs;

    std::vector<SignalVector> signals;
    std::vector<ControlGrid> predicted;
    PredictorForwardState predictor_state;
    BatchStats batch_stats;
    LossBreakdown breakdown;
};

/// Training-mode forward pass of the co-optimization loss over one batch of
/// ground-truth grids. The manufacturability terms are evaluated on `anchor`
/// when given (the trainer passes a fixed representative shape so the
/// constraint thresholds are not smeared by per-batch deformation spread),
/// else on truth.front().
TotalLossState forward_total(const std::vector<ControlGrid>& truth, int m, int n,
                             const SensorLayout& layout, const PredictorParams& params,
                             const BaseShape& base, const LossConfig& cfg,
                             MaskMode mask_mode = MaskMode::kStraightThrough,
                             const ControlGrid* anchor = nullptr);

/// Exact reverse pass over a recorded forward state. The overload without
/// weights differentiates the total as configured; with weights it
/// differentiates weights.recon*recon + weights.total_length*total_length + ...
GradientBundle backward_total(const TotalLossState& state);
GradientBundle backward_total(const TotalLossState& state, const TermWeights& weights);

/// max_i |analytic_i - central_difference_i| / max(1e-8, |analytic_i|).
/// Throws std::runtime_error if f produces a non-finite value.
/// `denominator_floor` widens the denominator for coordinates whose slope is
/// below the rounding noise of the central difference itself (|f|*eps/h
/// scale); the default 0 keeps the plain relative form.
double finite_difference_check(const std::function<double(const std::vector<double>&)>& f,
                               const std::vector<double>& x, const std::vector<double>& analytic,
                               double h, double denominator_floor = 0.0);

/// Flat packing [layout rows | logits | predictor] used by the optimizer and
/// the finite-difference drivers.
std::vector<double> pack_variables(const SensorLayout& layout, const PredictorParams& params);
void unpack_variables(const std::vector<double>& flat, SensorLayout& layout, PredictorParams& params);

}  // namespace proprio
