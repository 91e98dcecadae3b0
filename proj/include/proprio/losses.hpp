#pragma once

#include <utility>
#include <vector>

#include "proprio/layout.hpp"

namespace proprio {

/// Weights, thresholds and smoothing constants of the total loss.
struct LossConfig {
    double w_t = 0.005;        // total-length weight
    double w_m = 0.1;          // minimum-length weight
    double w_p = 0.6;          // overlap weight
    double w_s = 0.005;        // spacing weight
    double tau_mm = 10.0;      // inter-sensor spacing threshold
    double l_min_mm = 50.0;    // minimum sensor length
    double alpha = 10.0;       // tanh sharpness, shared with the layout mask
    double beta_per_mm = 100.0;  // soft-min temperature
    int K = 32;                // samples per sensor
};

/// One evaluation of the total loss. `overlap` and `min_space` are the
/// mask-weighted pair sums (sum over pairs of h1*h2*term), before w_p/w_s, so
/// total = recon + w_t*total_length + w_m*min_length + w_p*overlap + w_s*min_space.
struct LossBreakdown {
    double recon = 0.0;
    double total_length = 0.0;
    double min_length = 0.0;
    double overlap = 0.0;
    double min_space = 0.0;
    double total = 0.0;
};

/// Mean squared control-point error over the batch, units mm^2.
double loss_recon(const std::vector<ControlGrid>& predicted, const std::vector<ControlGrid>& truth, int m, int n);

/// The two crossing indicators: f1 > 0 and f2 > 0 jointly iff the open
/// segments properly cross; a term is 0 exactly when an endpoint of one
/// segment lies on the other's supporting line.
std::pair<double, double> overlap_terms(const Sensor& s1, const Sensor& s2);

/// Exact proper-crossing predicate (strict orientation test on both segments).
bool segments_properly_cross(const Sensor& s1, const Sensor& s2);

/// Smoothed crossing indicator 1/4 (1+tanh(alpha f1)) (1+tanh(alpha f2)) in [0,1].
double loss_overlap(const Sensor& s1, const Sensor& s2, double alpha);

/// Exhaustive sampled minimum distance between the two sensor curves (mm).
double exact_min_distance(const BSplineSurface& surface, const Sensor& s1, const Sensor& s2, int K);

/// Log-sum-exp underestimate of the sampled minimum, max-shifted for
/// stability; satisfies exact_min - log(K^2)/beta <= result <= exact_min.
double soft_min_distance(const BSplineSurface& surface, const Sensor& s1, const Sensor& s2, int K,
                         double beta_per_mm);

/// (tau - D)^2 when the soft-min distance D falls below tau, else 0 (mm^2).
double loss_min_space(const BSplineSurface& surface, const Sensor& s1, const Sensor& s2,
                      const LossConfig& cfg);

/// Sum of mask-weighted sensor lengths (mm); equals the sum of signal_vector.
double loss_total_length(const BSplineSurface& surface, const SensorLayout& layout, int K);

/// Mask-weighted quadratic penalty for sensors shorter than l_min (mm^2).
double loss_min_length(const BSplineSurface& surface, const SensorLayout& layout, const LossConfig& cfg);

/// Assembles the full breakdown. Geometry-dependent terms (lengths, spacing)
/// are evaluated on the batch's first truth surface; pair terms run over all
/// unordered sensor pairs weighted by h_{s1} h_{s2}.
LossBreakdown loss_total(const std::vector<ControlGrid>& truth, const std::vector<ControlGrid>& predicted,
                         const SensorLayout& layout, const LossConfig& cfg, int m, int n);

}  // namespace proprio
