#pragma once

#include <string>
#include <vector>

#include "proprio/geometry.hpp"
#include "proprio/rng.hpp"

namespace proprio {

/// Straight stretch sensor given by its two endpoints in the UV square.
struct Sensor {
    double u_s = 0.0;
    double v_s = 0.0;
    double u_e = 0.0;
    double v_e = 0.0;
};

struct UV {
    double u = 0.0;
    double v = 0.0;
};

/// Design variable of the layout optimization: M sensor rows plus M raw
/// occupancy logits, with the shared tanh sharpness alpha.
struct SensorLayout {
    std::vector<Sensor> sensors;
    std::vector<double> logits;
    double alpha = 10.0;

    int size() const { return static_cast<int>(sensors.size()); }
};

/// Masked length signals, one entry per sensor (mm).
struct SignalVector {
    std::vector<double> values;
};

/// Chord norms are sqrt(M'M + eps) so degenerate chords stay differentiable.
inline constexpr double kChordEpsilon = 1e-12;  // mm^2

/// Smooth occupancy mask in (0,1): 0.5*(1 + tanh(alpha*(sigmoid(logit) - 0.5))).
double project_occupancy(double logit, double alpha);

/// d(project_occupancy)/d(logit).
double occupancy_derivative(double logit, double alpha);

/// Hard mask used in the training forward pass: 1 when the smooth mask is at
/// or above 0.5 (equivalently logit >= 0), else 0. The backward pass routes
/// gradients through occupancy_derivative (straight-through).
inline double binary_occupancy(double logit) { return logit >= 0.0 ? 1.0 : 0.0; }

/// K samples placed uniformly from start to end (first == start, last == end).
std::vector<UV> sample_uv(const Sensor& sensor, int K);

/// Chord-sum length of the sensor's image on the surface, eps-regularized.
double sensor_length(const BSplineSurface& surface, const Sensor& sensor, int K);

/// Entry k is project_occupancy(logit_k, alpha) * sensor_length(sensor_k).
SignalVector signal_vector(const BSplineSurface& surface, const SensorLayout& layout, int K);

/// Indices with mask >= threshold, ascending.
std::vector<int> active_sensors(const SensorLayout& layout, double threshold = 0.5);

enum class ConstraintMode { kFree, kHalfDomain, kMirroredPairs };

const char* constraint_mode_name(ConstraintMode mode);
ConstraintMode parse_constraint_mode(const std::string& name);

/// Projects the layout into the feasible set of the mode:
/// free clamps UV to [0,1]^2, half_domain clamps u to [0,0.5], and
/// mirrored_pairs overwrites sensor 2k+1 with sensor 2k reflected by
/// u -> 1-u and ties logit_{2k+1} to logit_{2k}. Idempotent.
SensorLayout apply_domain_constraints(SensorLayout layout, ConstraintMode mode);

/// M sensors with endpoints uniform in [lo,hi]^2 and logits 2 (masks on).
SensorLayout make_random_layout(int count, double alpha, Rng& rng, double lo = 0.05, double hi = 0.95);

/// JSON form {"alpha", "sensors": [[u_s,v_s,u_e,v_e],...], "logits": [...]}.
std::string layout_to_json(const SensorLayout& layout);
SensorLayout layout_from_json(const std::string& text);

/// Binarized export {"active": [[u_s,v_s,u_e,v_e],...]} at the given threshold.
std::string layout_active_json(const SensorLayout& layout, double threshold = 0.5);

}  // namespace proprio
