#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "proprio/layout.hpp"

namespace proprio {

inline constexpr int kHiddenWidth = 36;
inline constexpr int kHiddenLayers = 3;
inline constexpr double kBatchNormEpsilon = 1e-5;
inline constexpr double kBatchNormMomentum = 0.1;

struct DenseLayer {
    int in = 0;
    int out = 0;
    std::vector<double> weights;  // row-major, out x in
    std::vector<double> bias;     // out
};

struct BatchNormLayer {
    std::vector<double> gamma;
    std::vector<double> shift;
    std::vector<double> running_mean;
    std::vector<double> running_var;
};

enum class PredictorMode { kTraining, kInference };

/// Undeformed control grid the network predicts offsets against.
struct BaseShape {
    int m = 0;
    int n = 0;
    ControlGrid control_points;
};

/// MLP mapping the masked signal vector to control-point offsets:
/// input(M) -> [linear -> batch norm -> ReLU] x3 with 36 neurons -> linear(3mn),
/// output added to the base grid. No activation on the output layer.
struct PredictorParams {
    int input_dim = 0;
    int grid_m = 0;
    int grid_n = 0;
    std::array<DenseLayer, kHiddenLayers + 1> layers;
    std::array<BatchNormLayer, kHiddenLayers> norms;
    PredictorMode mode = PredictorMode::kTraining;

    int output_dim() const { return 3 * grid_m * grid_n; }
    /// Trainable parameters: weights, biases, gamma, shift.
    int parameter_count() const;
};

/// Fan-in-scaled uniform weights (+-1/sqrt(fan_in)) from a named substream of
/// `seed`; zero biases; batch norm gamma=1, shift=0, running mean 0, var 1.
PredictorParams init_predictor(int input_dim, int m, int n, std::uint64_t seed);

/// Per-hidden-layer batch statistics of one training-mode forward pass.
struct BatchStats {
    std::array<std::vector<double>, kHiddenLayers> mean;
    std::array<std::vector<double>, kHiddenLayers> var;  // biased (1/B)
};

/// Intermediates recorded by a forward pass, consumed by predictor_backward.
struct PredictorForwardState {
    int batch = 0;
    PredictorMode mode = PredictorMode::kTraining;
    std::vector<double> input;  // batch x M
    struct Hidden {
        std::vector<double> xhat;  // normalized pre-activation, batch x 36
        std::vector<double> act;   // post-ReLU, batch x 36
        std::vector<double> inv_std;
    };
    std::array<Hidden, kHiddenLayers> hidden;
};

/// Batched forward pass. Training mode needs batch >= 2 and normalizes with
/// batch statistics (reported through `stats_out` for the caller to fold into
/// the running stats); inference mode uses the stored running statistics.
std::vector<ControlGrid> predictor_forward(const PredictorParams& params,
                                           const std::vector<SignalVector>& signals, const BaseShape& base,
                                           BatchStats* stats_out = nullptr,
                                           PredictorForwardState* state_out = nullptr);

/// running <- (1-momentum)*running + momentum*batch.
void apply_batch_stats(PredictorParams& params, const BatchStats& stats, double momentum);

struct PredictorGradients {
    std::array<DenseLayer, kHiddenLayers + 1> layers;  // same shapes, gradient values
    std::array<std::vector<double>, kHiddenLayers> gamma;
    std::array<std::vector<double>, kHiddenLayers> shift;
    std::vector<double> d_signals;  // batch x M
};

/// Reverse pass for a recorded training-mode forward. `upstream` is
/// d(loss)/d(predicted control point), one grid per batch sample.
PredictorGradients predictor_backward(const PredictorParams& params, const PredictorForwardState& state,
                                      const std::vector<ControlGrid>& upstream);

/// Canonical flattening (layer weights+biases in order, then gamma/shift per
/// norm layer) used by the optimizer and the gradient bundle.
std::vector<double> flatten_parameters(const PredictorParams& params);
void unflatten_parameters(const std::vector<double>& flat, PredictorParams& params);
std::vector<double> flatten_gradients(const PredictorGradients& grads);

/// Versioned JSON with full batch-norm state.
std::string predictor_to_json(const PredictorParams& params);
PredictorParams predictor_from_json(const std::string& text);

}  // namespace proprio
