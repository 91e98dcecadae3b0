#include "proprio/predictor.hpp"

#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "proprio/rng.hpp"

namespace proprio {

namespace {

void linear_forward(const DenseLayer& layer, const std::vector<double>& input, int batch,
                    std::vector<double>& output) {
    output.assign(static_cast<std::size_t>(batch) * layer.out, 0.0);
    for (int b = 0; b < batch; ++b) {
        const double* x = &input[static_cast<std::size_t>(b) * layer.in];
        double* y = &output[static_cast<std::size_t>(b) * layer.out];
        for (int o = 0; o < layer.out; ++o) {
            const double* w = &layer.weights[static_cast<std::size_t>(o) * layer.in];
            double acc = layer.bias[static_cast<std::size_t>(o)];
            for (int i = 0; i < layer.in; ++i) acc += w[i] * x[i];
            y[o] = acc;
        }
    }
}

/// dW = dY^T X, db = sum_b dY, dX = dY W.
void linear_backward(const DenseLayer& layer, const std::vector<double>& input, int batch,
                     const std::vector<double>& d_output, DenseLayer& d_layer, std::vector<double>* d_input) {
    d_layer.in = layer.in;
    d_layer.out = layer.out;
    d_layer.weights.assign(layer.weights.size(), 0.0);
    d_layer.bias.assign(layer.bias.size(), 0.0);
    if (d_input != nullptr) d_input->assign(static_cast<std::size_t>(batch) * layer.in, 0.0);
    for (int b = 0; b < batch; ++b) {
        const double* x = &input[static_cast<std::size_t>(b) * layer.in];
        const double* dy = &d_output[static_cast<std::size_t>(b) * layer.out];
        for (int o = 0; o < layer.out; ++o) {
            const double g = dy[o];
            if (g == 0.0) continue;
            double* dw = &d_layer.weights[static_cast<std::size_t>(o) * layer.in];
            const double* w = &layer.weights[static_cast<std::size_t>(o) * layer.in];
            d_layer.bias[static_cast<std::size_t>(o)] += g;
            for (int i = 0; i < layer.in; ++i) dw[i] += g * x[i];
            if (d_input != nullptr) {
                double* dx = &(*d_input)[static_cast<std::size_t>(b) * layer.in];
                for (int i = 0; i < layer.in; ++i) dx[i] += g * w[i];
            }
        }
    }
}

}  // namespace

int PredictorParams::parameter_count() const {
    int count = 0;
    for (const DenseLayer& layer : layers)
        count += layer.in * layer.out + layer.out;
    for (const BatchNormLayer& norm : norms) count += 2 * static_cast<int>(norm.gamma.size());
    return count;
}

PredictorParams init_predictor(int input_dim, int m, int n, std::uint64_t seed) {
    if (input_dim < 1 || m < 1 || n < 1) throw std::invalid_argument("init_predictor needs positive dimensions");
    PredictorParams params;
    params.input_dim = input_dim;
    params.grid_m = m;
    params.grid_n = n;
    params.mode = PredictorMode::kTraining;

    const int dims[kHiddenLayers + 2] = {input_dim, kHiddenWidth, kHiddenWidth, kHiddenWidth, 3 * m * n};
    Rng rng = Rng(seed).substream("predictor-init");
    for (int l = 0; l < kHiddenLayers + 1; ++l) {
        DenseLayer& layer = params.layers[static_cast<std::size_t>(l)];
        layer.in = dims[l];
        layer.out = dims[l + 1];
        layer.weights.resize(static_cast<std::size_t>(layer.in) * layer.out);
        layer.bias.assign(static_cast<std::size_t>(layer.out), 0.0);
        const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
        for (double& w : layer.weights) w = rng.uniform(-bound, bound);
    }
    for (BatchNormLayer& norm : params.norms) {
        norm.gamma.assign(kHiddenWidth, 1.0);
        norm.shift.assign(kHiddenWidth, 0.0);
        norm.running_mean.assign(kHiddenWidth, 0.0);
        norm.running_var.assign(kHiddenWidth, 1.0);
    }
    return params;
}

std::vector<ControlGrid> predictor_forward(const PredictorParams& params,
                                           const std::vector<SignalVector>& signals, const BaseShape& base,
                                           BatchStats* stats_out, PredictorForwardState* state_out) {
    const int batch = static_cast<int>(signals.size());
    if (batch < 1) throw std::invalid_argument("predictor_forward needs at least one sample");
    if (params.mode == PredictorMode::kTraining && batch < 2)
        throw std::invalid_argument("training-mode forward needs batch size >= 2");
    if (base.m != params.grid_m || base.n != params.grid_n ||
        static_cast<int>(base.control_points.size()) != params.grid_m * params.grid_n)
        throw std::invalid_argument("base shape does not match predictor grid dimensions");

    std::vector<double> current(static_cast<std::size_t>(batch) * params.input_dim);
    for (int b = 0; b < batch; ++b) {
        if (static_cast<int>(signals[static_cast<std::size_t>(b)].values.size()) != params.input_dim)
            throw std::invalid_argument("signal vector length does not match predictor input");
        for (int k = 0; k < params.input_dim; ++k)
            current[static_cast<std::size_t>(b) * params.input_dim + k] =
                signals[static_cast<std::size_t>(b)].values[static_cast<std::size_t>(k)];
    }

    if (state_out != nullptr) {
        state_out->batch = batch;
        state_out->mode = params.mode;
        state_out->input = current;
    }

    std::vector<double> z;
    for (int l = 0; l < kHiddenLayers; ++l) {
        linear_forward(params.layers[static_cast<std::size_t>(l)], current, batch, z);
        const BatchNormLayer& norm = params.norms[static_cast<std::size_t>(l)];
        const int width = kHiddenWidth;

        std::vector<double> mean(width);
        std::vector<double> var(width);
        if (params.mode == PredictorMode::kTraining) {
            for (int f = 0; f < width; ++f) {
                double acc = 0.0;
                for (int b = 0; b < batch; ++b) acc += z[static_cast<std::size_t>(b) * width + f];
                mean[static_cast<std::size_t>(f)] = acc / batch;
            }
            for (int f = 0; f < width; ++f) {
                double acc = 0.0;
                for (int b = 0; b < batch; ++b) {
                    const double d = z[static_cast<std::size_t>(b) * width + f] - mean[static_cast<std::size_t>(f)];
                    acc += d * d;
                }
                var[static_cast<std::size_t>(f)] = acc / batch;
            }
            if (stats_out != nullptr) {
                stats_out->mean[static_cast<std::size_t>(l)] = mean;
                stats_out->var[static_cast<std::size_t>(l)] = var;
            }
        } else {
            mean = norm.running_mean;
            var = norm.running_var;
        }

        std::vector<double> inv_std(width);
        for (int f = 0; f < width; ++f)
            inv_std[static_cast<std::size_t>(f)] = 1.0 / std::sqrt(var[static_cast<std::size_t>(f)] + kBatchNormEpsilon);

        std::vector<double> xhat(static_cast<std::size_t>(batch) * width);
        std::vector<double> act(static_cast<std::size_t>(batch) * width);
        for (int b = 0; b < batch; ++b) {
            for (int f = 0; f < width; ++f) {
                const std::size_t idx = static_cast<std::size_t>(b) * width + f;
                const double normalized = (z[idx] - mean[static_cast<std::size_t>(f)]) * inv_std[static_cast<std::size_t>(f)];
                xhat[idx] = normalized;
                const double y = norm.gamma[static_cast<std::size_t>(f)] * normalized + norm.shift[static_cast<std::size_t>(f)];
                act[idx] = y > 0.0 ? y : 0.0;
            }
        }

        if (state_out != nullptr) {
            state_out->hidden[static_cast<std::size_t>(l)].xhat = xhat;
            state_out->hidden[static_cast<std::size_t>(l)].act = act;
            state_out->hidden[static_cast<std::size_t>(l)].inv_std = std::move(inv_std);
        }
        current = std::move(act);
    }

    std::vector<double> offsets;
    linear_forward(params.layers[kHiddenLayers], current, batch, offsets);

    const std::size_t grid_size = base.control_points.size();
    std::vector<ControlGrid> predicted(static_cast<std::size_t>(batch));
    for (int b = 0; b < batch; ++b) {
        ControlGrid& grid = predicted[static_cast<std::size_t>(b)];
        grid.resize(grid_size);
        const double* off = &offsets[static_cast<std::size_t>(b) * 3 * grid_size];
        for (std::size_t p = 0; p < grid_size; ++p) {
            grid[p] = base.control_points[p] + Vec3{off[3 * p], off[3 * p + 1], off[3 * p + 2]};
        }
    }
    return predicted;
}

void apply_batch_stats(PredictorParams& params, const BatchStats& stats, double momentum) {
    for (int l = 0; l < kHiddenLayers; ++l) {
        BatchNormLayer& norm = params.norms[static_cast<std::size_t>(l)];
        const auto& mean = stats.mean[static_cast<std::size_t>(l)];
        const auto& var = stats.var[static_cast<std::size_t>(l)];
        if (mean.size() != norm.running_mean.size() || var.size() != norm.running_var.size())
            throw std::invalid_argument("batch stats width mismatch");
        for (std::size_t f = 0; f < mean.size(); ++f) {
            norm.running_mean[f] = (1.0 - momentum) * norm.running_mean[f] + momentum * mean[f];
            norm.running_var[f] = (1.0 - momentum) * norm.running_var[f] + momentum * var[f];
        }
    }
}

PredictorGradients predictor_backward(const PredictorParams& params, const PredictorForwardState& state,
                                      const std::vector<ControlGrid>& upstream) {
    if (state.batch == 0) throw std::logic_error("predictor_backward needs a recorded forward state");
    if (state.mode != PredictorMode::kTraining || params.mode != PredictorMode::kTraining)
        throw std::logic_error("predictor_backward requires a training-mode forward pass");
    if (static_cast<int>(upstream.size()) != state.batch)
        throw std::invalid_argument("upstream batch size mismatch");

    const int batch = state.batch;
    const std::size_t grid_size = static_cast<std::size_t>(params.grid_m) * params.grid_n;
    std::vector<double> d_out(static_cast<std::size_t>(batch) * 3 * grid_size);
    for (int b = 0; b < batch; ++b) {
        if (upstream[static_cast<std::size_t>(b)].size() != grid_size)
            throw std::invalid_argument("upstream grid size mismatch");
        double* row = &d_out[static_cast<std::size_t>(b) * 3 * grid_size];
        for (std::size_t p = 0; p < grid_size; ++p) {
            row[3 * p] = upstream[static_cast<std::size_t>(b)][p].x;
            row[3 * p + 1] = upstream[static_cast<std::size_t>(b)][p].y;
            row[3 * p + 2] = upstream[static_cast<std::size_t>(b)][p].z;
        }
    }

    PredictorGradients grads;
    std::vector<double> d_hidden;
    linear_backward(params.layers[kHiddenLayers], state.hidden[kHiddenLayers - 1].act, batch, d_out,
                    grads.layers[kHiddenLayers], &d_hidden);

    for (int l = kHiddenLayers - 1; l >= 0; --l) {
        const auto& hidden = state.hidden[static_cast<std::size_t>(l)];
        const BatchNormLayer& norm = params.norms[static_cast<std::size_t>(l)];
        const int width = kHiddenWidth;

        // ReLU: derivative 1 where the activation survived, 0 elsewhere (0 at the kink).
        std::vector<double> dy(static_cast<std::size_t>(batch) * width);
        for (std::size_t i = 0; i < dy.size(); ++i) dy[i] = hidden.act[i] > 0.0 ? d_hidden[i] : 0.0;

        // Batch-norm backward with batch statistics:
        // dz_i = gamma*inv_std * (dy_i - mean(dy) - xhat_i * mean(dy*xhat))
        grads.gamma[static_cast<std::size_t>(l)].assign(static_cast<std::size_t>(width), 0.0);
        grads.shift[static_cast<std::size_t>(l)].assign(static_cast<std::size_t>(width), 0.0);
        std::vector<double> dz(static_cast<std::size_t>(batch) * width);
        for (int f = 0; f < width; ++f) {
            double sum_dy = 0.0;
            double sum_dy_xhat = 0.0;
            for (int b = 0; b < batch; ++b) {
                const std::size_t idx = static_cast<std::size_t>(b) * width + f;
                sum_dy += dy[idx];
                sum_dy_xhat += dy[idx] * hidden.xhat[idx];
            }
            grads.shift[static_cast<std::size_t>(l)][static_cast<std::size_t>(f)] = sum_dy;
            grads.gamma[static_cast<std::size_t>(l)][static_cast<std::size_t>(f)] = sum_dy_xhat;
            const double mean_dy = sum_dy / batch;
            const double mean_dy_xhat = sum_dy_xhat / batch;
            const double scale = norm.gamma[static_cast<std::size_t>(f)] * hidden.inv_std[static_cast<std::size_t>(f)];
            for (int b = 0; b < batch; ++b) {
                const std::size_t idx = static_cast<std::size_t>(b) * width + f;
                dz[idx] = scale * (dy[idx] - mean_dy - hidden.xhat[idx] * mean_dy_xhat);
            }
        }

        const std::vector<double>& layer_input = l == 0 ? state.input : state.hidden[static_cast<std::size_t>(l - 1)].act;
        std::vector<double> d_input;
        linear_backward(params.layers[static_cast<std::size_t>(l)], layer_input, batch, dz,
                        grads.layers[static_cast<std::size_t>(l)], &d_input);
        // A uniform shift of a pre-batch-norm activation is cancelled by the
        // mean subtraction, so these bias gradients are identically zero;
        // writing the exact zero avoids carrying summation residue.
        std::fill(grads.layers[static_cast<std::size_t>(l)].bias.begin(),
                  grads.layers[static_cast<std::size_t>(l)].bias.end(), 0.0);
        d_hidden = std::move(d_input);
    }

    grads.d_signals = std::move(d_hidden);
    return grads;
}

std::vector<double> flatten_parameters(const PredictorParams& params) {
    std::vector<double> flat;
    flat.reserve(static_cast<std::size_t>(params.parameter_count()));
    for (const DenseLayer& layer : params.layers) {
        flat.insert(flat.end(), layer.weights.begin(), layer.weights.end());
        flat.insert(flat.end(), layer.bias.begin(), layer.bias.end());
    }
    for (const BatchNormLayer& norm : params.norms) {
        flat.insert(flat.end(), norm.gamma.begin(), norm.gamma.end());
        flat.insert(flat.end(), norm.shift.begin(), norm.shift.end());
    }
    return flat;
}

void unflatten_parameters(const std::vector<double>& flat, PredictorParams& params) {
    if (static_cast<int>(flat.size()) != params.parameter_count())
        throw std::invalid_argument("flat parameter vector has wrong length");
    std::size_t pos = 0;
    for (DenseLayer& layer : params.layers) {
        std::copy(flat.begin() + pos, flat.begin() + pos + layer.weights.size(), layer.weights.begin());
        pos += layer.weights.size();
        std::copy(flat.begin() + pos, flat.begin() + pos + layer.bias.size(), layer.bias.begin());
        pos += layer.bias.size();
    }
    for (BatchNormLayer& norm : params.norms) {
        std::copy(flat.begin() + pos, flat.begin() + pos + norm.gamma.size(), norm.gamma.begin());
        pos += norm.gamma.size();
        std::copy(flat.begin() + pos, flat.begin() + pos + norm.shift.size(), norm.shift.begin());
        pos += norm.shift.size();
    }
}

std::vector<double> flatten_gradients(const PredictorGradients& grads) {
    std::vector<double> flat;
    for (const DenseLayer& layer : grads.layers) {
        flat.insert(flat.end(), layer.weights.begin(), layer.weights.end());
        flat.insert(flat.end(), layer.bias.begin(), layer.bias.end());
    }
    for (int l = 0; l < kHiddenLayers; ++l) {
        flat.insert(flat.end(), grads.gamma[static_cast<std::size_t>(l)].begin(),
                    grads.gamma[static_cast<std::size_t>(l)].end());
        flat.insert(flat.end(), grads.shift[static_cast<std::size_t>(l)].begin(),
                    grads.shift[static_cast<std::size_t>(l)].end());
    }
    return flat;
}

std::string predictor_to_json(const PredictorParams& params) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["input_dim"] = params.input_dim;
    j["m"] = params.grid_m;
    j["n"] = params.grid_n;
    j["hidden_width"] = kHiddenWidth;
    nlohmann::json layers = nlohmann::json::array();
    for (const DenseLayer& layer : params.layers) {
        nlohmann::json jl;
        jl["in"] = layer.in;
        jl["out"] = layer.out;
        jl["weights"] = layer.weights;
        jl["bias"] = layer.bias;
        layers.push_back(std::move(jl));
    }
    j["layers"] = std::move(layers);
    nlohmann::json norms = nlohmann::json::array();
    for (const BatchNormLayer& norm : params.norms) {
        nlohmann::json jn;
        jn["gamma"] = norm.gamma;
        jn["shift"] = norm.shift;
        jn["running_mean"] = norm.running_mean;
        jn["running_var"] = norm.running_var;
        norms.push_back(std::move(jn));
    }
    j["batch_norm"] = std::move(norms);
    return j.dump();
}

PredictorParams predictor_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    if (j.at("format_version").get<int>() != 1)
        throw std::runtime_error("unsupported predictor format_version");
    PredictorParams params;
    params.input_dim = j.at("input_dim").get<int>();
    params.grid_m = j.at("m").get<int>();
    params.grid_n = j.at("n").get<int>();
    params.mode = PredictorMode::kInference;

    const int dims[kHiddenLayers + 2] = {params.input_dim, kHiddenWidth, kHiddenWidth, kHiddenWidth,
                                         3 * params.grid_m * params.grid_n};
    const auto& layers = j.at("layers");
    if (layers.size() != kHiddenLayers + 1) throw std::runtime_error("predictor JSON has wrong layer count");
    for (int l = 0; l < kHiddenLayers + 1; ++l) {
        DenseLayer& layer = params.layers[static_cast<std::size_t>(l)];
        layer.in = layers[static_cast<std::size_t>(l)].at("in").get<int>();
        layer.out = layers[static_cast<std::size_t>(l)].at("out").get<int>();
        if (layer.in != dims[l] || layer.out != dims[l + 1])
            throw std::invalid_argument("predictor JSON layer dimensions inconsistent with (M, m, n)");
        layer.weights = layers[static_cast<std::size_t>(l)].at("weights").get<std::vector<double>>();
        layer.bias = layers[static_cast<std::size_t>(l)].at("bias").get<std::vector<double>>();
        if (static_cast<int>(layer.weights.size()) != layer.in * layer.out ||
            static_cast<int>(layer.bias.size()) != layer.out)
            throw std::invalid_argument("predictor JSON layer array sizes inconsistent");
    }
    const auto& norms = j.at("batch_norm");
    if (norms.size() != kHiddenLayers) throw std::runtime_error("predictor JSON has wrong batch-norm count");
    for (int l = 0; l < kHiddenLayers; ++l) {
        BatchNormLayer& norm = params.norms[static_cast<std::size_t>(l)];
        norm.gamma = norms[static_cast<std::size_t>(l)].at("gamma").get<std::vector<double>>();
        norm.shift = norms[static_cast<std::size_t>(l)].at("shift").get<std::vector<double>>();
        norm.running_mean = norms[static_cast<std::size_t>(l)].at("running_mean").get<std::vector<double>>();
        norm.running_var = norms[static_cast<std::size_t>(l)].at("running_var").get<std::vector<double>>();
        if (norm.gamma.size() != kHiddenWidth || norm.shift.size() != kHiddenWidth ||
            norm.running_mean.size() != kHiddenWidth || norm.running_var.size() != kHiddenWidth)
            throw std::invalid_argument("predictor JSON batch-norm array sizes inconsistent");
    }
    return params;
}

}  // namespace proprio
