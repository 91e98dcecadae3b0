#include "proprio/layout.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

namespace proprio {

double project_occupancy(double logit, double alpha) {
    const double sigma = 1.0 / (1.0 + std::exp(-logit));
    return 0.5 * (1.0 + std::tanh(alpha * (sigma - 0.5)));
}

double occupancy_derivative(double logit, double alpha) {
    const double sigma = 1.0 / (1.0 + std::exp(-logit));
    const double t = std::tanh(alpha * (sigma - 0.5));
    return 0.5 * (1.0 - t * t) * alpha * sigma * (1.0 - sigma);
}

std::vector<UV> sample_uv(const Sensor& sensor, int K) {
    if (K < 2) throw std::invalid_argument("sensor sampling needs K >= 2");
    std::vector<UV> samples(static_cast<std::size_t>(K));
    const double inv = 1.0 / (K - 1);
    for (int t = 0; t < K; ++t) {
        const double w = t * inv;
        samples[static_cast<std::size_t>(t)] = {(sensor.u_e - sensor.u_s) * w + sensor.u_s,
                                                (sensor.v_e - sensor.v_s) * w + sensor.v_s};
    }
    return samples;
}

double sensor_length(const BSplineSurface& surface, const Sensor& sensor, int K) {
    const std::vector<UV> samples = sample_uv(sensor, K);
    double length = 0.0;
    Vec3 prev = surface_point(surface, samples[0].u, samples[0].v);
    for (int t = 1; t < K; ++t) {
        const Vec3 cur = surface_point(surface, samples[static_cast<std::size_t>(t)].u,
                                       samples[static_cast<std::size_t>(t)].v);
        length += std::sqrt(squared_norm(cur - prev) + kChordEpsilon);
        prev = cur;
    }
    return length;
}

SignalVector signal_vector(const BSplineSurface& surface, const SensorLayout& layout, int K) {
    SignalVector signals;
    signals.values.resize(layout.sensors.size());
    for (std::size_t k = 0; k < layout.sensors.size(); ++k) {
        signals.values[k] =
            project_occupancy(layout.logits[k], layout.alpha) * sensor_length(surface, layout.sensors[k], K);
    }
    return signals;
}

std::vector<int> active_sensors(const SensorLayout& layout, double threshold) {
    std::vector<int> indices;
    for (int k = 0; k < layout.size(); ++k)
        if (project_occupancy(layout.logits[static_cast<std::size_t>(k)], layout.alpha) >= threshold)
            indices.push_back(k);
    return indices;
}

const char* constraint_mode_name(ConstraintMode mode) {
    switch (mode) {
        case ConstraintMode::kFree: return "free";
        case ConstraintMode::kHalfDomain: return "half_domain";
        case ConstraintMode::kMirroredPairs: return "mirrored_pairs";
    }
    return "free";
}

ConstraintMode parse_constraint_mode(const std::string& name) {
    if (name == "free") return ConstraintMode::kFree;
    if (name == "half_domain") return ConstraintMode::kHalfDomain;
    if (name == "mirrored_pairs") return ConstraintMode::kMirroredPairs;
    throw std::invalid_argument("unknown constraint mode: " + name);
}

namespace {

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

void clamp_sensor(Sensor& s, double u_max) {
    s.u_s = std::clamp(s.u_s, 0.0, u_max);
    s.u_e = std::clamp(s.u_e, 0.0, u_max);
    s.v_s = clamp01(s.v_s);
    s.v_e = clamp01(s.v_e);
}

}  // namespace

SensorLayout apply_domain_constraints(SensorLayout layout, ConstraintMode mode) {
    switch (mode) {
        case ConstraintMode::kFree:
            for (Sensor& s : layout.sensors) clamp_sensor(s, 1.0);
            break;
        case ConstraintMode::kHalfDomain:
            for (Sensor& s : layout.sensors) clamp_sensor(s, 0.5);
            break;
        case ConstraintMode::kMirroredPairs: {
            if (layout.size() % 2 != 0)
                throw std::invalid_argument("mirrored_pairs requires an even number of sensors");
            for (int k = 0; k + 1 < layout.size(); k += 2) {
                Sensor& master = layout.sensors[static_cast<std::size_t>(k)];
                clamp_sensor(master, 1.0);
                Sensor mirrored = master;
                mirrored.u_s = 1.0 - master.u_s;
                mirrored.u_e = 1.0 - master.u_e;
                layout.sensors[static_cast<std::size_t>(k + 1)] = mirrored;
                layout.logits[static_cast<std::size_t>(k + 1)] = layout.logits[static_cast<std::size_t>(k)];
            }
            break;
        }
    }
    return layout;
}

SensorLayout make_random_layout(int count, double alpha, Rng& rng, double lo, double hi) {
    if (count < 1) throw std::invalid_argument("layout needs at least one sensor");
    SensorLayout layout;
    layout.alpha = alpha;
    layout.sensors.resize(static_cast<std::size_t>(count));
    // masks start saturated-on: every sensor must stay live long enough for
    // the predictor to express which ones carry information, otherwise the
    // initial manufacturability shock prunes a near-random subset
    layout.logits.assign(static_cast<std::size_t>(count), 2.0);
    for (Sensor& s : layout.sensors) {
        s.u_s = rng.uniform(lo, hi);
        s.v_s = rng.uniform(lo, hi);
        s.u_e = rng.uniform(lo, hi);
        s.v_e = rng.uniform(lo, hi);
    }
    return layout;
}

std::string layout_to_json(const SensorLayout& layout) {
    nlohmann::json j;
    j["alpha"] = layout.alpha;
    nlohmann::json sensors = nlohmann::json::array();
    for (const Sensor& s : layout.sensors) sensors.push_back({s.u_s, s.v_s, s.u_e, s.v_e});
    j["sensors"] = std::move(sensors);
    j["logits"] = layout.logits;
    return j.dump();
}

SensorLayout layout_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    SensorLayout layout;
    layout.alpha = j.at("alpha").get<double>();
    for (const auto& row : j.at("sensors"))
        layout.sensors.push_back(
            {row.at(0).get<double>(), row.at(1).get<double>(), row.at(2).get<double>(), row.at(3).get<double>()});
    layout.logits = j.at("logits").get<std::vector<double>>();
    if (layout.logits.size() != layout.sensors.size())
        throw std::invalid_argument("layout JSON has mismatched sensors/logits lengths");
    return layout;
}

std::string layout_active_json(const SensorLayout& layout, double threshold) {
    nlohmann::json j;
    nlohmann::json rows = nlohmann::json::array();
    for (const int k : active_sensors(layout, threshold)) {
        const Sensor& s = layout.sensors[static_cast<std::size_t>(k)];
        rows.push_back({s.u_s, s.v_s, s.u_e, s.v_e});
    }
    j["active"] = std::move(rows);
    return j.dump();
}

}  // namespace proprio
