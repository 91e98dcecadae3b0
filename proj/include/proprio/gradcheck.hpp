#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "proprio/trainer.hpp"

namespace proprio {

struct GradCheckOptions {
    std::uint64_t seed = 1;
    int points = 20;
    double h = 1e-6;
    double tolerance = 1e-4;
    std::string only;  // empty = all terms; else one of the row names
};

struct GradCheckRow {
    std::string name;
    double max_rel_error = 0.0;
    bool passed = false;
};

/// Checks the analytic gradient of each loss term (and the composed total)
/// against central finite differences w.r.t. layout rows, logits and all
/// predictor parameters, on self-contained random fixtures. Fixtures are
/// redrawn when any ReLU pre-activation or Heaviside threshold sits within
/// the guard band of a kink, where one-sided derivatives differ.
std::vector<GradCheckRow> run_gradient_checks(const GradCheckOptions& options);

}  // namespace proprio
