#pragma once

#include <optional>
#include <string>

#include "proprio/layout.hpp"

namespace proprio {

struct SvgOptions {
    double threshold = 0.5;
    /// Shown in the legend when present (needs a surface to compute, so the
    /// caller supplies it).
    std::optional<double> total_masked_length_mm;
};

/// Deterministic UV-domain picture of the layout: unit-square viewport,
/// active sensors as solid segments with index labels, inactive ones dashed,
/// legend with the active count (and masked length when supplied).
std::string layout_svg(const SensorLayout& layout, const SvgOptions& options = {});

}  // namespace proprio
