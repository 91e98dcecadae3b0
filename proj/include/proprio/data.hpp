#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "proprio/geometry.hpp"
#include "proprio/predictor.hpp"

namespace proprio {

/// Synthetic deformation generator configuration. Shapes are the flat base
/// sheet deformed by `modes` random low-frequency sinusoidal modes.
struct GenConfig {
    int m = 15;
    int n = 15;
    double width_mm = 300.0;
    double height_mm = 300.0;
    int count = 2000;
    int modes = 6;
    double amplitude_mm = 30.0;
    std::uint64_t seed = 0;
};

/// Ordered collection of control grids sharing one (m, n) schema, plus the
/// undeformed base grid and the generator provenance.
struct ShapeDataset {
    int m = 0;
    int n = 0;
    double width_mm = 0.0;
    double height_mm = 0.0;
    ControlGrid base;
    std::vector<ControlGrid> shapes;
    std::string provenance_json;  // generator config and seed, or split info

    int count() const { return static_cast<int>(shapes.size()); }
};

/// Deterministic synthetic dataset: base is the flat Greville sheet; each
/// shape offsets control point (i,j) by
///   sum_r a_r * sin(pi p_r u_ij + phi_r) * sin(pi q_r v_ij + psi_r) * d_r
/// where (u_ij, v_ij) are the Greville abscissae of the control point. The
/// mode basis -- integer frequencies p_r, q_r in {1,2,3}, phases in [0, 2pi),
/// z-dominant unit directions (z >= 0.8) -- is drawn once per dataset from
/// the seeded stream; only the amplitudes a_r in [-amplitude, amplitude] are
/// redrawn per shape, so the deformations live in a `modes`-dimensional space.
ShapeDataset generate_synthetic_dataset(const GenConfig& cfg);

/// Seeded permutation split: first ceil(fraction*N) shapes to train.
std::pair<ShapeDataset, ShapeDataset> split_dataset(const ShapeDataset& ds, double train_fraction,
                                                    std::uint64_t seed);

/// Single-file JSON container with explicit format_version; doubles are
/// written with round-trip precision so persistence is bitwise exact.
std::string dataset_to_json(const ShapeDataset& ds);
ShapeDataset dataset_from_json(const std::string& text);
void save_dataset(const ShapeDataset& ds, const std::string& path);
ShapeDataset load_dataset(const std::string& path);

BaseShape base_shape(const ShapeDataset& ds);
BSplineSurface shape_surface(const ShapeDataset& ds, int index);

}  // namespace proprio
