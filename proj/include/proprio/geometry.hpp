#pragma once

#include <string>
#include <vector>

#include "proprio/vec3.hpp"

namespace proprio {

/// Everything in here is a clamped cubic B-spline on [0,1].
inline constexpr int kDegree = 3;

/// Knot sequence for one parametric direction. `values` is nondecreasing,
/// starts with degree+1 zeros and ends with degree+1 ones, and has
/// basis_count() + degree + 1 entries.
struct KnotVector {
    std::vector<double> values;

    int basis_count() const { return static_cast<int>(values.size()) - kDegree - 1; }
};

/// Clamped uniform cubic knot vector for `count` basis functions:
/// four zeros, count-4 equally spaced interior knots, four ones.
KnotVector make_clamped_knots(int count);

/// Greville abscissae (mean of 3 consecutive interior knots); control points
/// placed there reproduce linear functions exactly.
std::vector<double> greville_abscissae(const KnotVector& knots);

/// Value of the cubic basis N_i at u in [0,1]. u=1 uses the left-limit
/// convention so the last basis evaluates to 1 at the right end.
double basis_value(const KnotVector& knots, int i, double u);

/// dN_i/du at u; terms with zero knot denominators are defined as zero.
double basis_derivative(const KnotVector& knots, int i, double u);

using ControlGrid = std::vector<Vec3>;  // row-major, point (i,j) at i*n + j

/// Tensor-product clamped cubic surface, control points in mm.
struct BSplineSurface {
    int m = 0;
    int n = 0;
    ControlGrid control_points;
    KnotVector knots_u;
    KnotVector knots_v;
};

/// Builds a surface over clamped uniform knots; throws std::invalid_argument
/// if m or n < 4 or the grid size does not match.
BSplineSurface make_surface(int m, int n, ControlGrid control_points);

/// Flat sheet spanning [0,width]x[0,height] mm at z=0 with control points at
/// the Greville abscissae, so S(u,v) = (width*u, height*v, 0) exactly.
BSplineSurface make_flat_surface(int m, int n, double width_mm, double height_mm);

/// S(u,v); reads only the 4x4 control window of the containing knot spans.
Vec3 surface_point(const BSplineSurface& surface, double u, double v);

struct SurfacePartials {
    Vec3 du;
    Vec3 dv;
};

/// (dS/du, dS/dv) at (u,v).
SurfacePartials surface_partials(const BSplineSurface& surface, double u, double v);

/// Point and both partials in a single 4x4-window pass. Null outputs are skipped.
void surface_eval(const BSplineSurface& surface, double u, double v, Vec3* point, Vec3* du, Vec3* dv);

/// JSON form {"m", "n", "control_points": [[x,y,z], ...]} (row-major, mm);
/// knots are reconstructed by make_clamped_knots and never stored.
std::string surface_to_json(const BSplineSurface& surface);
BSplineSurface surface_from_json(const std::string& text);

}  // namespace proprio
