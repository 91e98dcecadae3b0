#pragma once

// Independent reference implementations used only by tests. These stay
// deliberately naive (textbook recursion, exhaustive loops) so they share no
// code path with the library.

#include <vector>

#include "proprio/geometry.hpp"
#include "proprio/layout.hpp"

namespace oracles {

/// Textbook Cox-de Boor recursion, order = degree+1. The degree-0 case closes
/// the right end of the last nonempty span so u=1 matches the left-limit
/// convention.
inline double recursive_basis(const std::vector<double>& t, int i, int order, double u) {
    if (order == 1) {
        const bool inside = t[static_cast<std::size_t>(i)] <= u && u < t[static_cast<std::size_t>(i + 1)];
        const bool at_right_end = u == t.back() && t[static_cast<std::size_t>(i + 1)] == t.back() &&
                                  t[static_cast<std::size_t>(i)] < t[static_cast<std::size_t>(i + 1)];
        return (inside || at_right_end) ? 1.0 : 0.0;
    }
    double left = 0.0;
    double right = 0.0;
    const double d1 = t[static_cast<std::size_t>(i + order - 1)] - t[static_cast<std::size_t>(i)];
    if (d1 > 0.0) left = (u - t[static_cast<std::size_t>(i)]) / d1 * recursive_basis(t, i, order - 1, u);
    const double d2 = t[static_cast<std::size_t>(i + order)] - t[static_cast<std::size_t>(i + 1)];
    if (d2 > 0.0) right = (t[static_cast<std::size_t>(i + order)] - u) / d2 * recursive_basis(t, i + 1, order - 1, u);
    return left + right;
}

inline double recursive_cubic_basis(const proprio::KnotVector& knots, int i, double u) {
    return recursive_basis(knots.values, i, 4, u);
}

/// Full double sum over all m*n basis products (no local-support windowing).
inline proprio::Vec3 naive_surface_point(const proprio::BSplineSurface& s, double u, double v) {
    proprio::Vec3 p{};
    for (int i = 0; i < s.m; ++i) {
        const double bu = recursive_cubic_basis(s.knots_u, i, u);
        for (int j = 0; j < s.n; ++j) {
            const double bv = recursive_cubic_basis(s.knots_v, j, v);
            p += (bu * bv) * s.control_points[static_cast<std::size_t>(i) * s.n + j];
        }
    }
    return p;
}

/// Strict both-sides orientation test for proper segment crossing.
inline bool proper_crossing(const proprio::Sensor& s1, const proprio::Sensor& s2) {
    const auto side = [](double ax, double ay, double bx, double by, double px, double py) {
        return (bx - ax) * (py - ay) - (by - ay) * (px - ax);
    };
    const double d1 = side(s1.u_s, s1.v_s, s1.u_e, s1.v_e, s2.u_s, s2.v_s);
    const double d2 = side(s1.u_s, s1.v_s, s1.u_e, s1.v_e, s2.u_e, s2.v_e);
    const double d3 = side(s2.u_s, s2.v_s, s2.u_e, s2.v_e, s1.u_s, s1.v_s);
    const double d4 = side(s2.u_s, s2.v_s, s2.u_e, s2.v_e, s1.u_e, s1.v_e);
    return d1 * d2 < 0.0 && d3 * d4 < 0.0;
}

/// Exhaustive sampled minimum distance between two sensor curves.
inline double sampled_min_distance(const proprio::BSplineSurface& surface, const proprio::Sensor& s1,
                                   const proprio::Sensor& s2, int K) {
    const auto a = proprio::sample_uv(s1, K);
    const auto b = proprio::sample_uv(s2, K);
    double best = 1e300;
    for (const auto& pa : a) {
        const proprio::Vec3 p = proprio::surface_point(surface, pa.u, pa.v);
        for (const auto& pb : b) {
            const proprio::Vec3 q = proprio::surface_point(surface, pb.u, pb.v);
            const double d = proprio::norm(p - q);
            if (d < best) best = d;
        }
    }
    return best;
}

}  // namespace oracles
