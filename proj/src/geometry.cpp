#include "proprio/geometry.hpp"

#include <algorithm>
#include <array>
#include <stdexcept>

#include <json.hpp>

namespace proprio {

namespace {

void require_unit_interval(double u, double v) {
    if (!(u >= 0.0 && u <= 1.0 && v >= 0.0 && v <= 1.0))
        throw std::domain_error("surface parameter outside [0,1]x[0,1]");
}

/// Index of the knot span containing u: the largest j with knots[j] <= u
/// among the nonempty spans [degree, basis_count-1]. u=1 maps to the last
/// nonempty span (left-limit convention).
int find_span(const KnotVector& knots, double u) {
    const int nb = knots.basis_count();
    if (u >= 1.0) return nb - 1;
    const auto& t = knots.values;
    const auto it = std::upper_bound(t.begin() + kDegree + 1, t.begin() + nb, u);
    return static_cast<int>(it - t.begin()) - 1;
}

/// The four order-4 basis values N_{span-3+r}(u), r=0..3, via the triangular
/// Cox-de Boor scheme. When `dN` is non-null the degree-2 row is kept and the
/// derivatives are assembled from it with the standard formula
/// N'_{i,4} = 3/(t_{i+3}-t_i) N_{i,3} - 3/(t_{i+4}-t_{i+1}) N_{i+1,3},
/// zero-denominator terms dropped.
void basis_window(const KnotVector& knots, int span, double u, double N[4], double* dN) {
    const auto& t = knots.values;
    double left[4];
    double right[4];
    double n3[3] = {0.0, 0.0, 0.0};

    N[0] = 1.0;
    for (int j = 1; j <= kDegree; ++j) {
        left[j] = u - t[static_cast<std::size_t>(span + 1 - j)];
        right[j] = t[static_cast<std::size_t>(span + j)] - u;
        double saved = 0.0;
        for (int r = 0; r < j; ++r) {
            const double temp = N[r] / (right[r + 1] + left[j - r]);
            N[r] = saved + right[r + 1] * temp;
            saved = left[j - r] * temp;
        }
        N[j] = saved;
        if (dN != nullptr && j == kDegree - 1) {
            n3[0] = N[0];
            n3[1] = N[1];
            n3[2] = N[2];
        }
    }

    if (dN != nullptr) {
        for (int r = 0; r <= kDegree; ++r) {
            const int i = span - kDegree + r;
            double value = 0.0;
            const double da = t[static_cast<std::size_t>(i + 3)] - t[static_cast<std::size_t>(i)];
            if (r >= 1 && da > 0.0) value += 3.0 / da * n3[r - 1];
            const double db = t[static_cast<std::size_t>(i + 4)] - t[static_cast<std::size_t>(i + 1)];
            if (r <= 2 && db > 0.0) value -= 3.0 / db * n3[r];
            dN[r] = value;
        }
    }
}

}  // namespace

KnotVector make_clamped_knots(int count) {
    if (count < 4) throw std::invalid_argument("clamped cubic knots need at least 4 basis functions");
    KnotVector knots;
    knots.values.resize(static_cast<std::size_t>(count) + 4);
    const int spans = count - kDegree;  // number of nonempty spans
    for (int i = 0; i <= kDegree; ++i) knots.values[static_cast<std::size_t>(i)] = 0.0;
    for (int i = 1; i < spans; ++i)
        knots.values[static_cast<std::size_t>(kDegree + i)] = static_cast<double>(i) / spans;
    for (int i = 0; i <= kDegree; ++i) knots.values[static_cast<std::size_t>(count + i)] = 1.0;
    return knots;
}

std::vector<double> greville_abscissae(const KnotVector& knots) {
    const int nb = knots.basis_count();
    std::vector<double> result(static_cast<std::size_t>(nb));
    for (int i = 0; i < nb; ++i) {
        result[static_cast<std::size_t>(i)] = (knots.values[static_cast<std::size_t>(i + 1)] +
                                               knots.values[static_cast<std::size_t>(i + 2)] +
                                               knots.values[static_cast<std::size_t>(i + 3)]) /
                                              3.0;
    }
    return result;
}

double basis_value(const KnotVector& knots, int i, double u) {
    if (i < 0 || i >= knots.basis_count()) throw std::invalid_argument("basis index out of range");
    require_unit_interval(u, 0.0);
    const int span = find_span(knots, u);
    if (i < span - kDegree || i > span) return 0.0;
    double N[4];
    basis_window(knots, span, u, N, nullptr);
    return N[i - (span - kDegree)];
}

double basis_derivative(const KnotVector& knots, int i, double u) {
    if (i < 0 || i >= knots.basis_count()) throw std::invalid_argument("basis index out of range");
    require_unit_interval(u, 0.0);
    const int span = find_span(knots, u);
    if (i < span - kDegree || i > span) return 0.0;
    double N[4];
    double dN[4];
    basis_window(knots, span, u, N, dN);
    return dN[i - (span - kDegree)];
}

BSplineSurface make_surface(int m, int n, ControlGrid control_points) {
    if (m < 4 || n < 4) throw std::invalid_argument("cubic surface needs m >= 4 and n >= 4");
    if (static_cast<int>(control_points.size()) != m * n)
        throw std::invalid_argument("control grid size does not match m*n");
    BSplineSurface surface;
    surface.m = m;
    surface.n = n;
    surface.control_points = std::move(control_points);
    surface.knots_u = make_clamped_knots(m);
    surface.knots_v = make_clamped_knots(n);
    return surface;
}

BSplineSurface make_flat_surface(int m, int n, double width_mm, double height_mm) {
    if (m < 4 || n < 4) throw std::invalid_argument("cubic surface needs m >= 4 and n >= 4");
    const KnotVector ku = make_clamped_knots(m);
    const KnotVector kv = make_clamped_knots(n);
    const std::vector<double> gu = greville_abscissae(ku);
    const std::vector<double> gv = greville_abscissae(kv);
    ControlGrid grid(static_cast<std::size_t>(m) * static_cast<std::size_t>(n));
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j)
            grid[static_cast<std::size_t>(i) * n + j] = {width_mm * gu[static_cast<std::size_t>(i)],
                                                         height_mm * gv[static_cast<std::size_t>(j)], 0.0};
    return make_surface(m, n, std::move(grid));
}

void surface_eval(const BSplineSurface& surface, double u, double v, Vec3* point, Vec3* du, Vec3* dv) {
    require_unit_interval(u, v);
    const int su = find_span(surface.knots_u, u);
    const int sv = find_span(surface.knots_v, v);
    double bu[4];
    double bv[4];
    double dbu[4];
    double dbv[4];
    basis_window(surface.knots_u, su, u, bu, du != nullptr ? dbu : nullptr);
    basis_window(surface.knots_v, sv, v, bv, dv != nullptr ? dbv : nullptr);

    Vec3 p{};
    Vec3 pu{};
    Vec3 pv{};
    const int n = surface.n;
    for (int a = 0; a < 4; ++a) {
        const int i = su - kDegree + a;
        const Vec3* row = &surface.control_points[static_cast<std::size_t>(i) * n + (sv - kDegree)];
        Vec3 rowPoint{};
        for (int b = 0; b < 4; ++b) rowPoint += bv[b] * row[b];
        if (point != nullptr || du != nullptr) {
            if (point != nullptr) p += bu[a] * rowPoint;
            if (du != nullptr) pu += dbu[a] * rowPoint;
        }
        if (dv != nullptr) {
            Vec3 rowDeriv{};
            for (int b = 0; b < 4; ++b) rowDeriv += dbv[b] * row[b];
            pv += bu[a] * rowDeriv;
        }
    }
    if (point != nullptr) *point = p;
    if (du != nullptr) *du = pu;
    if (dv != nullptr) *dv = pv;
}

Vec3 surface_point(const BSplineSurface& surface, double u, double v) {
    Vec3 p;
    surface_eval(surface, u, v, &p, nullptr, nullptr);
    return p;
}

SurfacePartials surface_partials(const BSplineSurface& surface, double u, double v) {
    SurfacePartials partials;
    surface_eval(surface, u, v, nullptr, &partials.du, &partials.dv);
    return partials;
}

std::string surface_to_json(const BSplineSurface& surface) {
    nlohmann::json j;
    j["m"] = surface.m;
    j["n"] = surface.n;
    nlohmann::json pts = nlohmann::json::array();
    for (const Vec3& p : surface.control_points) pts.push_back({p.x, p.y, p.z});
    j["control_points"] = std::move(pts);
    return j.dump();
}

BSplineSurface surface_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    const int m = j.at("m").get<int>();
    const int n = j.at("n").get<int>();
    ControlGrid grid;
    grid.reserve(j.at("control_points").size());
    for (const auto& p : j.at("control_points"))
        grid.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
    return make_surface(m, n, std::move(grid));
}

}  // namespace proprio
