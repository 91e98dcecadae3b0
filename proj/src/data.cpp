#include "proprio/data.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "proprio/rng.hpp"

namespace proprio {

ShapeDataset generate_synthetic_dataset(const GenConfig& cfg) {
    if (cfg.m < 4 || cfg.n < 4) throw std::invalid_argument("dataset grid needs m, n >= 4");
    if (cfg.count < 1) throw std::invalid_argument("dataset needs count >= 1");
    if (cfg.modes < 1) throw std::invalid_argument("dataset needs modes >= 1");
    if (cfg.amplitude_mm < 0.0) throw std::invalid_argument("amplitude must be nonnegative");

    const BSplineSurface flat = make_flat_surface(cfg.m, cfg.n, cfg.width_mm, cfg.height_mm);
    const std::vector<double> gu = greville_abscissae(flat.knots_u);
    const std::vector<double> gv = greville_abscissae(flat.knots_v);

    ShapeDataset ds;
    ds.m = cfg.m;
    ds.n = cfg.n;
    ds.width_mm = cfg.width_mm;
    ds.height_mm = cfg.height_mm;
    ds.base = flat.control_points;
    ds.shapes.reserve(static_cast<std::size_t>(cfg.count));

    Rng rng = Rng(cfg.seed).substream("synthetic-shapes");
    constexpr double pi = std::numbers::pi;
    constexpr double two_pi = 2.0 * std::numbers::pi;

    // Every shape shares a fixed dome pedestal so the ensemble deforms around
    // a curved state, the way physical skins do. On an exactly flat sheet the
    // chord length is quadratic in any out-of-plane deflection, which makes
    // mode signs nearly unobservable from length signals; the pedestal
    // restores first-order observability.
    const double pedestal = 3.0 * cfg.amplitude_mm;

    // The mode basis (frequencies, phases, directions) is drawn once per
    // dataset; shapes differ only in their per-shape mode amplitudes. This
    // keeps the deformation space low-dimensional, like actuator-driven
    // hardware, so specific surface regions carry persistent information.
    std::vector<int> p(static_cast<std::size_t>(cfg.modes));
    std::vector<int> q(static_cast<std::size_t>(cfg.modes));
    std::vector<double> phi(static_cast<std::size_t>(cfg.modes));
    std::vector<double> psi(static_cast<std::size_t>(cfg.modes));
    std::vector<Vec3> dir(static_cast<std::size_t>(cfg.modes));
    for (int r = 0; r < cfg.modes; ++r) {
        p[static_cast<std::size_t>(r)] = rng.uniform_int(1, 3);
        q[static_cast<std::size_t>(r)] = rng.uniform_int(1, 3);
        phi[static_cast<std::size_t>(r)] = rng.uniform(0.0, two_pi);
        psi[static_cast<std::size_t>(r)] = rng.uniform(0.0, two_pi);
        const double z = 0.8;  // strongest in-plane component compatible with z-dominance
        (void)rng.uniform(0.0, 1.0);  // keep the stream layout stable
        const double theta = rng.uniform(0.0, two_pi);
        const double xy = std::sqrt(1.0 - z * z);
        dir[static_cast<std::size_t>(r)] = {xy * std::cos(theta), xy * std::sin(theta), z};
    }

    // per-control-point mode fields, precomputed once
    const std::size_t grid_size = static_cast<std::size_t>(cfg.m) * static_cast<std::size_t>(cfg.n);
    std::vector<double> field(static_cast<std::size_t>(cfg.modes) * grid_size);
    for (int r = 0; r < cfg.modes; ++r)
        for (int i = 0; i < cfg.m; ++i)
            for (int j = 0; j < cfg.n; ++j)
                field[static_cast<std::size_t>(r) * grid_size + static_cast<std::size_t>(i) * cfg.n + j] =
                    std::sin(pi * p[static_cast<std::size_t>(r)] * gu[static_cast<std::size_t>(i)] +
                             phi[static_cast<std::size_t>(r)]) *
                    std::sin(pi * q[static_cast<std::size_t>(r)] * gv[static_cast<std::size_t>(j)] +
                             psi[static_cast<std::size_t>(r)]);

    // dome plus a diagonal second harmonic: richer slope structure means
    // short sensors already see informative length changes
    std::vector<double> dome(grid_size);
    for (int i = 0; i < cfg.m; ++i)
        for (int j = 0; j < cfg.n; ++j) {
            const double u = gu[static_cast<std::size_t>(i)];
            const double v = gv[static_cast<std::size_t>(j)];
            dome[static_cast<std::size_t>(i) * cfg.n + j] =
                pedestal * (std::sin(pi * u) * std::sin(pi * v) +
                            0.4 * std::sin(2.0 * pi * u) * std::sin(2.0 * pi * v));
        }

    for (int s = 0; s < cfg.count; ++s) {
        std::vector<double> amp(static_cast<std::size_t>(cfg.modes));
        for (int r = 0; r < cfg.modes; ++r)
            amp[static_cast<std::size_t>(r)] = rng.uniform(-cfg.amplitude_mm, cfg.amplitude_mm);

        ControlGrid grid = ds.base;
        for (std::size_t g = 0; g < grid_size; ++g) {
            Vec3& point = grid[g];
            point.z += dome[g];
            for (int r = 0; r < cfg.modes; ++r)
                point += (amp[static_cast<std::size_t>(r)] * field[static_cast<std::size_t>(r) * grid_size + g]) *
                         dir[static_cast<std::size_t>(r)];
        }
        ds.shapes.push_back(std::move(grid));
    }

    nlohmann::json prov;
    prov["generator"] = "sinusoidal-modes";
    prov["m"] = cfg.m;
    prov["n"] = cfg.n;
    prov["width_mm"] = cfg.width_mm;
    prov["height_mm"] = cfg.height_mm;
    prov["count"] = cfg.count;
    prov["modes"] = cfg.modes;
    prov["amplitude_mm"] = cfg.amplitude_mm;
    prov["seed"] = cfg.seed;
    ds.provenance_json = prov.dump();
    return ds;
}

std::pair<ShapeDataset, ShapeDataset> split_dataset(const ShapeDataset& ds, double train_fraction,
                                                    std::uint64_t seed) {
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw std::invalid_argument("train fraction must be in (0, 1)");
    std::vector<int> order(static_cast<std::size_t>(ds.count()));
    std::iota(order.begin(), order.end(), 0);
    Rng rng = Rng(seed).substream("dataset-split");
    shuffle(order, rng);

    const int train_count = static_cast<int>(std::ceil(train_fraction * ds.count()));
    ShapeDataset train = ds;
    ShapeDataset test = ds;
    train.shapes.clear();
    test.shapes.clear();
    for (int i = 0; i < ds.count(); ++i) {
        const ControlGrid& grid = ds.shapes[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])];
        if (i < train_count)
            train.shapes.push_back(grid);
        else
            test.shapes.push_back(grid);
    }

    nlohmann::json prov;
    prov["parent"] = nlohmann::json::parse(ds.provenance_json.empty() ? "{}" : ds.provenance_json);
    prov["split_seed"] = seed;
    prov["train_fraction"] = train_fraction;
    nlohmann::json train_prov = prov;
    train_prov["split"] = "train";
    nlohmann::json test_prov = prov;
    test_prov["split"] = "test";
    train.provenance_json = train_prov.dump();
    test.provenance_json = test_prov.dump();
    return {std::move(train), std::move(test)};
}

namespace {

nlohmann::json grid_to_json(const ControlGrid& grid) {
    nlohmann::json rows = nlohmann::json::array();
    for (const Vec3& p : grid) rows.push_back({p.x, p.y, p.z});
    return rows;
}

ControlGrid grid_from_json(const nlohmann::json& rows, std::size_t expected) {
    ControlGrid grid;
    grid.reserve(rows.size());
    for (const auto& p : rows)
        grid.push_back({p.at(0).get<double>(), p.at(1).get<double>(), p.at(2).get<double>()});
    if (grid.size() != expected) throw std::invalid_argument("dataset grid does not match schema m*n");
    return grid;
}

}  // namespace

std::string dataset_to_json(const ShapeDataset& ds) {
    nlohmann::json j;
    j["format_version"] = 1;
    j["m"] = ds.m;
    j["n"] = ds.n;
    j["width_mm"] = ds.width_mm;
    j["height_mm"] = ds.height_mm;
    j["base"] = grid_to_json(ds.base);
    nlohmann::json shapes = nlohmann::json::array();
    for (const ControlGrid& grid : ds.shapes) shapes.push_back(grid_to_json(grid));
    j["shapes"] = std::move(shapes);
    j["provenance"] = nlohmann::json::parse(ds.provenance_json.empty() ? "{}" : ds.provenance_json);
    return j.dump();
}

ShapeDataset dataset_from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    if (!j.contains("format_version") || j.at("format_version").get<int>() != 1)
        throw std::runtime_error("unsupported dataset format_version");
    ShapeDataset ds;
    ds.m = j.at("m").get<int>();
    ds.n = j.at("n").get<int>();
    ds.width_mm = j.at("width_mm").get<double>();
    ds.height_mm = j.at("height_mm").get<double>();
    const std::size_t grid_size = static_cast<std::size_t>(ds.m) * static_cast<std::size_t>(ds.n);
    ds.base = grid_from_json(j.at("base"), grid_size);
    for (const auto& rows : j.at("shapes")) ds.shapes.push_back(grid_from_json(rows, grid_size));
    ds.provenance_json = j.at("provenance").dump();
    return ds;
}

void save_dataset(const ShapeDataset& ds, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << dataset_to_json(ds);
    if (!out) throw std::runtime_error("failed writing dataset: " + path);
}

ShapeDataset load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open dataset: " + path);
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return dataset_from_json(buffer.str());
}

BaseShape base_shape(const ShapeDataset& ds) {
    BaseShape base;
    base.m = ds.m;
    base.n = ds.n;
    base.control_points = ds.base;
    return base;
}

BSplineSurface shape_surface(const ShapeDataset& ds, int index) {
    if (index < 0 || index >= ds.count()) throw std::invalid_argument("shape index out of range");
    return make_surface(ds.m, ds.n, ds.shapes[static_cast<std::size_t>(index)]);
}

}  // namespace proprio
