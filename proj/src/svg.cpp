#include "proprio/svg.hpp"

#include <charconv>
#include <sstream>

namespace proprio {

namespace {

constexpr double kMargin = 20.0;
constexpr double kPlot = 600.0;

std::string fixed(double value, int precision) {
    char buffer[48];
    const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value, std::chars_format::fixed, precision);
    return std::string(buffer, result.ptr);
}

double px(double u) { return kMargin + kPlot * u; }

}  // namespace

std::string layout_svg(const SensorLayout& layout, const SvgOptions& options) {
    const std::vector<int> active = active_sensors(layout, options.threshold);
    std::vector<bool> is_active(static_cast<std::size_t>(layout.size()), false);
    for (const int k : active) is_active[static_cast<std::size_t>(k)] = true;

    std::ostringstream out;
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"700\" viewBox=\"0 0 640 700\">\n";
    out << "  <rect x=\"" << fixed(kMargin, 1) << "\" y=\"" << fixed(kMargin, 1) << "\" width=\""
        << fixed(kPlot, 1) << "\" height=\"" << fixed(kPlot, 1)
        << "\" fill=\"white\" stroke=\"black\" stroke-width=\"1\"/>\n";

    for (int k = 0; k < layout.size(); ++k) {
        const Sensor& s = layout.sensors[static_cast<std::size_t>(k)];
        const double x1 = px(s.u_s);
        const double y1 = px(s.v_s);
        const double x2 = px(s.u_e);
        const double y2 = px(s.v_e);
        if (is_active[static_cast<std::size_t>(k)]) {
            out << "  <line x1=\"" << fixed(x1, 3) << "\" y1=\"" << fixed(y1, 3) << "\" x2=\"" << fixed(x2, 3)
                << "\" y2=\"" << fixed(y2, 3) << "\" stroke=\"#1f3b80\" stroke-width=\"3\"/>\n";
            out << "  <text x=\"" << fixed(0.5 * (x1 + x2) + 4.0, 3) << "\" y=\"" << fixed(0.5 * (y1 + y2) - 4.0, 3)
                << "\" font-family=\"monospace\" font-size=\"14\" fill=\"#1f3b80\">" << k << "</text>\n";
        } else {
            out << "  <line x1=\"" << fixed(x1, 3) << "\" y1=\"" << fixed(y1, 3) << "\" x2=\"" << fixed(x2, 3)
                << "\" y2=\"" << fixed(y2, 3)
                << "\" stroke=\"#9a9a9a\" stroke-width=\"1.5\" stroke-dasharray=\"6 4\"/>\n";
        }
    }

    out << "  <text x=\"" << fixed(kMargin, 1)
        << "\" y=\"655\" font-family=\"monospace\" font-size=\"16\" fill=\"black\">active: " << active.size()
        << "</text>\n";
    if (options.total_masked_length_mm.has_value()) {
        out << "  <text x=\"" << fixed(kMargin, 1)
            << "\" y=\"678\" font-family=\"monospace\" font-size=\"16\" fill=\"black\">total masked length: "
            << fixed(*options.total_masked_length_mm, 1) << " mm</text>\n";
    }
    out << "</svg>\n";
    return out.str();
}

}  // namespace proprio
