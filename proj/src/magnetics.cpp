#include "beantrap/magnetics.hpp"

#include "beantrap/error.hpp"
#include "beantrap/parallel.hpp"
#include "beantrap/units.hpp"

#include <boost/math/quadrature/gauss.hpp>
#include <fmt/format.h>

#include <cmath>
#include <numbers>
#include <ostream>

namespace beantrap {

namespace {

constexpr double kSingularDistance = 0.1e-6;
constexpr double kMu0Over4Pi = kMu0 / (4.0 * std::numbers::pi);

void check_regular(const ChipLayout& layout, double y, double z) {
    if (std::abs(y) >= kSingularDistance) return;
    for (const auto& s : layout.strips())
        if (z >= s.left() && z <= s.right())
            throw SingularPointError(fmt::format("field evaluated on strip '{}' at (y, z) = ({:.3f}, {:.3f}) um",
                                                 s.name, to_um(y), to_um(z)));
}

}  // namespace

BiasField BiasField::from_gauss(double bx, double by, double bz) {
    return {beantrap::from_gauss(bx), beantrap::from_gauss(by), beantrap::from_gauss(bz)};
}

FieldVector sheet_field(double k, double z_l, double z_r, double y, double z) {
    const double al = z - z_l;
    const double ar = z - z_r;
    const double y2 = y * y;
    const double by = kMu0Over4Pi * k * std::log((ar * ar + y2) / (al * al + y2));
    // Angle subtended by the sheet; sign follows y.
    const double bz = kMu0Over2Pi * k * std::atan2((z_r - z_l) * y, y2 + al * ar);
    return {0.0, by, bz};
}

FieldVector field_from_currents(const ChipLayout& layout, const Eigen::VectorXd& k,
                                const BiasField& bias, double y, double z) {
    check_regular(layout, y, z);
    FieldVector b = bias.vector();
    const auto elems = layout.elements();
    for (std::size_t i = 0; i < elems.size(); ++i) {
        const double ki = k(static_cast<Eigen::Index>(i));
        if (ki == 0.0) continue;
        const auto f = sheet_field(ki, elems[i].left(), elems[i].right(), y, z);
        b.y += f.y;
        b.z += f.z;
    }
    return b;
}

FieldVector field_at(const ChipLayout& layout, const CriticalState& state, const BiasField& bias,
                     double y, double z) {
    if (!state.superconducting) {
        check_regular(layout, y, z);
        return bias.vector();
    }
    return field_from_currents(layout, state.k, bias, y, z);
}

std::size_t GridSpec::ny() const {
    return static_cast<std::size_t>(std::floor((y_max - y_min) / spacing + 1e-9)) + 1;
}

std::size_t GridSpec::nz() const {
    return static_cast<std::size_t>(std::floor((z_max - z_min) / spacing + 1e-9)) + 1;
}

void GridSpec::validate() const {
    if (!(spacing > 0.0) || !std::isfinite(spacing)) throw ValidationError("grid spacing must be positive");
    if (!(y_max >= y_min) || !(z_max >= z_min)) throw ValidationError("grid bounds are inverted");
    if (!std::isfinite(y_min + y_max + z_min + z_max)) throw ValidationError("grid bounds are not finite");
}

FieldMap field_map(const ChipLayout& layout, const CriticalState& state, const BiasField& bias,
                   const GridSpec& grid, unsigned workers) {
    grid.validate();
    FieldMap map;
    map.grid = grid;
    map.crosses_film = grid.y_min <= 0.0;
    const std::size_t ny = grid.ny();
    const std::size_t nz = grid.nz();
    map.b.resize(ny * nz);
    parallel_for(ny, workers, [&](std::size_t iy) {
        for (std::size_t iz = 0; iz < nz; ++iz) {
            try {
                map.b[iy * nz + iz] = field_at(layout, state, bias, grid.y(iy), grid.z(iz));
            } catch (const SingularPointError& e) {
                throw SingularPointError(fmt::format("node ({}, {}): {}", iy, iz, e.what()));
            }
        }
    });
    return map;
}

void write_field_map_csv(std::ostream& out, const FieldMap& map) {
    const auto& g = map.grid;
    out << "# beantrap field map\n";
    out << fmt::format("# grid y_min_um={:.6f} y_max_um={:.6f} z_min_um={:.6f} z_max_um={:.6f} "
                       "spacing_um={:.6f} ny={} nz={}\n",
                       to_um(g.y_min), to_um(g.y_max), to_um(g.z_min), to_um(g.z_max), to_um(g.spacing),
                       map.ny(), map.nz());
    out << "# units: y,z in um; field components in gauss; rows ordered by y then z\n";
    if (map.crosses_film) out << "# warning: grid reaches the film plane y <= 0\n";
    out << "y_um,z_um,Bx_G,By_G,Bz_G,Bmag_G\n";
    for (std::size_t iy = 0; iy < map.ny(); ++iy)
        for (std::size_t iz = 0; iz < map.nz(); ++iz) {
            const auto& b = map.at(iy, iz);
            out << fmt::format("{:.4f},{:.4f},{:.9e},{:.9e},{:.9e},{:.9e}\n", to_um(g.y(iy)), to_um(g.z(iz)),
                               to_gauss(b.x), to_gauss(b.y), to_gauss(b.z), to_gauss(b.norm()));
        }
}

double circulation(const ChipLayout& layout, const Eigen::VectorXd& k, const BiasField& bias,
                   double y_bottom, double y_top, double z_left, double z_right, int panels) {
    using Rule = boost::math::quadrature::gauss<double, 20>;
    // Straight segment from (y0, z0) to (y1, z1): ∫ B·t ds.
    auto segment = [&](double y0, double z0, double y1, double z1) {
        const double len = std::hypot(y1 - y0, z1 - z0);
        const double ty = (y1 - y0) / len;
        const double tz = (z1 - z0) / len;
        double total = 0.0;
        for (int p = 0; p < panels; ++p) {
            const double s0 = len * p / panels;
            const double s1 = len * (p + 1) / panels;
            total += Rule::integrate(
                [&](double s) {
                    const auto b = field_from_currents(layout, k, bias, y0 + ty * s, z0 + tz * s);
                    return b.y * ty + b.z * tz;
                },
                s0, s1);
        }
        return total;
    };
    return segment(y_top, z_left, y_top, z_right) + segment(y_top, z_right, y_bottom, z_right) +
           segment(y_bottom, z_right, y_bottom, z_left) + segment(y_bottom, z_left, y_top, z_left);
}

}  // namespace beantrap
