#pragma once

#include "beantrap/bean.hpp"
#include "beantrap/geometry.hpp"

#include <cmath>
#include <iosfwd>
#include <vector>

namespace beantrap {

struct FieldVector {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    double norm() const { return std::sqrt(x * x + y * y + z * z); }
    FieldVector operator+(const FieldVector& o) const { return {x + o.x, y + o.y, z + o.z}; }
};

/// Uniform external field in tesla.
struct BiasField {
    double b_x = 0.0;
    double b_y = 0.0;
    double b_z = 0.0;

    static BiasField from_gauss(double bx, double by, double bz);
    FieldVector vector() const { return {b_x, b_y, b_z}; }
};

/// Field of a uniform sheet current k (A/m, along +x) occupying [z_l, z_r]
/// at y = 0, evaluated at (y, z). The x-component is always zero.
FieldVector sheet_field(double k, double z_l, double z_r, double y, double z);

/// Total field at (y, z): bias plus the field of every element's sheet current.
/// Throws SingularPointError within 0.1 µm of the film plane inside a strip.
FieldVector field_at(const ChipLayout& layout, const CriticalState& state, const BiasField& bias,
                     double y, double z);

/// Same as field_at for an explicit current vector (no superconducting check).
FieldVector field_from_currents(const ChipLayout& layout, const Eigen::VectorXd& k,
                                const BiasField& bias, double y, double z);

struct GridSpec {
    double y_min = 0.0;
    double y_max = 0.0;
    double z_min = 0.0;
    double z_max = 0.0;
    double spacing = 2e-6;

    std::size_t ny() const;
    std::size_t nz() const;
    double y(std::size_t iy) const { return y_min + spacing * static_cast<double>(iy); }
    double z(std::size_t iz) const { return z_min + spacing * static_cast<double>(iz); }
    void validate() const;
};

struct FieldMap {
    GridSpec grid;
    std::vector<FieldVector> b;  // row-major, index iy·nz + iz
    bool crosses_film = false;

    std::size_t ny() const { return grid.ny(); }
    std::size_t nz() const { return grid.nz(); }
    const FieldVector& at(std::size_t iy, std::size_t iz) const { return b[iy * nz() + iz]; }
};

FieldMap field_map(const ChipLayout& layout, const CriticalState& state, const BiasField& bias,
                   const GridSpec& grid, unsigned workers = 1);

/// Writes the '#'-prefixed self-describing header followed by CSV rows
/// (y_um, z_um, Bx_G, By_G, Bz_G, Bmag_G).
void write_field_map_csv(std::ostream& out, const FieldMap& map);

/// ∮ B·dl around the rectangle [y_bottom, y_top] × [z_left, z_right], oriented
/// so that current along +x inside counts positive. Uses composite
/// Gauss–Legendre with `panels` × 20 nodes per side.
double circulation(const ChipLayout& layout, const Eigen::VectorXd& k, const BiasField& bias,
                   double y_bottom, double y_top, double z_left, double z_right, int panels = 64);

}  // namespace beantrap
