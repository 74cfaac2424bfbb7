#pragma once

#include "beantrap/bean.hpp"
#include "beantrap/geometry.hpp"
#include "beantrap/magnetics.hpp"

#include <optional>
#include <vector>

namespace beantrap {

/// µ_B / k_B in µK per gauss (≈ 67.17).
double bohr_magneton_uK_per_gauss();

struct TrapPotentialParams {
    double g_mf = 1.0;      // g_F·m_F; 1 for |F=2, m_F=2⟩ of 87Rb
    bool gravity = false;   // adds m·g·z (gravity along −z)
    double mass = 1.443160648e-25;  // kg, 87Rb

    void validate() const;
};

/// Zeeman energy g_F m_F µ_B |B| in µK (gravity not included).
double potential(const FieldVector& b, const TrapPotentialParams& params = {});

/// Edge-summed evaluator for the field of a fixed current distribution.
///
/// Samples off the film plane only (y > 0); uses the telescoped form of the
/// per-element sheet formula, with one log and one arctangent per strip edge
/// where the sheet current jumps.
class SheetField {
public:
    SheetField(const ChipLayout& layout, const CriticalState& state, const BiasField& bias);
    FieldVector operator()(double y, double z) const;

private:
    std::vector<double> edge_z_;
    std::vector<double> jump_;
    BiasField bias_;
};

class PotentialEvaluator {
public:
    PotentialEvaluator(const ChipLayout& layout, const CriticalState& state, const BiasField& bias,
                       const TrapPotentialParams& params = {});
    double operator()(double y, double z) const;
    FieldVector field(double y, double z) const { return field_(y, z); }

private:
    SheetField field_;
    TrapPotentialParams params_;
};

/// Sampled potential U(y, z) in µK over a grid (row-major iy·nz + iz).
struct PotentialGrid {
    GridSpec grid;
    std::vector<double> u;

    std::size_t ny() const { return grid.ny(); }
    std::size_t nz() const { return grid.nz(); }
    double at(std::size_t iy, std::size_t iz) const { return u[iy * nz() + iz]; }
    double min() const;
};

PotentialGrid sample_potential(const PotentialEvaluator& eval, const GridSpec& grid, unsigned workers = 1);
PotentialGrid potential_from_map(const FieldMap& map, const TrapPotentialParams& params = {});

struct SearchWindow {
    double y_min = 1e-6;
    double y_max = 400e-6;
    double z_min = -600e-6;
    double z_max = 800e-6;

    GridSpec grid(double spacing) const { return {y_min, y_max, z_min, z_max, spacing}; }
    void validate() const;
};

struct MinimaOptions {
    double scan_spacing = 2e-6;
    double refine_tolerance = 0.05e-6;
    double merge_distance = 5e-6;
};

struct TrapMinimum {
    double y = 0.0;
    double z = 0.0;
    double u = 0.0;          // µK
    bool refined = false;
    bool boundary = false;   // sits on the search-window edge ("unbounded")
};

struct Saddle {
    double y = 0.0;
    double z = 0.0;
    double u = 0.0;          // µK
    std::size_t first = 0;   // indices into TrapReport::minima
    std::size_t second = 0;
    bool merged = false;
    bool refined = false;
};

struct ContourSet {
    double level = 0.0;  // µK above the reference minimum
    struct Polyline {
        std::vector<std::pair<double, double>> points;  // (y, z) in metres
        bool closed = false;
    };
    std::vector<Polyline> polylines;
};

struct TrapReport {
    std::vector<TrapMinimum> minima;  // sorted by u
    std::vector<Saddle> saddles;
    std::vector<ContourSet> contours;
    double reference_u = 0.0;        // potential the contour levels are measured from
    double merge_threshold = 1.0;    // µK, copied from the saddle options

    /// Merged with another minimum that is not boundary-flagged.
    bool well_merged(std::size_t i) const;
    /// Escape barrier from this well's own bottom to a boundary-flagged
    /// minimum is below the merge threshold: atoms leave the window.
    bool well_leaking(std::size_t i) const;
};

/// Scan + derivative-free refinement of potential minima in the window.
std::vector<TrapMinimum> find_minima(const PotentialEvaluator& eval, const PotentialGrid& scan,
                                     const SearchWindow& window, const MinimaOptions& options = {});

std::vector<TrapMinimum> find_minima(const ChipLayout& layout, const CriticalState& state,
                                     const BiasField& bias, const SearchWindow& window,
                                     const MinimaOptions& options = {},
                                     const TrapPotentialParams& params = {});

struct SaddleOptions {
    double merge_threshold = 1.0;  // µK
    double level_tolerance = 1e-4; // µK, bisection stopping width
};

/// Lowest barrier between two minima on the sampled grid, by bisection on the
/// flooding level, then Newton-refined to the continuous saddle when possible.
/// Throws ValidationError if the two minima coincide.
Saddle find_saddle(const std::vector<TrapMinimum>& minima, std::size_t first, std::size_t second,
                   const PotentialGrid& grid, const PotentialEvaluator* eval,
                   const SaddleOptions& options = {});

/// Flooding level at which the grid nodes nearest to the two points connect
/// (4-neighbour connectivity), found by bisection between lo and hi.
double flooding_level(const PotentialGrid& grid, std::size_t node_a, std::size_t node_b, double lo,
                      double hi, double tolerance);

/// Marching-squares contours of U − reference at each level.
std::vector<ContourSet> equipotential_contours(const PotentialGrid& grid, const std::vector<double>& levels,
                                               double reference);

struct TrapAnalysisOptions {
    MinimaOptions minima;
    SaddleOptions saddle;
    TrapPotentialParams potential;
    std::vector<double> contour_levels;  // µK, empty → none
    unsigned workers = 1;
};

TrapReport analyze_trap(const ChipLayout& layout, const CriticalState& state, const BiasField& bias,
                        const SearchWindow& window, const TrapAnalysisOptions& options = {});

/// Central-difference gradient (µK/m) and Hessian (µK/m²) of U.
struct LocalShape {
    double grad_y = 0.0;
    double grad_z = 0.0;
    double hyy = 0.0;
    double hyz = 0.0;
    double hzz = 0.0;
};
LocalShape local_shape(const PotentialEvaluator& eval, double y, double z, double h = 0.05e-6);

}  // namespace beantrap
