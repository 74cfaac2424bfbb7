#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace beantrap {

// A superconducting strip lying in the film plane y = 0, infinite along x.
// All lengths in metres, k_c in A/m.
struct Strip {
    std::string name;
    double center_z = 0.0;
    double width = 0.0;
    double k_c = 0.0;
    bool carries_transport = false;

    double left() const { return center_z - 0.5 * width; }
    double right() const { return center_z + 0.5 * width; }
    double critical_current() const { return k_c * width; }
};

struct Element {
    std::size_t strip = 0;
    double center_z = 0.0;
    double width = 0.0;

    double left() const { return center_z - 0.5 * width; }
    double right() const { return center_z + 0.5 * width; }
};

struct LayoutDescription {
    std::vector<Strip> strips;
    double element_width = 3e-6;
};

// Half-open index range into ChipLayout::elements().
struct ElementRange {
    std::size_t begin = 0;
    std::size_t end = 0;
    std::size_t size() const { return end - begin; }
};

/// Immutable discretized chip cross-section.
///
/// Elements are stored strip by strip in the order the strips were given,
/// with centres increasing inside each strip. Strips whose width is not a
/// multiple of the nominal element width are tiled by ceil(width / nominal)
/// equal elements, so the tiling is always exact.
class ChipLayout {
public:
    static ChipLayout build(const LayoutDescription& config);

    std::span<const Strip> strips() const { return strips_; }
    std::span<const Element> elements() const { return elements_; }
    std::size_t size() const { return elements_.size(); }
    double element_width() const { return element_width_; }

    ElementRange elements_of(std::size_t strip) const { return ranges_.at(strip); }
    std::size_t strip_of(std::size_t element) const { return elements_.at(element).strip; }
    std::size_t strip_index(const std::string& name) const;

    // Per-element critical sheet current (A/m) and width (m).
    std::vector<double> critical_densities() const;
    std::vector<double> widths() const;

    /// SHA-256 over a canonical text rendering of strips and elements.
    std::string hash() const;

private:
    std::vector<Strip> strips_;
    std::vector<Element> elements_;
    std::vector<ElementRange> ranges_;
    double element_width_ = 0.0;
};

inline constexpr double kDefaultUZGap = 57e-6;

// Z-wire (40 µm, centred on the origin) and U-wire (300 µm) on the +z side,
// both at K_C = 45 mA/µm. gap is the edge-to-edge separation.
ChipLayout default_chip_layout(double gap = kDefaultUZGap, double element_width = 3e-6);
LayoutDescription default_chip_description(double gap = kDefaultUZGap,
                                            double element_width = 3e-6);

}  // namespace beantrap
