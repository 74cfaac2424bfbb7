#include "beantrap/geometry.hpp"

#include "beantrap/error.hpp"
#include "beantrap/hash.hpp"
#include "beantrap/units.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>

namespace beantrap {

namespace {

void validate(const LayoutDescription& config) {
    if (config.strips.empty()) throw ValidationError("layout has no strips");
    if (!(config.element_width > 0.0) || !std::isfinite(config.element_width))
        throw ValidationError("element width must be positive");
    for (const auto& s : config.strips) {
        if (!(s.width > 0.0) || !std::isfinite(s.width))
            throw ValidationError(fmt::format("strip '{}': width must be positive", s.name));
        if (!(s.k_c > 0.0) || !std::isfinite(s.k_c))
            throw ValidationError(fmt::format("strip '{}': K_C must be positive", s.name));
        if (!std::isfinite(s.center_z))
            throw ValidationError(fmt::format("strip '{}': centre is not finite", s.name));
        if (config.element_width > s.width * (1.0 + 1e-12))
            throw ValidationError(fmt::format(
                "strip '{}': element width {:.4g} um exceeds strip width {:.4g} um", s.name,
                to_um(config.element_width), to_um(s.width)));
    }
    for (std::size_t a = 0; a < config.strips.size(); ++a) {
        for (std::size_t b = a + 1; b < config.strips.size(); ++b) {
            const auto& s1 = config.strips[a];
            const auto& s2 = config.strips[b];
            if (s1.name == s2.name)
                throw ValidationError(fmt::format("duplicate strip name '{}'", s1.name));
            const double sep = std::abs(s1.center_z - s2.center_z);
            const double need = 0.5 * (s1.width + s2.width);
            if (sep < need * (1.0 - 1e-12))
                throw GeometryError(fmt::format("strips '{}' and '{}' overlap by {:.4g} um",
                                                s1.name, s2.name, to_um(need - sep)));
        }
    }
}

}  // namespace

ChipLayout ChipLayout::build(const LayoutDescription& config) {
    validate(config);
    ChipLayout layout;
    layout.strips_ = config.strips;
    layout.element_width_ = config.element_width;
    for (std::size_t s = 0; s < config.strips.size(); ++s) {
        const Strip& strip = config.strips[s];
        // Tolerate round-off so 300 um / 3 um gives 100, not 101.
        const auto count = static_cast<std::size_t>(
            std::max(1.0, std::ceil(strip.width / config.element_width - 1e-9)));
        const double w = strip.width / static_cast<double>(count);
        ElementRange range{layout.elements_.size(), layout.elements_.size() + count};
        for (std::size_t j = 0; j < count; ++j) {
            const double lo = strip.left() + w * static_cast<double>(j);
            const double hi = (j + 1 == count) ? strip.right() : strip.left() + w * static_cast<double>(j + 1);
            layout.elements_.push_back(Element{s, 0.5 * (lo + hi), hi - lo});
        }
        layout.ranges_.push_back(range);
    }
    return layout;
}

std::size_t ChipLayout::strip_index(const std::string& name) const {
    auto it = std::find_if(strips_.begin(), strips_.end(),
                           [&](const Strip& s) { return s.name == name; });
    if (it == strips_.end()) throw ValidationError("unknown strip '" + name + "'");
    return static_cast<std::size_t>(it - strips_.begin());
}

std::vector<double> ChipLayout::critical_densities() const {
    std::vector<double> out;
    out.reserve(elements_.size());
    for (const auto& e : elements_) out.push_back(strips_[e.strip].k_c);
    return out;
}

std::vector<double> ChipLayout::widths() const {
    std::vector<double> out;
    out.reserve(elements_.size());
    for (const auto& e : elements_) out.push_back(e.width);
    return out;
}

std::string ChipLayout::hash() const {
    std::string text = fmt::format("element_width={:.17g}\n", element_width_);
    for (const auto& s : strips_)
        text += fmt::format("strip {} {:.17g} {:.17g} {:.17g} {}\n", s.name, s.center_z, s.width,
                            s.k_c, s.carries_transport ? 1 : 0);
    for (const auto& e : elements_)
        text += fmt::format("el {} {:.17g} {:.17g}\n", e.strip, e.center_z, e.width);
    return sha256_hex(text);
}

LayoutDescription default_chip_description(double gap, double element_width) {
    constexpr double k_c = 45.0 * kMilliAmpPerMicron;
    const double z_width = 40e-6;
    const double u_width = 300e-6;
    LayoutDescription d;
    d.element_width = element_width;
    d.strips.push_back(Strip{"Z", 0.0, z_width, k_c, true});
    d.strips.push_back(Strip{"U", 0.5 * z_width + gap + 0.5 * u_width, u_width, k_c, true});
    return d;
}

ChipLayout default_chip_layout(double gap, double element_width) {
    return ChipLayout::build(default_chip_description(gap, element_width));
}

}  // namespace beantrap
