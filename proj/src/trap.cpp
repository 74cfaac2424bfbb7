#include "beantrap/trap.hpp"

#include "beantrap/error.hpp"
#include "beantrap/parallel.hpp"
#include "beantrap/units.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <numbers>
#include <queue>
#include <unordered_map>

namespace beantrap {

namespace {

constexpr double kMu0Over4Pi = kMu0 / (4.0 * std::numbers::pi);
constexpr double kStandardGravity = 9.80665;

struct Point2 {
    double y;
    double z;
};

// Nelder–Mead on a rectangle; vertices are clamped into the window.
struct SimplexResult {
    Point2 p;
    double u;
    bool converged;
};

SimplexResult nelder_mead(const PotentialEvaluator& f, Point2 start, double step, const SearchWindow& w,
                          double tolerance) {
    auto clamp = [&](Point2 p) {
        return Point2{std::clamp(p.y, w.y_min, w.y_max), std::clamp(p.z, w.z_min, w.z_max)};
    };
    std::array<Point2, 3> v{clamp(start), clamp({start.y + step, start.z}), clamp({start.y, start.z + step})};
    // A clamped start on a corner can collapse the simplex; push inward instead.
    if (v[1].y == v[0].y) v[1].y = std::clamp(start.y - step, w.y_min, w.y_max);
    if (v[2].z == v[0].z) v[2].z = std::clamp(start.z - step, w.z_min, w.z_max);
    std::array<double, 3> fv{f(v[0].y, v[0].z), f(v[1].y, v[1].z), f(v[2].y, v[2].z)};

    for (int iter = 0; iter < 2000; ++iter) {
        std::array<int, 3> order{0, 1, 2};
        std::sort(order.begin(), order.end(), [&](int a, int b) { return fv[a] < fv[b]; });
        const int best = order[0], mid = order[1], worst = order[2];
        double diam = 0.0;
        for (int i : {mid, worst})
            diam = std::max(diam, std::hypot(v[i].y - v[best].y, v[i].z - v[best].z));
        if (diam < tolerance) return {v[best], fv[best], true};

        const Point2 c{0.5 * (v[best].y + v[mid].y), 0.5 * (v[best].z + v[mid].z)};
        auto along = [&](double t) {
            return clamp(Point2{c.y + t * (v[worst].y - c.y), c.z + t * (v[worst].z - c.z)});
        };
        const Point2 r = along(-1.0);
        const double fr = f(r.y, r.z);
        if (fr < fv[best]) {
            const Point2 e = along(-2.0);
            const double fe = f(e.y, e.z);
            if (fe < fr) { v[worst] = e; fv[worst] = fe; }
            else { v[worst] = r; fv[worst] = fr; }
        } else if (fr < fv[mid]) {
            v[worst] = r; fv[worst] = fr;
        } else {
            const Point2 k = (fr < fv[worst]) ? along(-0.5) : along(0.5);
            const double fk = f(k.y, k.z);
            if (fk < std::min(fr, fv[worst])) {
                v[worst] = k; fv[worst] = fk;
            } else {
                for (int i : {mid, worst}) {
                    v[i] = Point2{0.5 * (v[i].y + v[best].y), 0.5 * (v[i].z + v[best].z)};
                    fv[i] = f(v[i].y, v[i].z);
                }
            }
        }
    }
    const auto it = std::min_element(fv.begin(), fv.end());
    const auto i = static_cast<std::size_t>(it - fv.begin());
    return {v[i], fv[i], false};
}

std::size_t nearest_node(const GridSpec& g, double y, double z) {
    const auto ny = g.ny();
    const auto nz = g.nz();
    const auto iy = static_cast<std::size_t>(std::clamp(std::lround((y - g.y_min) / g.spacing), 0L,
                                                        static_cast<long>(ny) - 1));
    const auto iz = static_cast<std::size_t>(std::clamp(std::lround((z - g.z_min) / g.spacing), 0L,
                                                        static_cast<long>(nz) - 1));
    return iy * nz + iz;
}

template <class Visit>
void for_each_neighbour4(std::size_t node, std::size_t ny, std::size_t nz, Visit&& visit) {
    const std::size_t iy = node / nz;
    const std::size_t iz = node % nz;
    if (iy > 0) visit(node - nz);
    if (iy + 1 < ny) visit(node + nz);
    if (iz > 0) visit(node - 1);
    if (iz + 1 < nz) visit(node + 1);
}

bool connected_below(const PotentialGrid& grid, std::size_t a, std::size_t b, double level) {
    if (grid.u[a] > level || grid.u[b] > level) return false;
    const std::size_t ny = grid.ny(), nz = grid.nz();
    std::vector<char> seen(grid.u.size(), 0);
    std::vector<std::size_t> stack{a};
    seen[a] = 1;
    while (!stack.empty()) {
        const std::size_t n = stack.back();
        stack.pop_back();
        if (n == b) return true;
        for_each_neighbour4(n, ny, nz, [&](std::size_t m) {
            if (!seen[m] && grid.u[m] <= level) {
                seen[m] = 1;
                stack.push_back(m);
            }
        });
    }
    return false;
}

// Node with the highest potential on the minimax path from a to b.
std::size_t bottleneck_node(const PotentialGrid& grid, std::size_t a, std::size_t b) {
    const std::size_t ny = grid.ny(), nz = grid.nz();
    const std::size_t npts = grid.u.size();
    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> cost(npts, inf);
    std::vector<std::size_t> parent(npts, npts);
    using Item = std::pair<double, std::size_t>;
    std::priority_queue<Item, std::vector<Item>, std::greater<>> open;
    cost[a] = grid.u[a];
    open.emplace(cost[a], a);
    while (!open.empty()) {
        const auto [c, n] = open.top();
        open.pop();
        if (c > cost[n]) continue;
        if (n == b) break;
        for_each_neighbour4(n, ny, nz, [&](std::size_t m) {
            const double nc = std::max(c, grid.u[m]);
            if (nc < cost[m]) {
                cost[m] = nc;
                parent[m] = n;
                open.emplace(nc, m);
            }
        });
    }
    std::size_t worst = b;
    for (std::size_t n = b; n != npts; n = parent[n])
        if (grid.u[n] > grid.u[worst]) worst = n;
    return worst;
}

}  // namespace

double bohr_magneton_uK_per_gauss() { return kBohrMagneton / kBoltzmann * kGauss * 1e6; }

void TrapPotentialParams::validate() const {
    if (!(g_mf > 0.0)) throw ValidationError("g_F·m_F must be positive (weak-field seeker)");
}

double potential(const FieldVector& b, const TrapPotentialParams& params) {
    return params.g_mf * (kBohrMagneton / kBoltzmann) * b.norm() * 1e6;
}

SheetField::SheetField(const ChipLayout& layout, const CriticalState& state, const BiasField& bias)
    : bias_(bias) {
    if (!state.superconducting) return;
    const auto elems = layout.elements();
    for (std::size_t s = 0; s < layout.strips().size(); ++s) {
        const auto r = layout.elements_of(s);
        double prev = 0.0;
        for (std::size_t i = r.begin; i <= r.end; ++i) {
            const double next = (i < r.end) ? state.k(static_cast<Eigen::Index>(i)) : 0.0;
            const double z = (i < r.end) ? elems[i].left() : elems[r.end - 1].right();
            const double c = prev - next;
            if (c != 0.0) {
                edge_z_.push_back(z);
                jump_.push_back(c);
            }
            prev = next;
        }
    }
}

FieldVector SheetField::operator()(double y, double z) const {
    if (y == 0.0) throw SingularPointError("SheetField is evaluated off the film plane only");
    double sy = 0.0;
    double sz = 0.0;
    const double y2 = y * y;
    for (std::size_t e = 0; e < edge_z_.size(); ++e) {
        const double d = z - edge_z_[e];
        sy += jump_[e] * std::log(d * d + y2);
        sz += jump_[e] * std::atan(d / y);
    }
    return {bias_.b_x, bias_.b_y + kMu0Over4Pi * sy, bias_.b_z - kMu0Over2Pi * sz};
}

PotentialEvaluator::PotentialEvaluator(const ChipLayout& layout, const CriticalState& state,
                                       const BiasField& bias, const TrapPotentialParams& params)
    : field_(layout, state, bias), params_(params) {
    params_.validate();
}

double PotentialEvaluator::operator()(double y, double z) const {
    double u = potential(field_(y, z), params_);
    if (params_.gravity) u += params_.mass * kStandardGravity * z / kBoltzmann * 1e6;
    return u;
}

double PotentialGrid::min() const { return *std::min_element(u.begin(), u.end()); }

PotentialGrid sample_potential(const PotentialEvaluator& eval, const GridSpec& grid, unsigned workers) {
    grid.validate();
    PotentialGrid out;
    out.grid = grid;
    const std::size_t ny = grid.ny(), nz = grid.nz();
    out.u.resize(ny * nz);
    parallel_for(ny, workers, [&](std::size_t iy) {
        const double y = grid.y(iy);
        for (std::size_t iz = 0; iz < nz; ++iz) out.u[iy * nz + iz] = eval(y, grid.z(iz));
    });
    return out;
}

PotentialGrid potential_from_map(const FieldMap& map, const TrapPotentialParams& params) {
    PotentialGrid out;
    out.grid = map.grid;
    out.u.reserve(map.b.size());
    for (const auto& b : map.b) out.u.push_back(potential(b, params));
    return out;
}

void SearchWindow::validate() const {
    if (!(y_min > 0.0)) throw ValidationError("search window must lie above the film (y_min > 0)");
    if (!(y_max > y_min) || !(z_max > z_min)) throw ValidationError("search window bounds are inverted");
}

namespace {

std::optional<std::size_t> partner(const Saddle& s, std::size_t i) {
    if (s.first == i) return s.second;
    if (s.second == i) return s.first;
    return std::nullopt;
}

}  // namespace

bool TrapReport::well_merged(std::size_t i) const {
    return std::any_of(saddles.begin(), saddles.end(), [&](const Saddle& s) {
        const auto other = partner(s, i);
        return s.merged && other && !minima[*other].boundary;
    });
}

bool TrapReport::well_leaking(std::size_t i) const {
    return std::any_of(saddles.begin(), saddles.end(), [&](const Saddle& s) {
        const auto other = partner(s, i);
        return other && minima[*other].boundary && s.u - minima[i].u < merge_threshold;
    });
}

std::vector<TrapMinimum> find_minima(const PotentialEvaluator& eval, const PotentialGrid& scan,
                                     const SearchWindow& window, const MinimaOptions& options) {
    window.validate();
    const std::size_t ny = scan.ny(), nz = scan.nz();
    const auto& g = scan.grid;
    std::vector<TrapMinimum> found;
    for (std::size_t iy = 0; iy < ny; ++iy) {
        for (std::size_t iz = 0; iz < nz; ++iz) {
            const std::size_t n = iy * nz + iz;
            const double u = scan.u[n];
            bool is_min = true;
            bool strictly_below_one = false;
            for (int dy = -1; dy <= 1 && is_min; ++dy)
                for (int dz = -1; dz <= 1; ++dz) {
                    if (!dy && !dz) continue;
                    const long jy = static_cast<long>(iy) + dy;
                    const long jz = static_cast<long>(iz) + dz;
                    if (jy < 0 || jz < 0 || jy >= static_cast<long>(ny) || jz >= static_cast<long>(nz)) continue;
                    const std::size_t m = static_cast<std::size_t>(jy) * nz + static_cast<std::size_t>(jz);
                    const double um = scan.u[m];
                    // Ties go to the earlier node so plateaus yield one candidate.
                    if (um < u || (um == u && m < n)) { is_min = false; break; }
                    if (um > u) strictly_below_one = true;
                }
            if (!is_min || !strictly_below_one) continue;

            const auto res = nelder_mead(eval, {g.y(iy), g.z(iz)}, g.spacing, window,
                                         std::min(options.refine_tolerance, 1e-9));
            TrapMinimum m;
            m.y = res.p.y;
            m.z = res.p.z;
            m.u = res.u;
            m.refined = res.converged;
            const double edge = options.refine_tolerance;
            m.boundary = m.y - window.y_min < edge || window.y_max - m.y < edge ||
                         m.z - window.z_min < edge || window.z_max - m.z < edge;
            found.push_back(m);
        }
    }
    std::sort(found.begin(), found.end(), [](const TrapMinimum& a, const TrapMinimum& b) {
        if (a.u != b.u) return a.u < b.u;
        return a.y != b.y ? a.y < b.y : a.z < b.z;
    });
    std::vector<TrapMinimum> kept;
    for (const auto& m : found) {
        const bool dup = std::any_of(kept.begin(), kept.end(), [&](const TrapMinimum& k) {
            return std::hypot(k.y - m.y, k.z - m.z) < options.merge_distance;
        });
        if (!dup) kept.push_back(m);
    }
    return kept;
}

std::vector<TrapMinimum> find_minima(const ChipLayout& layout, const CriticalState& state,
                                     const BiasField& bias, const SearchWindow& window,
                                     const MinimaOptions& options, const TrapPotentialParams& params) {
    window.validate();
    const PotentialEvaluator eval(layout, state, bias, params);
    const auto scan = sample_potential(eval, window.grid(options.scan_spacing));
    return find_minima(eval, scan, window, options);
}

double flooding_level(const PotentialGrid& grid, std::size_t node_a, std::size_t node_b, double lo,
                      double hi, double tolerance) {
    lo = std::max(lo, std::max(grid.u[node_a], grid.u[node_b]));
    hi = std::max(hi, lo);
    if (connected_below(grid, node_a, node_b, lo)) return lo;
    while (!connected_below(grid, node_a, node_b, hi)) hi = lo + 2.0 * (hi - lo) + tolerance;
    while (hi - lo > tolerance) {
        const double mid = 0.5 * (lo + hi);
        if (connected_below(grid, node_a, node_b, mid)) hi = mid;
        else lo = mid;
    }
    return hi;
}

LocalShape local_shape(const PotentialEvaluator& eval, double y, double z, double h) {
    LocalShape s;
    const double u0 = eval(y, z);
    const double upy = eval(y + h, z), umy = eval(y - h, z);
    const double upz = eval(y, z + h), umz = eval(y, z - h);
    s.grad_y = (upy - umy) / (2 * h);
    s.grad_z = (upz - umz) / (2 * h);
    s.hyy = (upy - 2 * u0 + umy) / (h * h);
    s.hzz = (upz - 2 * u0 + umz) / (h * h);
    s.hyz = (eval(y + h, z + h) - eval(y + h, z - h) - eval(y - h, z + h) + eval(y - h, z - h)) / (4 * h * h);
    return s;
}

Saddle find_saddle(const std::vector<TrapMinimum>& minima, std::size_t first, std::size_t second,
                   const PotentialGrid& grid, const PotentialEvaluator* eval, const SaddleOptions& options) {
    if (first >= minima.size() || second >= minima.size()) throw ValidationError("saddle: minimum index out of range");
    const auto& a = minima[first];
    const auto& b = minima[second];
    if (first == second || std::hypot(a.y - b.y, a.z - b.z) < 1e-12)
        throw ValidationError("saddle: degenerate pair (minima coincide)");

    const std::size_t na = nearest_node(grid.grid, a.y, a.z);
    const std::size_t nb = nearest_node(grid.grid, b.y, b.z);
    Saddle s;
    s.first = first;
    s.second = second;
    const double level = flooding_level(grid, na, nb, std::max(grid.u[na], grid.u[nb]),
                                        *std::max_element(grid.u.begin(), grid.u.end()),
                                        options.level_tolerance);
    const std::size_t node = bottleneck_node(grid, na, nb);
    const std::size_t nz = grid.nz();
    s.y = grid.grid.y(node / nz);
    s.z = grid.grid.z(node % nz);
    s.u = level;

    // Newton on ∇U = 0 from the grid saddle.
    if (eval && node != na && node != nb) {
        double y = s.y, z = s.z;
        const double h = 0.05e-6;
        bool ok = false;
        for (int it = 0; it < 40; ++it) {
            const auto sh = local_shape(*eval, y, z, h);
            const double det = sh.hyy * sh.hzz - sh.hyz * sh.hyz;
            if (!(det < 0.0)) break;
            const double dy = -(sh.hzz * sh.grad_y - sh.hyz * sh.grad_z) / det;
            const double dz = -(-sh.hyz * sh.grad_y + sh.hyy * sh.grad_z) / det;
            y += dy;
            z += dz;
            if (std::hypot(y - s.y, z - s.z) > 2.0 * grid.grid.spacing || y <= grid.grid.y_min) break;
            if (std::hypot(dy, dz) < 1e-11) { ok = true; break; }
        }
        if (ok) {
            const double u = (*eval)(y, z);
            if (u >= std::max(a.u, b.u)) {
                s.y = y;
                s.z = z;
                s.u = u;
                s.refined = true;
            }
        }
    }
    s.merged = s.u - std::max(a.u, b.u) < options.merge_threshold;
    return s;
}

std::vector<ContourSet> equipotential_contours(const PotentialGrid& grid, const std::vector<double>& levels,
                                               double reference) {
    const std::size_t ny = grid.ny(), nz = grid.nz();
    const auto& g = grid.grid;
    std::vector<ContourSet> out;
    for (double level : levels) {
        if (!(level > 0.0)) throw ValidationError("contour levels must be positive");
        ContourSet set;
        set.level = level;
        auto f = [&](std::size_t iy, std::size_t iz) { return grid.at(iy, iz) - reference - level; };

        // Edge keys: 2·node for the edge to +z, 2·node + 1 for the edge to +y.
        std::unordered_map<std::size_t, std::pair<double, double>> points;
        auto crossing = [&](std::size_t iy, std::size_t iz, bool along_y) -> std::size_t {
            const std::size_t key = 2 * (iy * nz + iz) + (along_y ? 1 : 0);
            if (!points.count(key)) {
                const double f0 = f(iy, iz);
                const double f1 = along_y ? f(iy + 1, iz) : f(iy, iz + 1);
                const double t = f0 / (f0 - f1);
                const double y = along_y ? g.y(iy) + t * g.spacing : g.y(iy);
                const double z = along_y ? g.z(iz) : g.z(iz) + t * g.spacing;
                points[key] = {y, z};
            }
            return key;
        };
        std::vector<std::pair<std::size_t, std::size_t>> segments;
        for (std::size_t iy = 0; iy + 1 < ny; ++iy) {
            for (std::size_t iz = 0; iz + 1 < nz; ++iz) {
                const bool in00 = f(iy, iz) < 0, in01 = f(iy, iz + 1) < 0;
                const bool in10 = f(iy + 1, iz) < 0, in11 = f(iy + 1, iz + 1) < 0;
                std::vector<std::size_t> edges;  // order: bottom, right, top, left
                const bool cb = in00 != in01, cr = in01 != in11, ct = in10 != in11, cl = in00 != in10;
                const std::size_t kb = cb ? crossing(iy, iz, false) : 0;
                const std::size_t kr = cr ? crossing(iy, iz + 1, true) : 0;
                const std::size_t kt = ct ? crossing(iy + 1, iz, false) : 0;
                const std::size_t kl = cl ? crossing(iy, iz, true) : 0;
                const int count = cb + cr + ct + cl;
                if (count == 2) {
                    if (cb) edges.push_back(kb);
                    if (cr) edges.push_back(kr);
                    if (ct) edges.push_back(kt);
                    if (cl) edges.push_back(kl);
                    segments.emplace_back(edges[0], edges[1]);
                } else if (count == 4) {
                    const double centre = 0.25 * (f(iy, iz) + f(iy, iz + 1) + f(iy + 1, iz) + f(iy + 1, iz + 1));
                    const bool centre_in = centre < 0;
                    // Separate the corners that differ from the centre.
                    if (in00 == centre_in) {
                        segments.emplace_back(kb, kr);
                        segments.emplace_back(kt, kl);
                    } else {
                        segments.emplace_back(kb, kl);
                        segments.emplace_back(kr, kt);
                    }
                }
            }
        }

        std::unordered_map<std::size_t, std::vector<std::size_t>> incident;
        for (std::size_t s = 0; s < segments.size(); ++s) {
            incident[segments[s].first].push_back(s);
            incident[segments[s].second].push_back(s);
        }
        std::vector<char> used(segments.size(), 0);
        auto trace = [&](std::size_t start_seg, std::size_t start_key) {
            ContourSet::Polyline line;
            std::size_t key = start_key;
            std::size_t seg = start_seg;
            line.points.push_back(points[key]);
            while (true) {
                used[seg] = 1;
                key = segments[seg].first == key ? segments[seg].second : segments[seg].first;
                line.points.push_back(points[key]);
                std::size_t next = segments.size();
                for (std::size_t cand : incident[key])
                    if (!used[cand]) { next = cand; break; }
                if (next == segments.size()) break;
                seg = next;
            }
            line.closed = line.points.size() > 2 && key == start_key;
            set.polylines.push_back(std::move(line));
        };
        // Open (window-clipped) lines first, from their free ends; sorted keys keep output deterministic.
        std::vector<std::size_t> keys;
        keys.reserve(incident.size());
        for (const auto& [k, v] : incident) keys.push_back(k);
        std::sort(keys.begin(), keys.end());
        for (std::size_t k : keys)
            if (incident[k].size() == 1 && !used[incident[k][0]]) trace(incident[k][0], k);
        for (std::size_t s = 0; s < segments.size(); ++s)
            if (!used[s]) trace(s, segments[s].first);
        out.push_back(std::move(set));
    }
    return out;
}

TrapReport analyze_trap(const ChipLayout& layout, const CriticalState& state, const BiasField& bias,
                        const SearchWindow& window, const TrapAnalysisOptions& options) {
    window.validate();
    const PotentialEvaluator eval(layout, state, bias, options.potential);
    const auto scan = sample_potential(eval, window.grid(options.minima.scan_spacing), options.workers);
    TrapReport rep;
    rep.merge_threshold = options.saddle.merge_threshold;
    rep.minima = find_minima(eval, scan, window, options.minima);
    for (std::size_t i = 0; i < rep.minima.size(); ++i)
        for (std::size_t j = i + 1; j < rep.minima.size(); ++j)
            rep.saddles.push_back(find_saddle(rep.minima, i, j, scan, &eval, options.saddle));
    rep.reference_u = rep.minima.empty() ? scan.min() : rep.minima.front().u;
    if (!options.contour_levels.empty())
        rep.contours = equipotential_contours(scan, options.contour_levels, rep.reference_u);
    return rep;
}

}  // namespace beantrap
