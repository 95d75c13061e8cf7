#include "coseg/mrf.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "coseg/maxflow.hpp"
#include "coseg/parallel.hpp"

namespace coseg {

DisplacementLabelSet build_label_set(Vec3 grid_spacing, int steps, double scale) {
    if (steps < 1) throw ConfigError("label set needs at least one step per direction");
    if (!(scale > 0.0) || scale > 1.0) throw ConfigError("label set scale must lie in (0, 1]");
    DisplacementLabelSet set;
    set.steps = steps;
    set.radius = (scale * kDisplacementCap) * grid_spacing;
    set.labels.reserve(static_cast<std::size_t>(6 * steps + 1));
    set.labels.push_back({});
    for (int a = 0; a < 3; ++a) {
        for (int m = 1; m <= steps; ++m) {
            Vec3 v{};
            v[a] = set.radius[a] * m / steps;
            set.labels.push_back(v);
            set.labels.push_back(-v);
        }
    }
    return set;
}

std::vector<Edge> grid_edges(const Dims3& d) {
    std::vector<Edge> edges;
    auto idx = [&](int i, int j, int k) {
        return static_cast<std::uint32_t>(i + d.x * (j + d.y * k));
    };
    for (int k = 0; k < d.z; ++k)
        for (int j = 0; j < d.y; ++j)
            for (int i = 0; i < d.x; ++i) {
                if (i + 1 < d.x) edges.push_back({idx(i, j, k), idx(i + 1, j, k)});
                if (j + 1 < d.y) edges.push_back({idx(i, j, k), idx(i, j + 1, k)});
                if (k + 1 < d.z) edges.push_back({idx(i, j, k), idx(i, j, k + 1)});
            }
    return edges;
}

double pairwise_cost(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

MrfProblem::MrfProblem(std::size_t num_nodes, std::vector<Edge> edges, std::vector<double> unary,
                       std::vector<Vec3> labels, double pairwise_weight)
    : num_nodes_(num_nodes),
      edges_(std::move(edges)),
      unary_(std::move(unary)),
      labels_(std::move(labels)),
      weight_(pairwise_weight),
      adj_(num_nodes) {
    const std::size_t nl = labels_.size();
    if (nl == 0) throw ConfigError("MRF needs at least one label");
    if (unary_.size() != num_nodes_ * nl) throw SizeError("unary table is not K x |L|");
    if (!(weight_ >= 0.0)) throw ConfigError("pairwise weight must be non-negative");
    for (double u : unary_)
        if (!std::isfinite(u) || u < 0.0) throw ConfigError("unary costs must be finite and non-negative");
    for (const Edge& e : edges_) {
        if (e.a >= num_nodes_ || e.b >= num_nodes_ || e.a == e.b) throw ConfigError("MRF edge references an invalid node");
        adj_[e.a].push_back(e.b);
        adj_[e.b].push_back(e.a);
    }
    dist_.resize(nl * nl);
    for (std::size_t a = 0; a < nl; ++a)
        for (std::size_t b = 0; b < nl; ++b) dist_[a * nl + b] = pairwise_cost(labels_[a], labels_[b]);
}

EnergyTerms mrf_energy_terms(const MrfProblem& problem, const Labeling& labeling) {
    if (labeling.assignment.size() != problem.num_nodes()) throw SizeError("labeling size does not match MRF");
    EnergyTerms t;
    for (std::size_t p = 0; p < problem.num_nodes(); ++p) {
        if (labeling.assignment[p] >= problem.num_labels()) throw SizeError("labeling uses an out-of-range label");
        t.data += problem.unary(p, labeling.assignment[p]);
    }
    double pair = 0.0;
    for (const Edge& e : problem.edges()) pair += problem.distance(labeling.assignment[e.a], labeling.assignment[e.b]);
    t.smoothness = problem.pairwise_weight() * pair;
    return t;
}

double mrf_energy(const MrfProblem& problem, const Labeling& labeling) {
    return mrf_energy_terms(problem, labeling).total();
}

namespace {

double local_energy(const MrfProblem& pr, const Labeling& lab, std::size_t p, std::size_t l) {
    double e = 0.0;
    for (std::uint32_t q : pr.neighbours(p)) e += pr.distance(l, lab.assignment[q]);
    return pr.unary(p, l) + pr.pairwise_weight() * e;
}

bool improves(double candidate, double current) {
    return candidate < current - 1e-12 * std::max(1.0, std::abs(current));
}

}  // namespace

Labeling solve_icm(const MrfProblem& problem, const Labeling& init) {
    Labeling lab = init;
    mrf_energy(problem, lab);  // validates the labeling
    bool changed = true;
    while (changed) {
        changed = false;
        for (std::size_t p = 0; p < problem.num_nodes(); ++p) {
            const double current = local_energy(problem, lab, p, lab.assignment[p]);
            double best = current;
            std::size_t best_l = lab.assignment[p];
            for (std::size_t l = 0; l < problem.num_labels(); ++l) {
                const double e = local_energy(problem, lab, p, l);
                if (improves(e, best)) {
                    best = e;
                    best_l = l;
                }
            }
            if (best_l != lab.assignment[p]) {
                lab.assignment[p] = static_cast<std::uint32_t>(best_l);
                changed = true;
            }
        }
    }
    return lab;
}

namespace {

// Best labeling reachable from `cur` by letting any subset of nodes switch to
// `alpha`, via the standard submodular reduction for metric pairwise terms.
Labeling expansion_move(const MrfProblem& pr, const Labeling& cur, std::uint32_t alpha) {
    const std::size_t n = pr.num_nodes();
    const double w = pr.pairwise_weight();
    MaxFlow g(static_cast<int>(n));
    std::vector<double> linear(n, 0.0);  // coefficient of x_p (x_p = 1: switch to alpha)
    for (std::size_t p = 0; p < n; ++p) {
        if (cur.assignment[p] != alpha) linear[p] = pr.unary(p, alpha) - pr.unary(p, cur.assignment[p]);
    }
    for (const Edge& e : pr.edges()) {
        const std::uint32_t lp = cur.assignment[e.a];
        const std::uint32_t lq = cur.assignment[e.b];
        const double a00 = w * pr.distance(lp, lq);
        const double a01 = w * pr.distance(lp, alpha);
        const double a10 = w * pr.distance(alpha, lq);
        const double a11 = 0.0;
        // E = a00 + (a10 - a00) x_p + (a11 - a10) x_q + (a01 + a10 - a00 - a11) (1 - x_p) x_q
        linear[e.a] += a10 - a00;
        linear[e.b] += a11 - a10;
        const double coupling = std::max(0.0, a01 + a10 - a00 - a11);
        g.add_edge(static_cast<int>(e.a), static_cast<int>(e.b), coupling, 0.0);
    }
    for (std::size_t p = 0; p < n; ++p) {
        if (linear[p] >= 0.0)
            g.add_terminal(static_cast<int>(p), linear[p], 0.0);
        else
            g.add_terminal(static_cast<int>(p), 0.0, -linear[p]);
    }
    g.solve();
    Labeling next = cur;
    for (std::size_t p = 0; p < n; ++p)
        if (g.sink_side(static_cast<int>(p))) next.assignment[p] = alpha;
    return next;
}

}  // namespace

Labeling solve_expansion(const MrfProblem& problem, const Labeling& init) {
    Labeling cur = solve_icm(problem, init);
    double energy = mrf_energy(problem, cur);
    constexpr int kMaxCycles = 100;
    for (int cycle = 0; cycle < kMaxCycles; ++cycle) {
        bool improved = false;
        for (std::uint32_t alpha = 0; alpha < problem.num_labels(); ++alpha) {
            Labeling cand = expansion_move(problem, cur, alpha);
            const double e = mrf_energy(problem, cand);
            if (improves(e, energy)) {
                cur = std::move(cand);
                energy = e;
                improved = true;
            }
        }
        if (!improved) break;
    }
    return cur;
}

Labeling solve_exhaustive(const MrfProblem& problem) {
    const std::size_t n = problem.num_nodes();
    const std::size_t nl = problem.num_labels();
    double combos = 1.0;
    for (std::size_t p = 0; p < n; ++p) combos *= static_cast<double>(nl);
    if (combos > 1e7) throw SizeError("exhaustive search over more than 1e7 labelings refused");

    Labeling cur = Labeling::uniform(n);
    Labeling best = cur;
    double best_e = std::numeric_limits<double>::infinity();
    while (true) {
        const double e = mrf_energy(problem, cur);
        if (e < best_e) {
            best_e = e;
            best = cur;
        }
        // Odometer with the last node fastest gives lexicographic order.
        std::size_t p = n;
        while (p > 0) {
            --p;
            if (++cur.assignment[p] < nl) break;
            cur.assignment[p] = 0;
            if (p == 0) return best;
        }
        if (n == 0) return best;
    }
}

namespace {

// Clamped trilinear taps along one axis for a constant sub-voxel shift.
struct AxisTap {
    int i0;
    int i1;
    double f;
    bool inside;
};

std::vector<AxisTap> shift_taps(int len, double shift) {
    std::vector<AxisTap> taps(static_cast<std::size_t>(len));
    for (int i = 0; i < len; ++i) {
        const double p = i + shift;
        const double c = std::clamp(p, 0.0, static_cast<double>(len - 1));
        const double fl = std::floor(c);
        AxisTap& t = taps[static_cast<std::size_t>(i)];
        t.i0 = static_cast<int>(fl);
        t.i1 = std::min(t.i0 + 1, len - 1);
        t.f = c - fl;
        t.inside = p >= -0.5 && p <= len - 0.5;
    }
    return taps;
}

// Inclusive-prefix 3D summed-area table with a zero border: (x+1, y+1, z+1) layout.
void summed_area(const std::vector<double>& v, const Dims3& d, std::vector<double>& sat) {
    const std::size_t sx = static_cast<std::size_t>(d.x) + 1;
    const std::size_t sy = static_cast<std::size_t>(d.y) + 1;
    sat.assign(sx * sy * (static_cast<std::size_t>(d.z) + 1), 0.0);
    auto at = [&](std::size_t i, std::size_t j, std::size_t k) -> double& { return sat[i + sx * (j + sy * k)]; };
    std::size_t src = 0;
    for (std::size_t k = 1; k <= static_cast<std::size_t>(d.z); ++k)
        for (std::size_t j = 1; j <= static_cast<std::size_t>(d.y); ++j)
            for (std::size_t i = 1; i <= static_cast<std::size_t>(d.x); ++i) {
                at(i, j, k) = v[src++] + at(i - 1, j, k) + at(i, j - 1, k) + at(i, j, k - 1) - at(i - 1, j - 1, k) -
                              at(i - 1, j, k - 1) - at(i, j - 1, k - 1) + at(i - 1, j - 1, k - 1);
            }
}

struct Box {
    std::array<int, 3> lo;
    std::array<int, 3> hi;  // inclusive
    bool empty() const { return lo[0] > hi[0] || lo[1] > hi[1] || lo[2] > hi[2]; }
    double count() const {
        return static_cast<double>(hi[0] - lo[0] + 1) * (hi[1] - lo[1] + 1) * (hi[2] - lo[2] + 1);
    }
};

double box_sum(const std::vector<double>& sat, const Dims3& d, const Box& b) {
    const std::size_t sx = static_cast<std::size_t>(d.x) + 1;
    const std::size_t sy = static_cast<std::size_t>(d.y) + 1;
    auto at = [&](int i, int j, int k) {
        return sat[static_cast<std::size_t>(i) + sx * (static_cast<std::size_t>(j) + sy * static_cast<std::size_t>(k))];
    };
    const int x0 = b.lo[0], y0 = b.lo[1], z0 = b.lo[2];
    const int x1 = b.hi[0] + 1, y1 = b.hi[1] + 1, z1 = b.hi[2] + 1;
    return at(x1, y1, z1) - at(x0, y1, z1) - at(x1, y0, z1) - at(x1, y1, z0) + at(x0, y0, z1) + at(x0, y1, z0) +
           at(x1, y0, z0) - at(x0, y0, z0);
}

}  // namespace

std::vector<double> build_unary(std::size_t k, std::span<const ScalarVolume> images,
                                std::span<const ProbabilityMap> priors, const ControlGrid& grid,
                                const DisplacementLabelSet& labels, double beta) {
    const std::size_t n = images.size();
    if (n < 2) throw ConfigError("unary construction needs a population of at least two images");
    if (k >= n) throw ConfigError("target index out of range");
    if (!(beta >= 0.0)) throw ConfigError("beta must be non-negative");
    const VolumeDomain& dom = images[0].domain();
    for (const auto& im : images) require_codomain(im.domain(), dom, "build_unary images");
    const bool use_priors = beta > 0.0;
    if (use_priors) {
        if (priors.size() != n) throw ConfigError("build_unary: one prior per image is required when beta > 0");
        for (const auto& pr : priors) require_codomain(pr.domain(), dom, "build_unary priors");
    }
    if (!(dom.origin == grid.domain().origin)) throw DomainMismatchError("build_unary: grid and images differ in origin");

    const Dims3 d = dom.dims;
    const std::size_t nv = dom.size();
    const std::size_t nl = labels.size();
    const std::size_t nodes = grid.size();

    // Control point boxes on this lattice.
    std::vector<Box> boxes(nodes);
    for (std::size_t p = 0; p < nodes; ++p) {
        const Vec3 pos = grid.position(p);
        for (int a = 0; a < 3; ++a) {
            const double half = 0.5 * grid.grid_spacing()[a];
            const double sp = dom.spacing[a];
            int lo = static_cast<int>(std::ceil((pos[a] - half) / sp - 1e-9));
            int hi = static_cast<int>(std::ceil((pos[a] + half) / sp - 1e-9)) - 1;
            lo = std::max(lo, 0);
            hi = std::min(hi, d[a] - 1);
            boxes[p].lo[static_cast<std::size_t>(a)] = lo;
            boxes[p].hi[static_cast<std::size_t>(a)] = hi;
        }
    }

    std::vector<std::vector<Label>> others_argmax;
    if (use_priors) {
        others_argmax.resize(n);
        for (std::size_t i = 0; i < n; ++i)
            if (i != k) others_argmax[i] = argmax_labels(priors[i]).storage();
    }

    std::vector<double> unary(nodes * nl, 0.0);
    const ScalarVolume& target = images[k];
    const auto nx = static_cast<std::size_t>(d.x);
    const auto nxy = nx * static_cast<std::size_t>(d.y);

    parallel_for(
        nl,
        [&](std::size_t l) {
            const Vec3 shift = divide(labels.labels[l], dom.spacing);
            const auto tx = shift_taps(d.x, shift.x);
            const auto ty = shift_taps(d.y, shift.y);
            const auto tz = shift_taps(d.z, shift.z);
            std::vector<double> cost(nv);
            std::size_t idx = 0;
            for (int z = 0; z < d.z; ++z) {
                const AxisTap& cz = tz[static_cast<std::size_t>(z)];
                for (int y = 0; y < d.y; ++y) {
                    const AxisTap& cy = ty[static_cast<std::size_t>(y)];
                    for (int x = 0; x < d.x; ++x, ++idx) {
                        const AxisTap& cx = tx[static_cast<std::size_t>(x)];
                        const std::size_t o[8] = {
                            cx.i0 + nx * cy.i0 + nxy * cz.i0, cx.i1 + nx * cy.i0 + nxy * cz.i0,
                            cx.i0 + nx * cy.i1 + nxy * cz.i0, cx.i1 + nx * cy.i1 + nxy * cz.i0,
                            cx.i0 + nx * cy.i0 + nxy * cz.i1, cx.i1 + nx * cy.i0 + nxy * cz.i1,
                            cx.i0 + nx * cy.i1 + nxy * cz.i1, cx.i1 + nx * cy.i1 + nxy * cz.i1};
                        const double w[8] = {(1 - cx.f) * (1 - cy.f) * (1 - cz.f), cx.f * (1 - cy.f) * (1 - cz.f),
                                             (1 - cx.f) * cy.f * (1 - cz.f),       cx.f * cy.f * (1 - cz.f),
                                             (1 - cx.f) * (1 - cy.f) * cz.f,       cx.f * (1 - cy.f) * cz.f,
                                             (1 - cx.f) * cy.f * cz.f,             cx.f * cy.f * cz.f};
                        double shifted = 0.0;
                        for (int t = 0; t < 8; ++t) shifted += w[t] * target[o[t]];
                        double c = 0.0;
                        for (std::size_t i = 0; i < n; ++i)
                            if (i != k) c += std::abs(images[i][idx] - shifted);
                        if (use_priors) {
                            int cls = 0;
                            if (cx.inside && cy.inside && cz.inside) {
                                double best = -1.0;
                                for (int ch = 0; ch < priors[k].num_classes(); ++ch) {
                                    const auto chan = priors[k].channel(ch);
                                    double pv = 0.0;
                                    for (int t = 0; t < 8; ++t) pv += w[t] * chan[o[t]];
                                    if (pv > best) {
                                        best = pv;
                                        cls = ch;
                                    }
                                }
                            }
                            double mismatches = 0.0;
                            for (std::size_t i = 0; i < n; ++i)
                                if (i != k && others_argmax[i][idx] != cls) mismatches += 1.0;
                            c += beta * mismatches;
                        }
                        cost[idx] = c;
                    }
                }
            }
            std::vector<double> sat;
            summed_area(cost, d, sat);
            for (std::size_t p = 0; p < nodes; ++p) {
                if (boxes[p].empty()) continue;
                unary[p * nl + l] = std::max(0.0, box_sum(sat, d, boxes[p]) / boxes[p].count());
            }
        },
        1);
    return unary;
}

}  // namespace coseg
