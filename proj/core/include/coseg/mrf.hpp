#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "coseg/transform.hpp"
#include "coseg/volume.hpp"

namespace coseg {

/// Candidate displacements (mm) for every control point in one MRF.
/// Label 0 is the zero displacement; the others run along the six signed
/// axis directions in `steps` equal increments up to the displacement cap.
struct DisplacementLabelSet {
    std::vector<Vec3> labels;
    Vec3 radius;  // largest magnitude per axis, mm
    int steps = 0;

    std::size_t size() const { return labels.size(); }
};

DisplacementLabelSet build_label_set(Vec3 grid_spacing, int steps, double scale);

struct Edge {
    std::uint32_t a = 0;
    std::uint32_t b = 0;
    friend bool operator==(const Edge&, const Edge&) = default;
};

// Unique undirected 6-neighbourhood edges of a control lattice, a < b.
std::vector<Edge> grid_edges(const Dims3& grid_dims);

// f(a, b) = |a - b|, the Euclidean distance between two displacements.
double pairwise_cost(const Vec3& a, const Vec3& b);

class MrfProblem {
public:
    MrfProblem(std::size_t num_nodes, std::vector<Edge> edges, std::vector<double> unary, std::vector<Vec3> labels,
               double pairwise_weight);

    std::size_t num_nodes() const { return num_nodes_; }
    std::size_t num_labels() const { return labels_.size(); }
    const std::vector<Edge>& edges() const { return edges_; }
    const std::vector<Vec3>& labels() const { return labels_; }
    double pairwise_weight() const { return weight_; }

    double unary(std::size_t node, std::size_t label) const { return unary_[node * labels_.size() + label]; }
    // Unweighted metric distance between two labels (cached).
    double distance(std::size_t a, std::size_t b) const { return dist_[a * labels_.size() + b]; }
    const std::vector<std::uint32_t>& neighbours(std::size_t node) const { return adj_[node]; }

private:
    std::size_t num_nodes_;
    std::vector<Edge> edges_;
    std::vector<double> unary_;
    std::vector<Vec3> labels_;
    double weight_;
    std::vector<double> dist_;
    std::vector<std::vector<std::uint32_t>> adj_;
};

struct Labeling {
    std::vector<std::uint32_t> assignment;

    static Labeling uniform(std::size_t nodes, std::uint32_t label = 0) { return {std::vector<std::uint32_t>(nodes, label)}; }
    friend bool operator==(const Labeling&, const Labeling&) = default;
};

struct EnergyTerms {
    double data = 0.0;
    double smoothness = 0.0;  // already multiplied by the pairwise weight
    double total() const { return data + smoothness; }
};

EnergyTerms mrf_energy_terms(const MrfProblem& problem, const Labeling& labeling);
double mrf_energy(const MrfProblem& problem, const Labeling& labeling);

// Iterated conditional modes: sweeps nodes 0..K-1, moving each to its best
// label while that strictly lowers the energy, until a sweep changes nothing.
Labeling solve_icm(const MrfProblem& problem, const Labeling& init);

// Alpha-expansion with every move solved exactly by min-cut. Starts from the
// ICM local minimum of `init`, so the result is never worse than either.
Labeling solve_expansion(const MrfProblem& problem, const Labeling& init);

// Global optimum by enumeration; ties go to the lexicographically smallest
// assignment. Throws SizeError when |L|^K exceeds 1e7.
Labeling solve_exhaustive(const MrfProblem& problem);

/// Per-node data costs for registering image k against the rest of the
/// population under each candidate shift.
///
/// For control point p and label l:
///   unary[p][l] = (1/|box_p|) * sum_{i != k} sum_{x in box_p}
///                 ( |I_i(x) - I_k(x + u_l)| + beta * [A_i(x) != A_k(x + u_l)] )
/// where box_p is the axis-aligned box of side grid_spacing centred on p
/// (clipped to the image) and A_i is the argmax of prior i. The target prior
/// is shifted per class channel and then argmaxed; samples outside the image
/// read as background. Boxes that miss the image entirely cost zero.
///
/// `images` and `priors` share one lattice, which may be a pyramid level of
/// the grid's image (same origin). With beta == 0 the priors are never read.
/// Result is row-major K x |L|.
std::vector<double> build_unary(std::size_t k, std::span<const ScalarVolume> images,
                                std::span<const ProbabilityMap> priors, const ControlGrid& grid,
                                const DisplacementLabelSet& labels, double beta);

}  // namespace coseg
