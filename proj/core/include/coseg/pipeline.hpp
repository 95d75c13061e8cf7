#pragma once

#include <cstdint>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "coseg/mrf.hpp"
#include "coseg/transform.hpp"
#include "coseg/volume.hpp"

namespace coseg {

enum class Solver { Expansion, Icm };
enum class Fusion { Majority };

struct RegistrationConfig {
    double lambda = 5.0;
    double beta = 100.0;
    int pyramid_levels = 3;
    Vec3 grid_spacing_finest{8.0, 8.0, 8.0};
    int label_steps = 4;
    int refinement_cycles_per_level = 3;
    double label_scale_decay = 0.67;
    int max_outer_iterations = 5;
    double convergence_eps = 0.1;  // voxels
    Fusion fusion = Fusion::Majority;
    Solver solver = Solver::Expansion;
    Basis basis = Basis::CubicBSpline;
    std::uint64_t seed = 0;

    void validate() const;
};

// Working state of the population during the registration/segmentation alternation.
// images[i] and priors[i] are always the originals warped by accumulated[i].
struct PopulationState {
    std::vector<ScalarVolume> original_images;
    std::vector<ProbabilityMap> original_priors;  // may be empty when beta == 0
    std::vector<ScalarVolume> images;
    std::vector<ProbabilityMap> priors;
    std::vector<DenseDeformationField> accumulated;

    static PopulationState initial(std::vector<ScalarVolume> images, std::vector<ProbabilityMap> priors);
    std::size_t size() const { return images.size(); }
    const VolumeDomain& domain() const { return images.front().domain(); }
    // accumulated[k] <- accumulated[k] o update, then rewarp image/prior k from the originals.
    void apply_update(std::size_t k, const DenseDeformationField& update);
};

struct SolveRecord {
    int pass = 0;
    int image = 0;
    int level = 0;
    int cycle = 0;
    double initial_energy = 0.0;
    double final_energy = 0.0;
    double data_term = 0.0;
    double smoothness_term = 0.0;
};

struct PopulationEnergy {
    double intensity = 0.0;
    double prior = 0.0;
    double regularization = 0.0;
    double total() const { return intensity + prior + regularization; }
};

struct PassRecord {
    int pass = 0;
    std::vector<std::size_t> order;
    double max_incremental_voxels = 0.0;
    PopulationEnergy energy;
};

struct RunReport {
    std::vector<SolveRecord> solves;
    std::vector<PassRecord> passes;
    bool converged = false;
    int outer_iterations = 0;
    Vec3 drift_mm;  // mean accumulated displacement over the population
    std::map<std::string, double> wall_seconds;
};

struct RegistrationResult {
    DenseDeformationField field;
    std::vector<SolveRecord> solves;
};

/// Registers working image k to all others with the rest held fixed.
///
/// Coarse-to-fine over pyramid_levels (downsample factor 2^level, grid spacing
/// doubled per coarser level); each level runs refinement_cycles_per_level
/// MRF solves with the label range shrinking by label_scale_decay per cycle.
/// Every solve starts from the zero labeling, and its winning displacements
/// are densified and composed into the returned incremental field.
RegistrationResult register_to_population(std::size_t k, const PopulationState& state,
                                          const RegistrationConfig& config, int pass = 0);

struct IcsResult {
    PopulationState state;
    RunReport report;
};

// Images are expected to be intensity-normalized already (see
// load_intensity_volume). priors may be empty when config.beta == 0.
IcsResult ics_run(std::vector<ScalarVolume> images, std::vector<ProbabilityMap> priors,
                  const RegistrationConfig& config);

// Per voxel, the class with most votes; ties go to the lowest class index.
LabelMap majority_vote(std::span<const LabelMap> voters);

// Back-projects every aligned hard segmentation into subject k's native
// space through the inverse of its accumulated field, then votes.
LabelMap backproject_and_fuse(std::size_t k, const PopulationState& state);

struct Atlas {
    ScalarVolume image;
    LabelMap labels;
};

// Independent intensity-only registration of each atlas to the target, then
// majority voting over the warped atlas labels.
LabelMap pairwise_baseline(const ScalarVolume& target, std::span<const Atlas> atlases, const RegistrationConfig& config);

// Coregistration with one-hot ground truth priors for every subject except
// the target, which keeps its own probability map; returns the target's fusion.
LabelMap oracle_mode(std::vector<ScalarVolume> images, std::span<const LabelMap> gt_masks, std::size_t target_index,
                     const ProbabilityMap& target_prior, const RegistrationConfig& config,
                     RunReport* report = nullptr);

PopulationEnergy population_energy(const PopulationState& state, const RegistrationConfig& config);

// Deterministic JSON run report: the verbatim config, per-solve energies,
// per-pass displacement, convergence and drift. Timings are kept out so that
// identical runs produce identical bytes; see write_timing_report.
void write_run_report(std::ostream& out, const RunReport& report, std::string_view config_json);
void write_timing_report(std::ostream& out, const RunReport& report);
// CSV: iteration,energy,data_term,smoothness_term (one row per MRF solve).
void write_energy_csv(std::ostream& out, const RunReport& report);

}  // namespace coseg
