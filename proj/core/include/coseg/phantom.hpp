#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coseg/transform.hpp"
#include "coseg/volume.hpp"

namespace coseg {

// How a ground-truth segmentation is degraded into a classifier-like prior.
struct PriorNoise {
    int boundary_shift_voxels = 0;
    double label_flip_rate = 0.0;
    double smoothing_sigma_voxels = 0.0;
};

// "weak" (random-forest-like) and "strong" (CNN-like) corruption levels.
std::optional<PriorNoise> prior_preset(std::string_view name);

struct PhantomSpec {
    Dims3 dims{48, 48, 48};
    Vec3 spacing{1.0, 1.0, 1.0};
    int num_structures = 3;
    int num_subjects = 4;
    double deform_max_mm = 4.0;
    double field_grid_spacing_mm = 12.0;
    double image_noise_sigma = 0.03;
    PriorNoise prior_noise;
    std::string preset = "none";
    std::uint64_t seed = 0;

    // Throws ConfigError on invalid values; returns warnings (e.g. a
    // deformation amplitude above the invertibility cap of the field grid).
    std::vector<std::string> validate() const;
    VolumeDomain domain() const { return VolumeDomain(dims, spacing); }
    int num_classes() const { return num_structures + 1; }
};

struct BasePhantom {
    ScalarVolume clean;  // piecewise-constant intensities before noise
    ScalarVolume image;
    LabelMap labels;
};

// Ellipsoidal structures: structure 1 is a large body, the remaining ones sit
// inside it. Background 0.1, structures 0.35 / 0.6 / 0.85, Gaussian noise.
BasePhantom generate_base(const PhantomSpec& spec);

// Control displacements uniform in [-deform_max, deform_max] per axis on a
// field_grid_spacing_mm lattice, densified with cubic B-splines.
DenseDeformationField random_smooth_field(const PhantomSpec& spec, std::uint64_t subject_seed);

// one_hot(gt) -> smooth random boundary erosion/dilation -> random label
// flips -> per-channel Gaussian smoothing -> renormalization.
ProbabilityMap corrupt_prior(const LabelMap& gt, int num_classes, const PriorNoise& noise, std::uint64_t seed);

struct PhantomSubject {
    std::uint64_t seed = 0;
    ScalarVolume image;
    LabelMap gt;
    ProbabilityMap prior;
    DenseDeformationField field;
};

struct PhantomPopulation {
    BasePhantom base;
    std::vector<PhantomSubject> subjects;
};

PhantomPopulation generate_population(const PhantomSpec& spec);

// Writes base_*.mha, subject_XX_{image,gt,prior,field}.mha and
// manifest.json into out_dir; returns the manifest path.
std::filesystem::path write_population(const PhantomPopulation& pop, const PhantomSpec& spec,
                                       const std::filesystem::path& out_dir);

}  // namespace coseg
