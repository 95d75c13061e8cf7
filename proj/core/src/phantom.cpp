#include "coseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "coseg/distance.hpp"
#include "coseg/metaimage.hpp"
#include "coseg/rng.hpp"
#include "json.hpp"

namespace coseg {

namespace {

enum Stream : std::uint64_t { kBaseNoise = 1, kField = 2, kImageNoise = 3, kPrior = 4 };

// Spacing of the lattice carrying the random boundary offsets, in voxels.
constexpr double kBoundaryNoiseSpacing = 6.0;

struct Ellipsoid {
    Vec3 centre;  // voxels
    Vec3 radii;   // voxels
    bool contains(int i, int j, int k) const {
        const double dx = (i - centre.x) / radii.x;
        const double dy = (j - centre.y) / radii.y;
        const double dz = (k - centre.z) / radii.z;
        return dx * dx + dy * dy + dz * dz <= 1.0;
    }
};

std::vector<Ellipsoid> layout(const PhantomSpec& spec) {
    const Vec3 dims{static_cast<double>(spec.dims.x), static_cast<double>(spec.dims.y),
                    static_cast<double>(spec.dims.z)};
    const Vec3 centre = 0.5 * (dims - Vec3{1.0, 1.0, 1.0});
    std::vector<Ellipsoid> shapes;
    shapes.push_back({centre, multiply(dims, {0.375, 0.3125, 0.25})});
    const int inner = spec.num_structures - 1;
    const double shrink = inner <= 2 ? 1.0 : std::sqrt(2.0 / inner);
    for (int s = 0; s < inner; ++s) {
        const double angle = inner == 1 ? 0.0 : 2.0 * M_PI * s / inner;
        const Vec3 offset{dims.x / 6.0 * std::cos(angle), dims.y / 6.0 * std::sin(angle), 0.0};
        shapes.push_back({centre + offset, shrink * multiply(dims, {0.125, 0.1667, 0.1458})});
    }
    return shapes;
}

double structure_intensity(int s, int num_structures) {
    static constexpr double kDefault[] = {0.35, 0.6, 0.85};
    if (num_structures <= 3) return kDefault[s - 1];
    return 0.35 + 0.5 * (s - 1) / (num_structures - 1);
}

constexpr double kBackground = 0.1;

ScalarVolume add_noise(const ScalarVolume& clean, double sigma, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, sigma);
    ScalarVolume out(clean.domain());
    for (std::size_t i = 0; i < clean.size(); ++i) {
        const double n = sigma > 0.0 ? gauss(rng) : 0.0;
        out[i] = std::clamp(clean[i] + n, 0.0, 1.0);
    }
    return out;
}

// Label that surrounds class c in gt: the most common lower-index label
// 6-adjacent to it.
Label parent_label(const LabelMap& gt, Label c) {
    const Dims3 d = gt.dims();
    std::vector<std::size_t> counts(c, 0);
    const int off[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    for (int k = 0; k < d.z; ++k)
        for (int j = 0; j < d.y; ++j)
            for (int i = 0; i < d.x; ++i) {
                if (gt.at(i, j, k) != c) continue;
                for (const auto& o : off) {
                    const int a = i + o[0], b = j + o[1], e = k + o[2];
                    if (a < 0 || b < 0 || e < 0 || a >= d.x || b >= d.y || e >= d.z) continue;
                    const Label n = gt.at(a, b, e);
                    if (n < c) ++counts[n];
                }
            }
    return static_cast<Label>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

ScalarVolume boundary_offsets(const Dims3& d, int shift, std::mt19937_64& rng) {
    auto coarse = [](int n) { return static_cast<int>(std::ceil((n - 1) / kBoundaryNoiseSpacing)) + 1; };
    const VolumeDomain cd({coarse(d.x), coarse(d.y), coarse(d.z)});
    ScalarVolume lattice(cd);
    std::uniform_real_distribution<double> uni(-shift, shift);
    for (std::size_t i = 0; i < lattice.size(); ++i) lattice[i] = uni(rng);
    ScalarVolume dense{VolumeDomain(d)};
    for (int k = 0; k < d.z; ++k)
        for (int j = 0; j < d.y; ++j)
            for (int i = 0; i < d.x; ++i)
                dense.at(i, j, k) = sample_trilinear(
                    lattice, {i / kBoundaryNoiseSpacing, j / kBoundaryNoiseSpacing, k / kBoundaryNoiseSpacing});
    return dense;
}

}  // namespace

std::optional<PriorNoise> prior_preset(std::string_view name) {
    if (name == "weak") return PriorNoise{2, 0.15, 1.5};
    if (name == "strong") return PriorNoise{1, 0.05, 0.8};
    if (name == "none") return PriorNoise{};
    return std::nullopt;
}

std::vector<std::string> PhantomSpec::validate() const {
    domain().validate();
    if (num_structures < 1) throw ConfigError("phantom needs at least one structure");
    if (num_structures > 250) throw ConfigError("phantom supports at most 250 structures");
    if (num_subjects < 1) throw ConfigError("phantom needs at least one subject");
    if (!(deform_max_mm >= 0.0)) throw ConfigError("deform_max_mm must be non-negative");
    if (!(field_grid_spacing_mm > 0.0)) throw ConfigError("field grid spacing must be positive");
    if (prior_noise.boundary_shift_voxels < 0) throw ConfigError("boundary shift must be non-negative");
    if (!(prior_noise.label_flip_rate >= 0.0) || prior_noise.label_flip_rate >= 0.5)
        throw ConfigError("label_flip_rate must lie in [0, 0.5)");
    if (!(prior_noise.smoothing_sigma_voxels >= 0.0)) throw ConfigError("smoothing sigma must be non-negative");
    std::vector<std::string> warnings;
    if (deform_max_mm > kDisplacementCap * field_grid_spacing_mm) {
        std::ostringstream w;
        w << "deform_max_mm " << deform_max_mm << " exceeds " << kDisplacementCap << " x field grid spacing ("
          << kDisplacementCap * field_grid_spacing_mm << " mm); fields may not be invertible";
        warnings.push_back(w.str());
    }
    return warnings;
}

BasePhantom generate_base(const PhantomSpec& spec) {
    spec.validate();
    const VolumeDomain dom = spec.domain();
    BasePhantom base{ScalarVolume(dom, kBackground), ScalarVolume(dom), LabelMap(dom)};
    const auto shapes = layout(spec);
    for (int k = 0; k < dom.dims.z; ++k)
        for (int j = 0; j < dom.dims.y; ++j)
            for (int i = 0; i < dom.dims.x; ++i)
                for (std::size_t s = 0; s < shapes.size(); ++s)
                    if (shapes[s].contains(i, j, k)) {
                        const int label = static_cast<int>(s) + 1;
                        base.labels.at(i, j, k) = static_cast<Label>(label);
                        base.clean.at(i, j, k) = structure_intensity(label, spec.num_structures);
                    }
    base.image = add_noise(base.clean, spec.image_noise_sigma, derive_seed(spec.seed, kBaseNoise, 0));
    return base;
}

DenseDeformationField random_smooth_field(const PhantomSpec& spec, std::uint64_t subject_seed) {
    const VolumeDomain dom = spec.domain();
    ControlGrid grid(dom, Vec3{1.0, 1.0, 1.0} * spec.field_grid_spacing_mm);
    if (spec.deform_max_mm <= 0.0) return identity_field(dom);
    std::mt19937_64 rng(derive_seed(subject_seed, kField, 0));
    std::uniform_real_distribution<double> uni(-spec.deform_max_mm, spec.deform_max_mm);
    for (Vec3& d : grid.displacements()) d = {uni(rng), uni(rng), uni(rng)};
    return densify(grid, Basis::CubicBSpline);
}

ProbabilityMap corrupt_prior(const LabelMap& gt, int num_classes, const PriorNoise& noise, std::uint64_t seed) {
    const VolumeDomain& dom = gt.domain();
    const Dims3 d = dom.dims;
    const VolumeDomain unit(d);  // offsets are measured in voxels
    std::mt19937_64 rng(derive_seed(seed, kPrior, 0));
    LabelMap out = gt;

    if (noise.boundary_shift_voxels > 0) {
        for (int c = 1; c < num_classes; ++c) {
            const auto cls = static_cast<Label>(c);
            const ScalarVolume offsets = boundary_offsets(d, noise.boundary_shift_voxels, rng);
            std::vector<std::uint8_t> inside(gt.size()), outside(gt.size());
            bool any = false;
            for (std::size_t v = 0; v < gt.size(); ++v) {
                inside[v] = gt[v] == cls;
                outside[v] = !inside[v];
                any = any || inside[v];
            }
            if (!any) continue;
            const auto d_out = squared_distance_transform(inside, unit);
            const auto d_in = squared_distance_transform(outside, unit);
            const Label parent = parent_label(gt, cls);
            for (std::size_t v = 0; v < gt.size(); ++v) {
                // Signed distance with the surface half a voxel outside the last
                // inside voxel; offset 0 reproduces gt exactly.
                const double sd = inside[v] ? 0.5 - std::sqrt(d_in[v]) : std::sqrt(d_out[v]) - 0.5;
                const bool member = sd <= offsets[v];
                if (member && out[v] < cls)
                    out[v] = cls;
                else if (!member && out[v] == cls)
                    out[v] = parent;
            }
        }
    }

    if (noise.label_flip_rate > 0.0 && num_classes > 1) {
        std::uniform_real_distribution<double> uni(0.0, 1.0);
        std::uniform_int_distribution<int> other(1, num_classes - 1);
        for (std::size_t v = 0; v < out.size(); ++v) {
            if (uni(rng) < noise.label_flip_rate)
                out[v] = static_cast<Label>((out[v] + other(rng)) % num_classes);
        }
    }

    ProbabilityMap prob = one_hot(out, num_classes);
    if (noise.smoothing_sigma_voxels > 0.0) {
        for (int c = 0; c < num_classes; ++c) {
            const auto smooth = gaussian_smooth(prob.channel(c), d, noise.smoothing_sigma_voxels);
            std::copy(smooth.begin(), smooth.end(), prob.channel(c).begin());
        }
    }
    prob.renormalize();
    return prob;
}

PhantomPopulation generate_population(const PhantomSpec& spec) {
    PhantomPopulation pop;
    pop.base = generate_base(spec);
    pop.subjects.resize(static_cast<std::size_t>(spec.num_subjects));
    for (int s = 0; s < spec.num_subjects; ++s) {
        PhantomSubject& sub = pop.subjects[static_cast<std::size_t>(s)];
        sub.seed = derive_seed(spec.seed, 0, static_cast<std::uint64_t>(s) + 1);
        sub.field = random_smooth_field(spec, sub.seed);
        sub.image = add_noise(warp_scalar(pop.base.clean, sub.field), spec.image_noise_sigma,
                              derive_seed(sub.seed, kImageNoise, 0));
        sub.gt = warp_labels(pop.base.labels, sub.field);
        sub.prior = corrupt_prior(sub.gt, spec.num_classes(), spec.prior_noise, sub.seed);
    }
    return pop;
}

std::filesystem::path write_population(const PhantomPopulation& pop, const PhantomSpec& spec,
                                       const std::filesystem::path& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    save_metaimage(pop.base.image, out_dir / "base_image.mha");
    save_metaimage(pop.base.labels, out_dir / "base_gt.mha");

    nlohmann::ordered_json manifest;
    manifest["preset"] = spec.preset;
    manifest["seed"] = spec.seed;
    manifest["spec"] = {
        {"dims", {spec.dims.x, spec.dims.y, spec.dims.z}},
        {"spacing", {spec.spacing.x, spec.spacing.y, spec.spacing.z}},
        {"num_structures", spec.num_structures},
        {"num_subjects", spec.num_subjects},
        {"deform_max_mm", spec.deform_max_mm},
        {"field_grid_spacing_mm", spec.field_grid_spacing_mm},
        {"image_noise_sigma", spec.image_noise_sigma},
        {"prior_noise",
         {{"boundary_shift_voxels", spec.prior_noise.boundary_shift_voxels},
          {"label_flip_rate", spec.prior_noise.label_flip_rate},
          {"smoothing_sigma_voxels", spec.prior_noise.smoothing_sigma_voxels}}},
    };
    manifest["base"] = {{"image", "base_image.mha"}, {"gt", "base_gt.mha"}};
    auto subjects = nlohmann::ordered_json::array();
    for (std::size_t s = 0; s < pop.subjects.size(); ++s) {
        const auto& sub = pop.subjects[s];
        char stem[32];
        std::snprintf(stem, sizeof(stem), "subject_%02zu", s);
        const std::string st(stem);
        save_metaimage(sub.image, out_dir / (st + "_image.mha"));
        save_metaimage(sub.gt, out_dir / (st + "_gt.mha"));
        save_metaimage(sub.prior, out_dir / (st + "_prior.mha"));
        save_field(sub.field, out_dir / (st + "_field.mha"));
        subjects.push_back({{"index", s},
                            {"seed", sub.seed},
                            {"image", st + "_image.mha"},
                            {"gt", st + "_gt.mha"},
                            {"prior", st + "_prior.mha"},
                            {"field", st + "_field.mha"}});
    }
    manifest["subjects"] = subjects;
    const fs::path path = out_dir / "manifest.json";
    std::ofstream out(path);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << manifest.dump(2) << '\n';
    return path;
}

}  // namespace coseg
