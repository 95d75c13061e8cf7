#include <map>
#include <set>

#include "coseg/metaimage.hpp"
#include "coseg/metrics.hpp"
#include "coseg/phantom.hpp"
#include "doctest.h"
#include "json.hpp"
#include "support.hpp"

using namespace coseg;

namespace {

PhantomSpec small_spec(std::uint64_t seed) {
    PhantomSpec spec;
    spec.dims = {32, 32, 32};
    spec.num_subjects = 2;
    spec.seed = seed;
    return spec;
}

}  // namespace

TEST_CASE("presets and validation") {
    CHECK(prior_preset("weak")->boundary_shift_voxels == 2);
    CHECK(prior_preset("weak")->label_flip_rate == 0.15);
    CHECK(prior_preset("strong")->smoothing_sigma_voxels == 0.8);
    CHECK_FALSE(prior_preset("medium").has_value());

    PhantomSpec spec;
    CHECK(spec.validate().empty());
    spec.deform_max_mm = 6.0;
    CHECK(spec.validate().size() == 1);
    spec.prior_noise.label_flip_rate = 0.5;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
    spec = {};
    spec.num_structures = 0;
    CHECK_THROWS_AS(spec.validate(), ConfigError);
}

TEST_CASE("base phantom is deterministic with disjoint nonempty structures") {
    const PhantomSpec spec = small_spec(3);
    const BasePhantom a = generate_base(spec);
    const BasePhantom b = generate_base(spec);
    CHECK(a.image == b.image);
    CHECK(a.labels == b.labels);

    std::map<Label, int> histogram;
    for (Label l : a.labels.storage()) ++histogram[l];
    CHECK(histogram.size() == 4);
    for (const auto& [label, count] : histogram) CHECK(count > 0);
    for (double v : a.image.storage()) {
        CHECK(v >= 0.0);
        CHECK(v <= 1.0);
    }

    PhantomSpec one = spec;
    one.num_structures = 1;
    std::set<Label> present;
    const LabelMap single = generate_base(one).labels;
    for (Label l : single.storage()) present.insert(l);
    CHECK(present == std::set<Label>{0, 1});
}

TEST_CASE("structure intensities stand clear of background noise") {
    const PhantomSpec spec = small_spec(4);
    const BasePhantom base = generate_base(spec);
    std::map<Label, std::pair<double, int>> acc;
    for (std::size_t v = 0; v < base.image.size(); ++v) {
        auto& [sum, count] = acc[base.labels[v]];
        sum += base.image[v];
        ++count;
    }
    const double bg = acc[0].first / acc[0].second;
    for (const auto& [label, sc] : acc)
        if (label != 0) CHECK(std::abs(sc.first / sc.second - bg) > 5.0 * spec.image_noise_sigma);
}

TEST_CASE("random fields respect the amplitude bound and invert cleanly") {
    PhantomSpec spec = small_spec(5);
    PhantomSpec still = spec;
    still.deform_max_mm = 0.0;
    CHECK(random_smooth_field(still, 1).is_identity());
    const DenseDeformationField f = random_smooth_field(spec, 77);
    double max_component = 0.0;
    for (const Vec3& u : f.storage())
        for (int a = 0; a < 3; ++a) max_component = std::max(max_component, std::abs(u[a]));
    CHECK(max_component <= spec.deform_max_mm + 1e-12);
    CHECK(max_component > 0.0);
    const DenseDeformationField inv = invert(f);
    double mean = 0.0;
    for (double r : inversion_residual(f, inv)) mean += r;
    CHECK(mean / static_cast<double>(f.size()) < 0.05);
}

TEST_CASE("corrupt_prior: zero noise is one-hot, noise degrades but keeps structure") {
    const PhantomSpec spec = small_spec(6);
    const LabelMap gt = generate_base(spec).labels;
    CHECK(corrupt_prior(gt, 4, {}, 1) == one_hot(gt, 4));

    const ProbabilityMap p = corrupt_prior(gt, 4, {1, 0.1, 1.0}, 2);
    CHECK(p.max_sum_deviation() < 1e-6);
    const LabelMap am = argmax_labels(p);
    for (Label c = 1; c <= 3; ++c) {
        const double d = dice(am, gt, c);
        CHECK(d < 1.0);
        CHECK(d > 0.5);
    }
    CHECK(corrupt_prior(gt, 4, {2, 0.15, 1.5}, 9) == corrupt_prior(gt, 4, {2, 0.15, 1.5}, 9));
}

TEST_CASE("population: subjects follow their fields and files round-trip") {
    PhantomSpec spec = small_spec(8);
    spec.prior_noise = *prior_preset("strong");
    spec.preset = "strong";
    const PhantomPopulation pop = generate_population(spec);
    REQUIRE(pop.subjects.size() == 2);
    CHECK(pop.subjects[0].seed != pop.subjects[1].seed);
    for (const auto& s : pop.subjects) CHECK(s.gt == warp_labels(pop.base.labels, s.field));

    support::TempDir dir("phantom");
    const auto manifest = write_population(pop, spec, dir.path());
    const auto j = nlohmann::json::parse(support::read_file(manifest));
    CHECK(j["preset"] == "strong");
    REQUIRE(j["subjects"].size() == 2);
    const std::string gt_name = j["subjects"][1]["gt"];
    CHECK(load_labels(dir / gt_name) == pop.subjects[1].gt);
    const DenseDeformationField f = load_field(dir / j["subjects"][0]["field"].get<std::string>());
    double worst = 0.0;
    for (std::size_t v = 0; v < f.size(); ++v) worst = std::max(worst, (f[v] - pop.subjects[0].field[v]).norm());
    CHECK(worst < 1e-5);

    support::TempDir again("phantom");
    write_population(generate_population(spec), spec, again.path());
    for (const char* name : {"manifest.json", "subject_00_image.mha", "subject_01_prior.mha"})
        CHECK(support::read_file(dir / name) == support::read_file(again / name));
}
