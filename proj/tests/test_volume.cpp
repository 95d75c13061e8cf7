#include <cmath>
#include <limits>

#include "coseg/volume.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "support.hpp"

using namespace coseg;

TEST_CASE("domain validation rejects empty dims and non-positive spacing") {
    CHECK_THROWS_AS(VolumeDomain({0, 4, 4}), ConfigError);
    CHECK_THROWS_AS(VolumeDomain({4, 4, 4}, {1.0, 0.0, 1.0}), ConfigError);
    CHECK_THROWS_AS(VolumeDomain({4, 4, 4}, {1.0, -2.0, 1.0}), ConfigError);
    CHECK_NOTHROW(VolumeDomain({1, 1, 1}));
}

TEST_CASE("index and coords are inverse") {
    const VolumeDomain d({5, 3, 4});
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto c = d.coords(i);
        CHECK(d.index(c[0], c[1], c[2]) == i);
    }
    CHECK(d.index(1, 0, 0) == 1);
    CHECK(d.index(0, 1, 0) == 5);
    CHECK(d.index(0, 0, 1) == 15);
}

TEST_CASE("volume construction checks data length") {
    const VolumeDomain d({2, 2, 2});
    CHECK_THROWS_AS(ScalarVolume(d, std::vector<double>(7)), SizeError);
    CHECK_THROWS_AS(ProbabilityMap(d, 2, std::vector<double>(15)), SizeError);
    CHECK_THROWS_AS(ProbabilityMap(d, 0), ConfigError);
}

TEST_CASE("require_codomain detects spacing and origin differences") {
    const VolumeDomain a({4, 4, 4});
    CHECK_NOTHROW(require_codomain(a, a, "t"));
    CHECK_THROWS_AS(require_codomain(a, VolumeDomain({4, 4, 4}, {1, 1, 2}), "t"), DomainMismatchError);
    CHECK_THROWS_AS(require_codomain(a, VolumeDomain({4, 4, 4}, {1, 1, 1}, {0, 0, 1}), "t"), DomainMismatchError);
    CHECK_THROWS_AS(require_codomain(a, VolumeDomain({4, 4, 5}), "t"), DomainMismatchError);
}

TEST_CASE("trilinear sampling is exact at lattice points and matches the oracle between them") {
    support::Gen g(11);
    const VolumeDomain d({6, 5, 4});
    const ScalarVolume v = g.scalar(d);
    for (int k = 0; k < 4; ++k)
        for (int j = 0; j < 5; ++j)
            for (int i = 0; i < 6; ++i) CHECK(sample_trilinear(v, {double(i), double(j), double(k)}) == v.at(i, j, k));
    for (int t = 0; t < 200; ++t) {
        const Vec3 p{g.real(-2, 8), g.real(-2, 7), g.real(-2, 6)};
        CHECK(sample_trilinear(v, p) == doctest::Approx(oracle::trilinear(v, p)).epsilon(1e-12));
    }
}

TEST_CASE("nearest sampling rounds exact halves toward minus infinity") {
    LabelMap m(VolumeDomain({3, 1, 1}));
    m.at(0, 0, 0) = 1;
    m.at(1, 0, 0) = 2;
    m.at(2, 0, 0) = 3;
    CHECK(sample_nearest(m, {0.5, 0, 0}) == 1);
    CHECK(sample_nearest(m, {0.51, 0, 0}) == 2);
    CHECK(sample_nearest(m, {1.5, 0, 0}) == 2);
    CHECK(sample_nearest(m, {-7.0, 0, 0}) == 1);
    CHECK(sample_nearest(m, {9.0, 0, 0}) == 3);
}

TEST_CASE("inside_domain uses the half-voxel padded box") {
    const Dims3 d{4, 4, 4};
    CHECK(inside_domain(d, {-0.5, 0, 0}));
    CHECK(inside_domain(d, {3.5, 3.5, 3.5}));
    CHECK_FALSE(inside_domain(d, {-0.51, 0, 0}));
    CHECK_FALSE(inside_domain(d, {0, 3.51, 0}));
}

TEST_CASE("normalize_intensities maps to [0,1] and is idempotent") {
    support::Gen g(5);
    const VolumeDomain d({7, 6, 5});
    const ScalarVolume v = g.scalar(d, -40.0, 900.0);
    const ScalarVolume n = normalize_intensities(v);
    double lo = 1e9;
    double hi = -1e9;
    for (double x : n.storage()) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    CHECK(lo == 0.0);
    CHECK(hi == 1.0);
    CHECK(normalize_intensities(n) == n);
    CHECK_THROWS_AS(normalize_intensities(ScalarVolume(d, 3.0)), DegenerateInputError);
}

TEST_CASE("renormalize clips, repairs NaN and rescues zero-mass voxels") {
    ProbabilityMap p(VolumeDomain({3, 1, 1}), 3);
    // voxel 0: sums to 0.999
    p(0, 0) = 0.333;
    p(0, 1) = 0.333;
    p(0, 2) = 0.333;
    // voxel 1: out-of-range and NaN
    p(1, 0) = -0.5;
    p(1, 1) = 1.7;
    p(1, 2) = std::numeric_limits<double>::quiet_NaN();
    // voxel 2: no mass
    p.renormalize();
    CHECK(p(0, 0) + p(0, 1) + p(0, 2) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(p(1, 0) == 0.0);
    CHECK(p(1, 1) == 1.0);
    CHECK(p(1, 2) == 0.0);
    CHECK(p(2, 0) == 1.0);
    CHECK(p.max_sum_deviation() < 1e-12);
}

TEST_CASE("argmax ties go to the lowest class and one_hot round-trips") {
    ProbabilityMap p(VolumeDomain({2, 1, 1}), 3);
    p(0, 0) = 0.2;
    p(0, 1) = 0.4;
    p(0, 2) = 0.4;
    p(1, 0) = 0.5;
    p(1, 1) = 0.5;
    const LabelMap a = argmax_labels(p);
    CHECK(a[0] == 1);
    CHECK(a[1] == 0);

    support::Gen g(3);
    const LabelMap m = g.labels(VolumeDomain({4, 3, 2}), 4);
    CHECK(argmax_labels(one_hot(m, 4)) == m);
    CHECK_THROWS_AS(one_hot(m, 2), ConfigError);
}

TEST_CASE("gaussian smoothing preserves constants and mass in the interior") {
    const VolumeDomain d({9, 9, 9});
    const std::vector<double> c(d.size(), 0.7);
    for (double x : gaussian_smooth(c, d.dims, 1.3)) CHECK(x == doctest::Approx(0.7).epsilon(1e-12));
    std::vector<double> delta(d.size(), 0.0);
    delta[d.index(4, 4, 4)] = 1.0;
    const auto s = gaussian_smooth(delta, d.dims, 0.8);
    double total = 0.0;
    for (double x : s) total += x;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(s[d.index(3, 4, 4)] == doctest::Approx(s[d.index(5, 4, 4)]).epsilon(1e-15));
}

TEST_CASE("downsample: identity at factor 1, geometry at factor 2") {
    support::Gen g(9);
    const VolumeDomain d({9, 8, 7}, {1.0, 1.5, 2.0}, {3.0, -1.0, 0.5});
    const ScalarVolume v = g.scalar(d);
    CHECK(downsample(v, 1) == v);
    const ScalarVolume h = downsample(v, 2);
    CHECK(h.dims() == Dims3{5, 4, 4});
    CHECK(h.domain().spacing == Vec3{2.0, 3.0, 4.0});
    CHECK(h.domain().origin == d.origin);
    CHECK_THROWS_AS(downsample(v, 0), ConfigError);

    const ProbabilityMap p = g.probability(d, 3);
    const ProbabilityMap ph = downsample(p, 2);
    CHECK(ph.max_sum_deviation() < 1e-12);

    const LabelMap m = g.labels(d, 3);
    const LabelMap mh = downsample(m, 2);
    CHECK(mh.at(1, 1, 1) == m.at(2, 2, 2));
}
