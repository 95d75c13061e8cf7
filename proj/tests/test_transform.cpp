#include <algorithm>
#include <cmath>
#include <numeric>

#include "coseg/transform.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "support.hpp"

using namespace coseg;

namespace {

double max_diff(const DenseDeformationField& a, const DenseDeformationField& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, (a[i] - b[i]).norm());
    return m;
}

DenseDeformationField translation(const VolumeDomain& d, Vec3 t) {
    DenseDeformationField f(d);
    for (auto& v : f.storage()) v = t;
    return f;
}

}  // namespace

TEST_CASE("control grid layout") {
    const VolumeDomain d({20, 11, 5}, {1.0, 2.0, 1.0});
    const ControlGrid g = identity_grid(d, {5.0, 5.0, 4.0});
    // extent 19, 20, 4 mm -> ceil(extent / gs) + 3
    CHECK(g.grid_dims() == Dims3{7, 7, 4});
    CHECK(g.position(0, 0, 0) == Vec3{-5.0, -5.0, -4.0});
    CHECK(g.position(g.index(1, 1, 1)) == Vec3{0.0, 0.0, 0.0});
    for (const Vec3& v : g.displacements()) CHECK(v == Vec3{});
    CHECK(ControlGrid(VolumeDomain({1, 1, 1}), {8, 8, 8}).grid_dims() == Dims3{4, 4, 4});
}

TEST_CASE("identity_grid enforces at least two voxels between control points") {
    const VolumeDomain d({10, 10, 10}, {1.0, 1.0, 2.0});
    CHECK_THROWS_AS(identity_grid(d, {4.0, 4.0, 3.9}), ConfigError);
    CHECK_THROWS_AS(identity_grid(d, {1.5, 4.0, 4.0}), ConfigError);
    CHECK_NOTHROW(identity_grid(d, {2.0, 2.0, 4.0}));
}

TEST_CASE("densify of the identity grid is the zero field and warps nothing") {
    support::Gen g(2);
    const VolumeDomain d({9, 8, 7}, {1.0, 1.5, 1.0});
    const DenseDeformationField f = densify(identity_grid(d, {4, 4, 4}));
    CHECK(f.is_identity());
    const ScalarVolume v = g.scalar(d);
    CHECK(warp_scalar(v, f) == v);
    const LabelMap m = g.labels(d, 4);
    CHECK(warp_labels(m, f) == m);
}

TEST_CASE("densify matches brute-force basis summation") {
    support::Gen g(17);
    for (int trial = 0; trial < 12; ++trial) {
        const VolumeDomain d(g.dims(5, 14), {g.real(0.5, 2.0), g.real(0.5, 2.0), g.real(0.5, 2.0)});
        const Vec3 gs{g.real(2.0, 6.0) * d.spacing.x, g.real(2.0, 6.0) * d.spacing.y, g.real(2.0, 6.0) * d.spacing.z};
        const ControlGrid grid = g.grid(d, gs, kDisplacementCap);
        for (Basis basis : {Basis::CubicBSpline, Basis::Trilinear}) {
            const DenseDeformationField f = densify(grid, basis);
            double worst = 0.0;
            for (std::size_t i = 0; i < f.size(); ++i) {
                const auto c = d.coords(i);
                const Vec3 x{c[0] * d.spacing.x, c[1] * d.spacing.y, c[2] * d.spacing.z};
                worst = std::max(worst, (f[i] - oracle::basis_sum(grid, x, basis)).norm());
            }
            CHECK(worst < 1e-6);
        }
    }
}

TEST_CASE("densify: partition of unity and compact support") {
    const VolumeDomain d({24, 24, 24});
    ControlGrid g(d, {4, 4, 4});
    for (auto& v : g.displacements()) v = {1.5, -0.5, 0.25};
    const DenseDeformationField f = densify(g);
    for (std::size_t i = 0; i < f.size(); ++i) CHECK((f[i] - Vec3{1.5, -0.5, 0.25}).norm() < 1e-12);

    ControlGrid single(d, {4, 4, 4});
    const std::size_t p = single.index(3, 3, 3);  // at (8, 8, 8) mm
    single.displacement(p) = {1.0, 0.0, 0.0};
    const DenseDeformationField s = densify(single);
    const double b0 = 2.0 / 3.0;
    CHECK(s[d.index(8, 8, 8)].x == doctest::Approx(b0 * b0 * b0).epsilon(1e-12));
    for (int i = 0; i < 24; ++i) {
        if (std::abs(i - 8) >= 8) {
            CHECK(s[d.index(i, 8, 8)].x == 0.0);
        }
    }
}

TEST_CASE("densify onto a coarser lattice agrees with the fine field at shared points") {
    support::Gen g(4);
    const VolumeDomain fine({17, 17, 17});
    const VolumeDomain coarse({9, 9, 9}, {2, 2, 2});
    const ControlGrid grid = g.grid(fine, {8, 8, 8}, 0.3);
    const DenseDeformationField a = densify(grid, fine, Basis::CubicBSpline);
    const DenseDeformationField b = densify(grid, coarse, Basis::CubicBSpline);
    for (int k = 0; k < 9; ++k)
        for (int j = 0; j < 9; ++j)
            for (int i = 0; i < 9; ++i)
                CHECK((a[fine.index(2 * i, 2 * j, 2 * k)] - b[coarse.index(i, j, k)]).norm() < 1e-12);
}

TEST_CASE("warping by integer translations shifts values") {
    support::Gen g(8);
    const VolumeDomain d({6, 5, 4});
    const ScalarVolume v = g.scalar(d);
    const ScalarVolume w = warp_scalar(v, translation(d, {1.0, 0.0, 0.0}));
    for (int k = 0; k < 4; ++k)
        for (int j = 0; j < 5; ++j)
            for (int i = 0; i < 5; ++i) CHECK(w.at(i, j, k) == v.at(i + 1, j, k));

    const LabelMap m = g.labels(d, 3);
    const ProbabilityMap p = one_hot(m, 3);
    const ProbabilityMap q = warp_probability(p, translation(d, {0.0, -1.0, 0.0}));
    const LabelMap qa = argmax_labels(q);
    for (int k = 0; k < 4; ++k)
        for (int i = 0; i < 6; ++i) {
            for (int j = 1; j < 5; ++j) CHECK(qa.at(i, j, k) == m.at(i, j - 1, k));
            CHECK(q(d.index(i, 0, k), 0) == 1.0);  // sampled at y = -1, outside the padded box
        }
}

TEST_CASE("probability warps read background outside the domain and stay normalized") {
    support::Gen g(12);
    const VolumeDomain d({8, 7, 6});
    const ProbabilityMap p = g.probability(d, 4);
    const ProbabilityMap far = warp_probability(p, translation(d, {50.0, 0.0, 0.0}));
    for (std::size_t v = 0; v < far.voxels(); ++v) CHECK(far(v, 0) == 1.0);

    const VolumeDomain big({16, 16, 16});
    const DenseDeformationField f = densify(g.grid(big, {5, 5, 5}, 0.4));
    const ProbabilityMap q = warp_probability(g.probability(big, 3), f);
    CHECK(q.max_sum_deviation() < 1e-6);
    CHECK(warp_probability(p, identity_field(d)).max_sum_deviation() < 1e-12);
}

TEST_CASE("compose: identity element and translation additivity") {
    support::Gen g(6);
    const VolumeDomain d({12, 12, 12});
    const DenseDeformationField f = densify(g.grid(d, {4, 4, 4}, 0.4));
    CHECK(compose(identity_field(d), f) == f);
    CHECK(compose(f, identity_field(d)) == f);
    const auto t = compose(translation(d, {1.0, 2.0, -0.5}), translation(d, {0.25, -1.0, 0.0}));
    for (std::size_t i = 0; i < t.size(); ++i) CHECK((t[i] - Vec3{1.25, 1.0, -0.5}).norm() < 1e-12);
    CHECK_THROWS_AS(compose(f, identity_field(VolumeDomain({12, 12, 11}))), DomainMismatchError);
}

TEST_CASE("compose matches sequential warping on smooth volumes") {
    support::Gen g(31);
    const VolumeDomain d({24, 24, 24});
    const ScalarVolume v = g.smooth(d, 6);
    for (int trial = 0; trial < 4; ++trial) {
        const DenseDeformationField a = densify(g.grid(d, {8, 8, 8}, 0.3));
        const DenseDeformationField b = densify(g.grid(d, {8, 8, 8}, 0.3));
        const ScalarVolume direct = warp_scalar(v, compose(a, b));
        const ScalarVolume seq = warp_scalar(warp_scalar(v, a), b);
        // Interpolation error scale: a half-voxel resample round trip of v.
        const ScalarVolume half = warp_scalar(warp_scalar(v, translation(d, {0.5, 0.5, 0.5})),
                                              translation(d, {-0.5, -0.5, -0.5}));
        double bound = 0.0;
        for (int k = 2; k < 22; ++k)
            for (int j = 2; j < 22; ++j)
                for (int i = 2; i < 22; ++i) bound = std::max(bound, std::abs(half.at(i, j, k) - v.at(i, j, k)));
        double err = 0.0;
        for (int k = 4; k < 20; ++k)
            for (int j = 4; j < 20; ++j)
                for (int i = 4; i < 20; ++i) err = std::max(err, std::abs(direct.at(i, j, k) - seq.at(i, j, k)));
        CHECK(err < 2.0 * bound);
    }
}

TEST_CASE("compose is associative up to interpolation tolerance") {
    support::Gen g(41);
    const VolumeDomain d({20, 20, 20});
    const auto a = densify(g.grid(d, {8, 8, 8}, 0.2));
    const auto b = densify(g.grid(d, {8, 8, 8}, 0.2));
    const auto c = densify(g.grid(d, {8, 8, 8}, 0.2));
    // Both groupings resample a field at displaced points; away from the
    // clamped border they differ only by trilinear interpolation error.
    const auto left = compose(compose(a, b), c);
    const auto right = compose(a, compose(b, c));
    double worst = 0.0;
    for (int k = 4; k < 16; ++k)
        for (int j = 4; j < 16; ++j)
            for (int i = 4; i < 16; ++i) worst = std::max(worst, (left[d.index(i, j, k)] - right[d.index(i, j, k)]).norm());
    CHECK(worst < 0.05);
}

TEST_CASE("invert: exact cases") {
    const VolumeDomain d({10, 10, 10});
    CHECK(invert(identity_field(d)).is_identity());
    const auto inv = invert(translation(d, {1.5, -2.0, 0.25}));
    // Away from the clamped border the inverse of a translation is exact.
    for (int k = 3; k < 7; ++k)
        for (int j = 3; j < 7; ++j)
            for (int i = 3; i < 7; ++i) CHECK((inv[d.index(i, j, k)] - Vec3{-1.5, 2.0, -0.25}).norm() < 1e-12);
}

TEST_CASE("invert: capped random fields round-trip within tolerance") {
    support::Gen g(77);
    for (int trial = 0; trial < 6; ++trial) {
        const VolumeDomain d({24, 24, 24}, {1.0, 1.0, 1.25});
        const Vec3 gs{g.real(4, 10), g.real(4, 10), g.real(5, 12)};
        const auto f = densify(g.grid(d, gs, kDisplacementCap));
        const auto inv = invert(f);
        const auto r = inversion_residual(f, inv);
        const double mean = std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
        CHECK(mean < 0.05);
        CHECK(*std::max_element(r.begin(), r.end()) < 0.5);
    }
}

TEST_CASE("invert reports the worst voxel when it cannot converge") {
    const VolumeDomain d({12, 12, 12});
    DenseDeformationField fold(d);
    // A strong local expansion makes the fixed-point map non-contracting.
    for (std::size_t i = 0; i < fold.size(); ++i) {
        const auto c = d.coords(i);
        fold[i] = {3.0 * (c[0] - 5.5), 0.0, 0.0};
    }
    try {
        invert(fold);
        FAIL("expected InversionError");
    } catch (const InversionError& e) {
        CHECK(std::string(e.what()).find("voxel (") != std::string::npos);
    }
}

TEST_CASE("field save and load round trip") {
    support::TempDir dir("field");
    support::Gen g(90);
    const VolumeDomain d({7, 6, 5}, {1.0, 1.0, 2.0}, {1.0, 2.0, 3.0});
    DenseDeformationField f(d);
    for (auto& v : f.storage())
        v = {static_cast<float>(g.real(-3, 3)), static_cast<float>(g.real(-3, 3)), static_cast<float>(g.real(-3, 3))};
    save_field(f, dir / "f.mha");
    CHECK(load_field(dir / "f.mha") == f);
}
