#include <benchmark/benchmark.h>

#include <random>

#include "coseg/distance.hpp"
#include "coseg/mrf.hpp"
#include "coseg/phantom.hpp"
#include "coseg/transform.hpp"

using namespace coseg;

namespace {

PhantomSpec cube_spec(int edge) {
    PhantomSpec spec;
    spec.dims = {edge, edge, edge};
    spec.num_subjects = 4;
    spec.seed = 1;
    spec.prior_noise = *prior_preset("weak");
    return spec;
}

ControlGrid random_grid(const VolumeDomain& d, double gs, std::uint64_t seed) {
    ControlGrid g(d, {gs, gs, gs});
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(-kDisplacementCap * gs, kDisplacementCap * gs);
    for (Vec3& v : g.displacements()) v = {uni(rng), uni(rng), uni(rng)};
    return g;
}

void BM_BuildUnary(benchmark::State& state) {
    const PhantomPopulation pop = generate_population(cube_spec(static_cast<int>(state.range(0))));
    std::vector<ScalarVolume> images;
    std::vector<ProbabilityMap> priors;
    for (const auto& s : pop.subjects) {
        images.push_back(s.image);
        priors.push_back(s.prior);
    }
    const ControlGrid grid(images[0].domain(), {8, 8, 8});
    const auto labels = build_label_set(grid.grid_spacing(), 4, 1.0);
    for (auto _ : state) benchmark::DoNotOptimize(build_unary(0, images, priors, grid, labels, 100.0));
}
BENCHMARK(BM_BuildUnary)->Arg(24)->Arg(48)->Unit(benchmark::kMillisecond);

void BM_Densify(benchmark::State& state) {
    const int edge = static_cast<int>(state.range(0));
    const ControlGrid grid = random_grid(VolumeDomain({edge, edge, edge}), 8.0, 3);
    for (auto _ : state) benchmark::DoNotOptimize(densify(grid));
    state.SetItemsProcessed(state.iterations() * edge * edge * edge);
}
BENCHMARK(BM_Densify)->Arg(48)->Arg(96)->Unit(benchmark::kMillisecond);

void BM_Invert(benchmark::State& state) {
    const DenseDeformationField f = densify(random_grid(VolumeDomain({48, 48, 48}), 8.0, 4));
    for (auto _ : state) benchmark::DoNotOptimize(invert(f));
}
BENCHMARK(BM_Invert)->Unit(benchmark::kMillisecond);

void BM_Solver(benchmark::State& state) {
    const bool expansion = state.range(0) == 1;
    const Dims3 gd{9, 9, 9};
    const std::size_t nodes = static_cast<std::size_t>(gd.x) * gd.y * gd.z;
    const auto labels = build_label_set({8, 8, 8}, 4, 1.0);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::vector<double> unary(nodes * labels.size());
    for (auto& u : unary) u = uni(rng);
    const MrfProblem problem(nodes, grid_edges(gd), unary, labels.labels, 0.05);
    const Labeling init = Labeling::uniform(nodes);
    for (auto _ : state)
        benchmark::DoNotOptimize(expansion ? solve_expansion(problem, init) : solve_icm(problem, init));
}
BENCHMARK(BM_Solver)->Arg(0)->Arg(1)->ArgName("expansion")->Unit(benchmark::kMillisecond);

void BM_DistanceTransform(benchmark::State& state) {
    const int edge = static_cast<int>(state.range(0));
    const LabelMap labels = generate_base(cube_spec(edge)).labels;
    std::vector<std::uint8_t> mask(labels.size());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = labels[i] == 1;
    for (auto _ : state) benchmark::DoNotOptimize(squared_distance_transform(mask, labels.domain()));
    state.SetItemsProcessed(state.iterations() * edge * edge * edge);
}
BENCHMARK(BM_DistanceTransform)->Arg(48)->Arg(96)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
