#include "coseg/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>

#include "coseg/rng.hpp"
#include "json.hpp"

namespace coseg {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void require_population(std::span<const ScalarVolume> images, std::span<const ProbabilityMap> priors, bool need_priors) {
    if (images.size() < 2) throw ConfigError("a population needs at least two images");
    for (const auto& im : images) require_codomain(im.domain(), images[0].domain(), "population images");
    if (need_priors && priors.size() != images.size())
        throw ConfigError("one prior per image is required (got " + std::to_string(priors.size()) + " priors for " +
                          std::to_string(images.size()) + " images)");
    if (!priors.empty()) {
        if (priors.size() != images.size()) throw ConfigError("prior count does not match image count");
        for (const auto& pr : priors) {
            require_codomain(pr.domain(), images[0].domain(), "population priors");
            if (pr.num_classes() != priors[0].num_classes()) throw ConfigError("priors disagree on the class count");
        }
    }
}

}  // namespace

void RegistrationConfig::validate() const {
    if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
    if (!(beta >= 0.0)) throw ConfigError("beta must be >= 0");
    if (pyramid_levels < 1) throw ConfigError("pyramid_levels must be >= 1");
    if (!(convergence_eps > 0.0)) throw ConfigError("convergence_eps must be > 0");
    if (label_steps < 1) throw ConfigError("label_steps must be >= 1");
    if (refinement_cycles_per_level < 1) throw ConfigError("refinement_cycles_per_level must be >= 1");
    if (!(label_scale_decay > 0.0) || label_scale_decay > 1.0) throw ConfigError("label_scale_decay must lie in (0, 1]");
    if (max_outer_iterations < 0) throw ConfigError("max_outer_iterations must be >= 0");
    for (int a = 0; a < 3; ++a)
        if (!(grid_spacing_finest[a] > 0.0)) throw ConfigError("grid spacing must be > 0");
}

PopulationState PopulationState::initial(std::vector<ScalarVolume> images, std::vector<ProbabilityMap> priors) {
    PopulationState s;
    s.images = images;
    s.priors = priors;
    s.original_images = std::move(images);
    s.original_priors = std::move(priors);
    for (const auto& im : s.original_images) s.accumulated.push_back(identity_field(im.domain()));
    return s;
}

void PopulationState::apply_update(std::size_t k, const DenseDeformationField& update) {
    accumulated[k] = compose(accumulated[k], update);
    images[k] = warp_scalar(original_images[k], accumulated[k]);
    if (!original_priors.empty()) priors[k] = warp_probability(original_priors[k], accumulated[k]);
}

RegistrationResult register_to_population(std::size_t k, const PopulationState& state,
                                          const RegistrationConfig& config, int pass) {
    config.validate();
    const std::size_t n = state.size();
    if (n < 2) throw ConfigError("registration needs at least two images");
    if (k >= n) throw ConfigError("target index out of range");
    const bool use_priors = config.beta > 0.0;
    if (use_priors && state.priors.size() != n) throw ConfigError("beta > 0 requires a prior for every image");

    const VolumeDomain& full = state.domain();
    RegistrationResult result{identity_field(full), {}};

    for (int level = config.pyramid_levels - 1; level >= 0; --level) {
        const int factor = 1 << level;
        const Vec3 gs = static_cast<double>(factor) * config.grid_spacing_finest;

        std::vector<ScalarVolume> level_images(n);
        std::vector<ProbabilityMap> level_priors(use_priors ? n : 0);
        for (std::size_t i = 0; i < n; ++i) {
            if (i == k) continue;
            level_images[i] = downsample(state.images[i], factor);
            if (use_priors) level_priors[i] = downsample(state.priors[i], factor);
        }
        ControlGrid grid = identity_grid(full, gs);
        // Unaries are averaged over the N-1 other images; the smoothness weight scales with them.
        const double pairwise_weight = config.lambda * static_cast<double>(n - 1);
        const auto edges = grid_edges(grid.grid_dims());

        for (int cycle = 0; cycle < config.refinement_cycles_per_level; ++cycle) {
            const double scale = std::pow(config.label_scale_decay, cycle);
            const DisplacementLabelSet labels = build_label_set(gs, config.label_steps, scale);

            // Target under the accumulated-plus-incremental deformation, warped
            // from the original so repeated updates do not compound blur.
            const DenseDeformationField total = compose(state.accumulated[k], result.field);
            level_images[k] = downsample(warp_scalar(state.original_images[k], total), factor);
            if (use_priors) level_priors[k] = downsample(warp_probability(state.original_priors[k], total), factor);

            auto unary = build_unary(k, level_images, level_priors, grid, labels, config.beta);
            const MrfProblem problem(grid.size(), edges, std::move(unary), labels.labels, pairwise_weight);
            const Labeling init = Labeling::uniform(grid.size());
            const Labeling best = config.solver == Solver::Expansion ? solve_expansion(problem, init)
                                                                     : solve_icm(problem, init);
            const EnergyTerms terms = mrf_energy_terms(problem, best);
            result.solves.push_back({pass, static_cast<int>(k), level, cycle, mrf_energy(problem, init),
                                     terms.total(), terms.data, terms.smoothness});

            if (best == init) continue;
            for (std::size_t p = 0; p < grid.size(); ++p) grid.displacement(p) = labels.labels[best.assignment[p]];
            result.field = compose(result.field, densify(grid, full, config.basis));
        }
    }
    return result;
}

PopulationEnergy population_energy(const PopulationState& state, const RegistrationConfig& config) {
    PopulationEnergy e;
    const std::size_t n = state.size();
    if (n == 0) return e;
    const double nv = static_cast<double>(state.domain().size());
    std::vector<LabelMap> hard;
    if (!state.priors.empty())
        for (const auto& p : state.priors) hard.push_back(argmax_labels(p));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            double sad = 0.0;
            double mism = 0.0;
            for (std::size_t v = 0; v < state.images[i].size(); ++v) {
                sad += std::abs(state.images[i][v] - state.images[j][v]);
                if (!hard.empty()) mism += hard[i][v] != hard[j][v];
            }
            e.intensity += sad / nv;
            e.prior += config.beta * mism / nv;
        }
    const VolumeDomain& d = state.domain();
    for (const auto& f : state.accumulated) {
        double reg = 0.0;
        for (int z = 0; z < d.dims.z; ++z)
            for (int y = 0; y < d.dims.y; ++y)
                for (int x = 0; x < d.dims.x; ++x) {
                    const Vec3 u = f[d.index(x, y, z)];
                    if (x + 1 < d.dims.x) reg += (f[d.index(x + 1, y, z)] - u).norm();
                    if (y + 1 < d.dims.y) reg += (f[d.index(x, y + 1, z)] - u).norm();
                    if (z + 1 < d.dims.z) reg += (f[d.index(x, y, z + 1)] - u).norm();
                }
        e.regularization += config.lambda * static_cast<double>(n - 1) * reg / nv;
    }
    return e;
}

IcsResult ics_run(std::vector<ScalarVolume> images, std::vector<ProbabilityMap> priors,
                  const RegistrationConfig& config) {
    config.validate();
    require_population(images, priors, config.beta > 0.0);
    const auto t_start = Clock::now();

    IcsResult out{PopulationState::initial(std::move(images), std::move(priors)), {}};
    PopulationState& state = out.state;
    RunReport& report = out.report;
    const std::size_t n = state.size();

    std::mt19937_64 rng(derive_seed(config.seed, 0x1c5, 0));
    double registration_s = 0.0;
    for (int pass = 0; pass < config.max_outer_iterations; ++pass) {
        // Seeded Fisher-Yates: each image visited exactly once per pass.
        std::vector<std::size_t> order(n);
        for (std::size_t i = 0; i < n; ++i) order[i] = i;
        for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng() % (i + 1)]);

        PassRecord rec;
        rec.pass = pass;
        rec.order = order;
        for (std::size_t k : order) {
            const auto t0 = Clock::now();
            RegistrationResult r = register_to_population(k, state, config, pass);
            registration_s += seconds_since(t0);
            rec.max_incremental_voxels = std::max(rec.max_incremental_voxels, r.field.max_norm_voxels());
            report.solves.insert(report.solves.end(), r.solves.begin(), r.solves.end());
            if (!r.field.is_identity()) state.apply_update(k, r.field);
        }
        rec.energy = population_energy(state, config);
        report.passes.push_back(rec);
        report.outer_iterations = pass + 1;
        if (rec.max_incremental_voxels < config.convergence_eps) {
            report.converged = true;
            break;
        }
    }

    Vec3 drift{};
    for (const auto& f : state.accumulated)
        for (std::size_t v = 0; v < f.size(); ++v) drift += f[v];
    report.drift_mm = (1.0 / static_cast<double>(n * state.domain().size())) * drift;
    report.wall_seconds["registration"] = registration_s;
    report.wall_seconds["ics_total"] = seconds_since(t_start);
    return out;
}

LabelMap majority_vote(std::span<const LabelMap> voters) {
    if (voters.empty()) throw ConfigError("majority vote needs at least one voter");
    const VolumeDomain& d = voters[0].domain();
    Label top = 0;
    for (const auto& v : voters) {
        require_codomain(v.domain(), d, "majority_vote");
        top = std::max(top, max_label(v));
    }
    LabelMap out(d);
    std::vector<int> counts(static_cast<std::size_t>(top) + 1);
    for (std::size_t i = 0; i < out.size(); ++i) {
        std::fill(counts.begin(), counts.end(), 0);
        for (const auto& v : voters) ++counts[v[i]];
        out[i] = static_cast<Label>(std::max_element(counts.begin(), counts.end()) - counts.begin());
    }
    return out;
}

LabelMap backproject_and_fuse(std::size_t k, const PopulationState& state) {
    if (k >= state.size()) throw ConfigError("target index out of range");
    if (state.priors.size() != state.size()) throw ConfigError("fusion needs a prior for every subject");
    const DenseDeformationField inverse = invert(state.accumulated[k]);
    std::vector<LabelMap> voters;
    voters.reserve(state.size());
    for (const auto& prior : state.priors) voters.push_back(warp_labels(argmax_labels(prior), inverse));
    return majority_vote(voters);
}

LabelMap pairwise_baseline(const ScalarVolume& target, std::span<const Atlas> atlases, const RegistrationConfig& config) {
    if (atlases.empty()) throw ConfigError("pairwise baseline needs at least one atlas");
    RegistrationConfig cfg = config;
    cfg.beta = 0.0;  // no prior exists on the target
    std::vector<LabelMap> voters;
    for (const Atlas& atlas : atlases) {
        require_codomain(atlas.image.domain(), target.domain(), "pairwise_baseline");
        require_codomain(atlas.labels.domain(), target.domain(), "pairwise_baseline");
        const PopulationState pair = PopulationState::initial({target, atlas.image}, {});
        const RegistrationResult r = register_to_population(1, pair, cfg);
        voters.push_back(warp_labels(atlas.labels, r.field));
    }
    return majority_vote(voters);
}

LabelMap oracle_mode(std::vector<ScalarVolume> images, std::span<const LabelMap> gt_masks, std::size_t target_index,
                     const ProbabilityMap& target_prior, const RegistrationConfig& config, RunReport* report) {
    const std::size_t n = images.size();
    if (target_index >= n) throw ConfigError("oracle target index out of range");
    if (gt_masks.size() != n) throw ConfigError("oracle mode needs a ground-truth mask for every subject");
    std::vector<ProbabilityMap> priors;
    priors.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        priors.push_back(i == target_index ? target_prior : one_hot(gt_masks[i], target_prior.num_classes()));
    IcsResult run = ics_run(std::move(images), std::move(priors), config);
    const auto t0 = Clock::now();
    LabelMap fused = backproject_and_fuse(target_index, run.state);
    run.report.wall_seconds["fusion"] = seconds_since(t0);
    if (report) *report = std::move(run.report);
    return fused;
}

void write_run_report(std::ostream& out, const RunReport& report, std::string_view config_json) {
    nlohmann::ordered_json j;
    j["config"] = config_json.empty() ? nlohmann::ordered_json::object() : nlohmann::ordered_json::parse(config_json);
    j["converged"] = report.converged;
    j["outer_iterations"] = report.outer_iterations;
    auto passes = nlohmann::ordered_json::array();
    for (const auto& p : report.passes)
        passes.push_back({{"pass", p.pass},
                          {"order", p.order},
                          {"max_incremental_displacement_voxels", p.max_incremental_voxels},
                          {"energy",
                           {{"intensity", p.energy.intensity},
                            {"prior", p.energy.prior},
                            {"regularization", p.energy.regularization},
                            {"total", p.energy.total()}}}});
    j["passes"] = passes;
    auto solves = nlohmann::ordered_json::array();
    for (const auto& s : report.solves)
        solves.push_back({{"pass", s.pass},
                          {"image", s.image},
                          {"level", s.level},
                          {"cycle", s.cycle},
                          {"initial_energy", s.initial_energy},
                          {"final_energy", s.final_energy},
                          {"data_term", s.data_term},
                          {"smoothness_term", s.smoothness_term}});
    j["solves"] = solves;
    j["drift_mm"] = {report.drift_mm.x, report.drift_mm.y, report.drift_mm.z};
    j["drift_norm_mm"] = report.drift_mm.norm();
    out << j.dump(2) << '\n';
}

void write_timing_report(std::ostream& out, const RunReport& report) {
    nlohmann::ordered_json j = nlohmann::ordered_json::object();
    for (const auto& [stage, s] : report.wall_seconds) j[stage] = s;
    out << j.dump(2) << '\n';
}

void write_energy_csv(std::ostream& out, const RunReport& report) {
    out << "iteration,energy,data_term,smoothness_term\n";
    for (std::size_t i = 0; i < report.solves.size(); ++i) {
        const auto& s = report.solves[i];
        out << i << ',' << nlohmann::json(s.final_energy).dump() << ',' << nlohmann::json(s.data_term).dump() << ','
            << nlohmann::json(s.smoothness_term).dump() << '\n';
    }
}

}  // namespace coseg
