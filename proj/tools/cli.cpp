#include "cli.hpp"

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "coseg/error.hpp"
#include "coseg/metaimage.hpp"
#include "coseg/metrics.hpp"
#include "coseg/parallel.hpp"
#include "coseg/phantom.hpp"
#include "json.hpp"

namespace coseg::cli {

namespace fs = std::filesystem;
using Json = nlohmann::ordered_json;

namespace {

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw IoError("write failed for '" + path.string() + "'");
}

Json parse_json(const std::string& text, const std::string& what) {
    try {
        Json j = Json::parse(text);
        if (!j.is_object()) throw ConfigError(what + ": top level must be a JSON object");
        return j;
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(what + ": " + e.what());
    }
}

template <typename T>
T get_as(const Json& j, const std::string& key) {
    try {
        return j.get<T>();
    } catch (const nlohmann::json::exception&) {
        throw ConfigError("config key '" + key + "' has the wrong type");
    }
}

Vec3 get_triple(const Json& j, const std::string& key) {
    if (j.is_number()) {
        const double v = j.get<double>();
        return {v, v, v};
    }
    const auto v = get_as<std::vector<double>>(j, key);
    if (v.size() != 3) throw ConfigError("config key '" + key + "' needs one number or three");
    return {v[0], v[1], v[2]};
}

const char* solver_name(Solver s) { return s == Solver::Expansion ? "expansion" : "icm"; }
const char* basis_name(Basis b) { return b == Basis::CubicBSpline ? "bspline" : "trilinear"; }
const char* mode_name(Mode m) {
    switch (m) {
        case Mode::Cosegment: return "cosegment";
        case Mode::Pairwise: return "pairwise";
        case Mode::Oracle: return "oracle";
    }
    return "";
}

// Applies one registration.* key; returns false if the key is not one.
bool apply_registration_key(RegistrationConfig& c, const std::string& key, const Json& v) {
    const std::string prefix = "registration.";
    if (key.rfind(prefix, 0) != 0) return false;
    const std::string name = key.substr(prefix.size());
    if (name == "lambda") c.lambda = get_as<double>(v, key);
    else if (name == "beta") c.beta = get_as<double>(v, key);
    else if (name == "pyramid_levels") c.pyramid_levels = get_as<int>(v, key);
    else if (name == "grid_spacing_finest") c.grid_spacing_finest = get_triple(v, key);
    else if (name == "label_steps") c.label_steps = get_as<int>(v, key);
    else if (name == "refinement_cycles_per_level") c.refinement_cycles_per_level = get_as<int>(v, key);
    else if (name == "label_scale_decay") c.label_scale_decay = get_as<double>(v, key);
    else if (name == "max_outer_iterations") c.max_outer_iterations = get_as<int>(v, key);
    else if (name == "convergence_eps") c.convergence_eps = get_as<double>(v, key);
    else if (name == "seed") c.seed = get_as<std::uint64_t>(v, key);
    else if (name == "fusion") {
        if (get_as<std::string>(v, key) != "majority") throw ConfigError("registration.fusion must be \"majority\"");
    } else if (name == "solver") {
        const auto s = get_as<std::string>(v, key);
        if (s == "expansion") c.solver = Solver::Expansion;
        else if (s == "icm") c.solver = Solver::Icm;
        else throw ConfigError("registration.solver must be \"expansion\" or \"icm\"");
    } else if (name == "basis") {
        const auto s = get_as<std::string>(v, key);
        if (s == "bspline") c.basis = Basis::CubicBSpline;
        else if (s == "trilinear") c.basis = Basis::Trilinear;
        else throw ConfigError("registration.basis must be \"bspline\" or \"trilinear\"");
    } else {
        throw ConfigError("unknown config key '" + key + "'");
    }
    return true;
}

Json registration_json(const RegistrationConfig& c) {
    Json j;
    j["registration.lambda"] = c.lambda;
    j["registration.beta"] = c.beta;
    j["registration.pyramid_levels"] = c.pyramid_levels;
    j["registration.grid_spacing_finest"] = {c.grid_spacing_finest.x, c.grid_spacing_finest.y, c.grid_spacing_finest.z};
    j["registration.label_steps"] = c.label_steps;
    j["registration.refinement_cycles_per_level"] = c.refinement_cycles_per_level;
    j["registration.label_scale_decay"] = c.label_scale_decay;
    j["registration.max_outer_iterations"] = c.max_outer_iterations;
    j["registration.convergence_eps"] = c.convergence_eps;
    j["registration.fusion"] = "majority";
    j["registration.solver"] = solver_name(c.solver);
    j["registration.basis"] = basis_name(c.basis);
    j["registration.seed"] = c.seed;
    return j;
}

std::vector<fs::path> path_list(const Json& v, const std::string& key, const fs::path& base) {
    std::vector<fs::path> out;
    for (const auto& s : get_as<std::vector<std::string>>(v, key)) {
        const fs::path p(s);
        out.push_back(p.is_absolute() ? p : base / p);
    }
    return out;
}

std::vector<std::string> as_strings(const std::vector<fs::path>& paths) {
    std::vector<std::string> out;
    for (const auto& p : paths) out.push_back(p.string());
    return out;
}

std::string indexed(const char* stem, std::size_t i) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%s_%02zu.mha", stem, i);
    return buf;
}

void require_files(const std::vector<fs::path>& paths) {
    for (const auto& p : paths)
        if (!fs::is_regular_file(p)) throw IoError("input file not found: '" + p.string() + "'");
}

void write_reports(const fs::path& out_dir, const RunReport& report, const RunManifest& m) {
    std::ostringstream rep;
    write_run_report(rep, report, m.config_json);
    write_text(out_dir / "report.json", rep.str());
    std::ostringstream timing;
    write_timing_report(timing, report);
    write_text(out_dir / "timing.json", timing.str());
    if (m.energy_csv) {
        std::ostringstream csv;
        write_energy_csv(csv, report);
        write_text(*m.energy_csv, csv.str());
    }
}

void write_metrics(const fs::path& path, const std::vector<std::pair<std::string, StructureReport>>& rows) {
    std::ostringstream csv;
    write_metrics_csv(csv, rows);
    write_text(path, csv.str());
}

}  // namespace

RegistrationConfig parse_registration(const std::string& json_text) {
    const Json j = parse_json(json_text, "registration config");
    RegistrationConfig c;
    for (const auto& [key, value] : j.items())
        if (!apply_registration_key(c, key, value)) throw ConfigError("unknown config key '" + key + "'");
    c.validate();
    return c;
}

void RunManifest::validate() const {
    config.validate();
    if (images.empty()) throw ConfigError("inputs.images is empty");
    switch (mode) {
        case Mode::Cosegment:
            if (images.size() < 2) throw ConfigError("cosegment mode needs at least two images");
            if (config.beta > 0.0 && priors.size() != images.size())
                throw ConfigError("cosegment mode needs one prior per image when registration.beta > 0");
            break;
        case Mode::Pairwise:
            if (images.size() < 2) throw ConfigError("pairwise mode needs a target and at least one atlas");
            if (gt.size() != images.size()) throw ConfigError("pairwise mode needs inputs.gt for every image");
            break;
        case Mode::Oracle:
            if (images.size() < 2) throw ConfigError("oracle mode needs at least two images");
            if (gt.size() != images.size()) throw ConfigError("oracle mode needs inputs.gt for every image");
            if (priors.size() != images.size()) throw ConfigError("oracle mode needs inputs.priors for every image");
            break;
    }
    if (!priors.empty() && priors.size() != images.size()) throw ConfigError("inputs.priors count differs from images");
    if (!gt.empty() && gt.size() != images.size()) throw ConfigError("inputs.gt count differs from images");
    if (mode != Mode::Cosegment && target >= images.size()) throw ConfigError("inputs.target is out of range");
    require_files(images);
    require_files(priors);
    require_files(gt);
}

RunManifest load_run_manifest(const fs::path& config_path, const RunOverrides& overrides) {
    const Json j = parse_json(read_text(config_path), config_path.string());
    const fs::path base = config_path.has_parent_path() ? config_path.parent_path() : fs::path(".");
    RunManifest m;
    for (const auto& [key, v] : j.items()) {
        if (apply_registration_key(m.config, key, v)) continue;
        if (key == "mode") {
            const auto s = get_as<std::string>(v, key);
            if (s == "cosegment") m.mode = Mode::Cosegment;
            else if (s == "pairwise") m.mode = Mode::Pairwise;
            else if (s == "oracle") m.mode = Mode::Oracle;
            else throw ConfigError("mode must be cosegment, pairwise or oracle");
        } else if (key == "inputs.images") m.images = path_list(v, key, base);
        else if (key == "inputs.priors") m.priors = path_list(v, key, base);
        else if (key == "inputs.gt") m.gt = path_list(v, key, base);
        else if (key == "inputs.target") m.target = get_as<std::size_t>(v, key);
        else if (key == "output.dir") {
            const fs::path p(get_as<std::string>(v, key));
            m.out_dir = p.is_absolute() ? p : base / p;
        } else if (key == "output.dump_fields") m.dump_fields = get_as<bool>(v, key);
        else if (key == "output.aligned") m.dump_aligned = get_as<bool>(v, key);
        else if (key == "output.energy_csv") {
            const fs::path p(get_as<std::string>(v, key));
            m.energy_csv = p.is_absolute() ? p : base / p;
        } else throw ConfigError("unknown config key '" + key + "'");
    }
    if (overrides.out_dir) m.out_dir = *overrides.out_dir;
    if (overrides.seed) m.config.seed = *overrides.seed;
    if (overrides.dump_fields) m.dump_fields = true;
    if (overrides.energy_csv) m.energy_csv = *overrides.energy_csv;

    Json eff;
    eff["mode"] = mode_name(m.mode);
    eff["inputs.images"] = as_strings(m.images);
    eff["inputs.priors"] = as_strings(m.priors);
    eff["inputs.gt"] = as_strings(m.gt);
    eff["inputs.target"] = m.target;
    const Json reg = registration_json(m.config);
    for (const auto& [k, v] : reg.items()) eff[k] = v;
    m.config_json = eff.dump();
    return m;
}

int cmd_run(const fs::path& config_path, const RunOverrides& overrides, bool dry_run) {
    const RunManifest m = load_run_manifest(config_path, overrides);
    m.validate();

    std::vector<ScalarVolume> images;
    for (const auto& p : m.images) images.push_back(load_intensity_volume(p));
    std::vector<ProbabilityMap> priors;
    for (const auto& p : m.priors) priors.push_back(load_probability(p));
    std::vector<LabelMap> gt;
    for (const auto& p : m.gt) gt.push_back(load_labels(p));
    for (const auto& v : images) require_codomain(v.domain(), images[0].domain(), "inputs.images");
    for (const auto& v : priors) require_codomain(v.domain(), images[0].domain(), "inputs.priors");
    for (const auto& v : gt) require_codomain(v.domain(), images[0].domain(), "inputs.gt");
    if (dry_run) {
        std::cout << "dry run: " << mode_name(m.mode) << " with " << images.size() << " images, manifest valid\n";
        return kOk;
    }

    fs::create_directories(m.out_dir);
    std::vector<std::pair<std::string, StructureReport>> metrics;
    switch (m.mode) {
        case Mode::Cosegment: {
            IcsResult r = ics_run(images, priors, m.config);
            for (std::size_t k = 0; k < images.size(); ++k) {
                const LabelMap fused = backproject_and_fuse(k, r.state);
                save_metaimage(fused, m.out_dir / indexed("fused", k));
                if (m.dump_aligned) save_metaimage(argmax_labels(r.state.priors[k]), m.out_dir / indexed("aligned", k));
                if (m.dump_fields) save_field(r.state.accumulated[k], m.out_dir / indexed("field", k));
                if (!gt.empty()) metrics.emplace_back(m.images[k].filename().string(), evaluate(fused, gt[k]));
            }
            write_reports(m.out_dir, r.report, m);
            break;
        }
        case Mode::Pairwise: {
            std::vector<Atlas> atlases;
            for (std::size_t i = 0; i < images.size(); ++i)
                if (i != m.target) atlases.push_back({images[i], gt[i]});
            const LabelMap fused = pairwise_baseline(images[m.target], atlases, m.config);
            save_metaimage(fused, m.out_dir / indexed("fused", m.target));
            metrics.emplace_back(m.images[m.target].filename().string(), evaluate(fused, gt[m.target]));
            write_reports(m.out_dir, RunReport{}, m);
            break;
        }
        case Mode::Oracle: {
            RunReport report;
            const LabelMap fused = oracle_mode(images, gt, m.target, priors[m.target], m.config, &report);
            save_metaimage(fused, m.out_dir / indexed("fused", m.target));
            metrics.emplace_back(m.images[m.target].filename().string(), evaluate(fused, gt[m.target]));
            write_reports(m.out_dir, report, m);
            break;
        }
    }
    if (!metrics.empty()) write_metrics(m.out_dir / "metrics.csv", metrics);
    std::cout << "wrote " << (m.out_dir / "report.json").string() << '\n';
    return kOk;
}

int cmd_phantom(const PhantomOptions& o) {
    PhantomSpec spec;
    std::string preset = o.preset;
    if (o.spec_path) {
        const Json j = parse_json(read_text(*o.spec_path), o.spec_path->string());
        for (const auto& [key, v] : j.items()) {
            if (key == "dims") {
                const Vec3 d = get_triple(v, key);
                spec.dims = {static_cast<int>(d.x), static_cast<int>(d.y), static_cast<int>(d.z)};
            } else if (key == "spacing") spec.spacing = get_triple(v, key);
            else if (key == "num_structures") spec.num_structures = get_as<int>(v, key);
            else if (key == "num_subjects") spec.num_subjects = get_as<int>(v, key);
            else if (key == "deform_max_mm") spec.deform_max_mm = get_as<double>(v, key);
            else if (key == "field_grid_spacing_mm") spec.field_grid_spacing_mm = get_as<double>(v, key);
            else if (key == "image_noise_sigma") spec.image_noise_sigma = get_as<double>(v, key);
            else if (key == "seed") spec.seed = get_as<std::uint64_t>(v, key);
            else if (key == "preset") preset = get_as<std::string>(v, key);
            else throw ConfigError("unknown phantom key '" + key + "'");
        }
    }
    if (o.seed) spec.seed = *o.seed;
    if (o.subjects) spec.num_subjects = *o.subjects;
    if (o.size) spec.dims = {*o.size, *o.size, *o.size};
    if (o.deform_max_mm) spec.deform_max_mm = *o.deform_max_mm;
    const auto noise = prior_preset(preset);
    if (!noise) throw ConfigError("unknown prior preset '" + preset + "'");
    spec.prior_noise = *noise;
    spec.preset = preset;
    for (const auto& w : spec.validate()) std::cerr << "warning: " << w << '\n';

    const PhantomPopulation pop = generate_population(spec);
    const fs::path manifest = write_population(pop, spec, o.out_dir);

    // Ready-to-use cosegmentation config next to the generated files.
    Json run;
    run["mode"] = "cosegment";
    std::vector<std::string> images, priors, gt;
    for (std::size_t s = 0; s < pop.subjects.size(); ++s) {
        char stem[32];
        std::snprintf(stem, sizeof(stem), "subject_%02zu", s);
        images.push_back(std::string(stem) + "_image.mha");
        priors.push_back(std::string(stem) + "_prior.mha");
        gt.push_back(std::string(stem) + "_gt.mha");
    }
    run["inputs.images"] = images;
    run["inputs.priors"] = priors;
    run["inputs.gt"] = gt;
    run["output.dir"] = "run";
    run["registration.seed"] = spec.seed;
    write_text(o.out_dir / "run.json", run.dump(2) + "\n");
    std::cout << manifest.string() << '\n';
    return kOk;
}

int cmd_eval(const std::vector<fs::path>& pred, const std::vector<fs::path>& gt, const fs::path& csv_out) {
    if (pred.empty() || pred.size() != gt.size()) throw ConfigError("eval needs matching, non-empty --pred and --gt lists");
    require_files(pred);
    require_files(gt);
    std::vector<std::pair<std::string, StructureReport>> rows;
    for (std::size_t i = 0; i < pred.size(); ++i)
        rows.emplace_back(pred[i].filename().string(), evaluate(load_labels(pred[i]), load_labels(gt[i])));
    write_metrics(csv_out, rows);
    for (const auto& [id, r] : rows) std::cout << id << " mean dice " << r.mean_dice() << '\n';
    return kOk;
}

int cmd_register(const RegisterOptions& o) {
    if (o.atlas_images.empty() || o.atlas_images.size() != o.atlas_labels.size())
        throw ConfigError("register needs matching, non-empty --atlas and --atlas-labels lists");
    require_files({o.target});
    require_files(o.atlas_images);
    require_files(o.atlas_labels);
    RegistrationConfig config = o.config_path ? parse_registration(read_text(*o.config_path)) : RegistrationConfig{};
    if (o.seed) config.seed = *o.seed;
    const ScalarVolume target = load_intensity_volume(o.target);
    std::vector<Atlas> atlases;
    for (std::size_t i = 0; i < o.atlas_images.size(); ++i)
        atlases.push_back({load_intensity_volume(o.atlas_images[i]), load_labels(o.atlas_labels[i])});
    const LabelMap fused = pairwise_baseline(target, atlases, config);
    if (o.out.has_parent_path()) fs::create_directories(o.out.parent_path());
    save_metaimage(fused, o.out);
    std::cout << "wrote " << o.out.string() << '\n';
    return kOk;
}

int main(int argc, char** argv) {
    CLI::App app{"Groupwise registration and cosegmentation of 3D volumes"};
    app.require_subcommand(1);
    app.fallthrough();  // global options such as --threads may follow the subcommand
    unsigned threads = 0;
    app.add_option("--threads", threads, "Worker threads (0: all cores)");

    RunOverrides run_over;
    fs::path run_config;
    bool dry_run = false;
    std::string energy_csv;
    auto* run = app.add_subcommand("run", "Cosegment, pairwise or oracle run from a JSON config");
    run->add_option("--config", run_config, "Flat dotted JSON config")->required();
    run->add_option("--out", run_over.out_dir, "Output directory (overrides output.dir)");
    run->add_option("--seed", run_over.seed, "Seed (overrides registration.seed)");
    run->add_flag("--dump-fields", run_over.dump_fields, "Write accumulated deformation fields");
    run->add_option("--energy-csv", energy_csv, "Write per-solve energies to this CSV");
    run->add_flag("--dry-run", dry_run, "Validate config and inputs without computing");

    PhantomOptions ph;
    auto* phantom = app.add_subcommand("phantom", "Generate a synthetic population");
    phantom->add_option("--config", ph.spec_path, "Phantom settings JSON");
    phantom->add_option("--out", ph.out_dir, "Output directory");
    phantom->add_option("--preset", ph.preset, "Prior corruption preset")->check(CLI::IsMember({"weak", "strong", "none"}));
    phantom->add_option("--seed", ph.seed, "Seed");
    phantom->add_option("--subjects", ph.subjects, "Number of subjects");
    phantom->add_option("--size", ph.size, "Cube edge in voxels");
    phantom->add_option("--deform-max", ph.deform_max_mm, "Largest control displacement, mm");

    std::vector<fs::path> pred, gt;
    fs::path csv_out = "metrics.csv";
    auto* eval = app.add_subcommand("eval", "Dice, Hausdorff and contour mean distance per structure");
    eval->add_option("--pred", pred, "Predicted label maps")->required();
    eval->add_option("--gt", gt, "Ground-truth label maps, same order")->required();
    eval->add_option("--out", csv_out, "CSV output path");

    RegisterOptions reg;
    auto* regist = app.add_subcommand("register", "Pairwise multi-atlas baseline");
    regist->add_option("--target", reg.target, "Target image")->required();
    regist->add_option("--atlas", reg.atlas_images, "Atlas images")->required();
    regist->add_option("--atlas-labels", reg.atlas_labels, "Atlas label maps, same order")->required();
    regist->add_option("--out", reg.out, "Fused label map path");
    regist->add_option("--config", reg.config_path, "Registration config JSON (registration.* keys)");
    regist->add_option("--seed", reg.seed, "Seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kOk : kConfigFailure;
    }

    try {
        set_num_threads(threads);
        if (!energy_csv.empty()) run_over.energy_csv = fs::path(energy_csv);
        if (run->parsed()) return cmd_run(run_config, run_over, dry_run);
        if (phantom->parsed()) return cmd_phantom(ph);
        if (eval->parsed()) return cmd_eval(pred, gt, csv_out);
        if (regist->parsed()) return cmd_register(reg);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfigFailure;
    } catch (const IoError& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return kIoFailure;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumericalFailure;
    } catch (const std::exception& e) {
        std::cerr << "failure: " << e.what() << '\n';
        return kNumericalFailure;
    }
    return kConfigFailure;
}

}  // namespace coseg::cli
