#include <string>
#include <vector>

#include "cli.hpp"
#include "coseg/metaimage.hpp"
#include "coseg/metrics.hpp"
#include "doctest.h"
#include "json.hpp"
#include "support.hpp"

namespace fs = std::filesystem;

namespace {

int invoke(std::vector<std::string> args) {
    args.insert(args.begin(), "coseg");
    std::vector<char*> argv;
    for (auto& a : args) argv.push_back(a.data());
    return coseg::cli::main(static_cast<int>(argv.size()), argv.data());
}

void write(const fs::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

// A small phantom plus a run config tuned for speed.
fs::path small_population(const support::TempDir& dir) {
    REQUIRE(invoke({"phantom", "--out", (dir / "ph").string(), "--size", "20", "--subjects", "3", "--seed", "2",
                    "--preset", "strong"}) == 0);
    auto run = nlohmann::json::parse(support::read_file(dir / "ph/run.json"));
    run["registration.pyramid_levels"] = 2;
    run["registration.grid_spacing_finest"] = 5;
    run["registration.max_outer_iterations"] = 2;
    run["registration.label_steps"] = 2;
    write(dir / "ph/run.json", run.dump());
    return dir / "ph/run.json";
}

}  // namespace

TEST_CASE("exit codes: usage and config errors 1, missing files 2") {
    support::TempDir dir("cli");
    CHECK(invoke({}) == 1);
    CHECK(invoke({"bogus"}) == 1);
    CHECK(invoke({"run", "--config", (dir / "missing.json").string()}) == 2);
    write(dir / "neg.json", R"({"registration.lambda": -1})");
    CHECK(invoke({"run", "--config", (dir / "neg.json").string()}) == 1);
    write(dir / "unknown.json", R"({"registration.lamda": 1})");
    CHECK(invoke({"run", "--config", (dir / "unknown.json").string()}) == 1);
    write(dir / "broken.json", "{ not json");
    CHECK(invoke({"run", "--config", (dir / "broken.json").string()}) == 1);
    write(dir / "noinput.json", R"({"inputs.images": ["a.mha", "b.mha"], "registration.beta": 0})");
    CHECK(invoke({"run", "--config", (dir / "noinput.json").string()}) == 2);
    write(dir / "oracle.json", R"({"mode": "oracle", "inputs.images": ["a.mha", "b.mha"]})");
    CHECK(invoke({"run", "--config", (dir / "oracle.json").string()}) == 1);
}

TEST_CASE("config parsing accepts flat dotted keys") {
    const auto c = coseg::cli::parse_registration(
        R"({"registration.lambda": 2.5, "registration.grid_spacing_finest": [6, 7, 8], "registration.solver": "icm"})");
    CHECK(c.lambda == 2.5);
    CHECK(c.grid_spacing_finest == coseg::Vec3{6, 7, 8});
    CHECK(c.solver == coseg::Solver::Icm);
    CHECK_THROWS_AS(coseg::cli::parse_registration(R"({"registration.solver": "fastpd"})"), coseg::ConfigError);
    CHECK_THROWS_AS(coseg::cli::parse_registration(R"({"registration.label_steps": "four"})"), coseg::ConfigError);
}

TEST_CASE("dry run validates without writing outputs") {
    support::TempDir dir("cli");
    const fs::path cfg = small_population(dir);
    CHECK(invoke({"run", "--config", cfg.string(), "--dry-run", "--out", (dir / "dry").string()}) == 0);
    CHECK_FALSE(fs::exists(dir / "dry"));
}

TEST_CASE("run writes fused maps, reports and metrics; reruns are byte-identical") {
    support::TempDir dir("cli");
    const fs::path cfg = small_population(dir);
    for (const char* out : {"a", "b"})
        REQUIRE(invoke({"run", "--config", cfg.string(), "--out", (dir / out).string(), "--threads", "1",
                        "--dump-fields", "--energy-csv", (dir / out).string() + ".csv"}) == 0);
    for (const char* name : {"fused_00.mha", "fused_02.mha", "field_01.mha", "report.json", "metrics.csv"}) {
        INFO(name);
        REQUIRE(fs::exists(dir / "a" / name));
        CHECK(support::read_file(dir / "a" / name) == support::read_file(dir / "b" / name));
    }
    CHECK(support::read_file(dir / "a.csv") == support::read_file(dir / "b.csv"));
    const auto report = nlohmann::json::parse(support::read_file(dir / "a/report.json"));
    CHECK(report["config"]["mode"] == "cosegment");
    CHECK(report["config"]["registration.max_outer_iterations"] == 2);
    CHECK(fs::exists(dir / "a/timing.json"));

    CHECK(invoke({"eval", "--pred", (dir / "a/fused_00.mha").string(), "--gt", (dir / "ph/subject_00_gt.mha").string(),
                  "--out", (dir / "eval.csv").string()}) == 0);
    CHECK(support::read_file(dir / "eval.csv").find("fused_00.mha,1,") != std::string::npos);
}

TEST_CASE("outputs do not depend on the thread count") {
    support::TempDir dir("cli");
    const fs::path cfg = small_population(dir);
    REQUIRE(invoke({"run", "--config", cfg.string(), "--out", (dir / "t1").string(), "--threads", "1"}) == 0);
    REQUIRE(invoke({"run", "--config", cfg.string(), "--out", (dir / "t3").string(), "--threads", "3"}) == 0);
    for (const char* name : {"fused_00.mha", "fused_01.mha", "report.json"})
        CHECK(support::read_file(dir / "t1" / name) == support::read_file(dir / "t3" / name));
}

TEST_CASE("register writes the pairwise fusion") {
    support::TempDir dir("cli");
    small_population(dir);
    const fs::path ph = dir / "ph";
    CHECK(invoke({"register", "--target", (ph / "subject_00_image.mha").string(), "--atlas",
                  (ph / "subject_01_image.mha").string(), (ph / "subject_02_image.mha").string(), "--atlas-labels",
                  (ph / "subject_01_gt.mha").string(), (ph / "subject_02_gt.mha").string(), "--out",
                  (dir / "reg/fused.mha").string()}) == 0);
    const coseg::LabelMap fused = coseg::load_labels(dir / "reg/fused.mha");
    CHECK(coseg::evaluate(fused, coseg::load_labels(ph / "subject_00_gt.mha")).mean_dice() > 0.5);
    CHECK(invoke({"register", "--target", (ph / "subject_00_image.mha").string(), "--atlas",
                  (ph / "subject_01_image.mha").string(), "--atlas-labels", (ph / "subject_01_gt.mha").string(),
                  (ph / "subject_02_gt.mha").string()}) == 1);
}

TEST_CASE("pairwise and oracle modes run from a config") {
    support::TempDir dir("cli");
    const fs::path cfg = small_population(dir);
    auto run = nlohmann::json::parse(support::read_file(cfg));
    for (const char* mode : {"pairwise", "oracle"}) {
        run["mode"] = mode;
        run["inputs.target"] = 1;
        write(dir / "ph/mode.json", run.dump());
        CHECK(invoke({"run", "--config", (dir / "ph/mode.json").string(), "--out", (dir / mode).string()}) == 0);
        CHECK(fs::exists(dir / mode / "fused_01.mha"));
        CHECK(fs::exists(dir / mode / "metrics.csv"));
    }
}
