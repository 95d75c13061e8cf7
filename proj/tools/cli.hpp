#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "coseg/pipeline.hpp"

namespace coseg::cli {

enum ExitCode : int { kOk = 0, kConfigFailure = 1, kIoFailure = 2, kNumericalFailure = 3 };

enum class Mode { Cosegment, Pairwise, Oracle };

// Everything `coseg run` needs, resolved from the JSON config plus flags.
// Relative paths in the config are taken relative to the config file.
struct RunManifest {
    Mode mode = Mode::Cosegment;
    std::vector<std::filesystem::path> images;
    std::vector<std::filesystem::path> priors;
    std::vector<std::filesystem::path> gt;
    std::size_t target = 0;  // pairwise and oracle modes
    std::filesystem::path out_dir = "coseg_out";
    bool dump_fields = false;
    bool dump_aligned = false;
    std::optional<std::filesystem::path> energy_csv;
    RegistrationConfig config;
    std::string config_json;  // canonical dump of the effective flat config

    // Throws ConfigError for inconsistent counts or modes and IoError for
    // files that do not exist.
    void validate() const;
};

struct RunOverrides {
    std::optional<std::filesystem::path> out_dir;
    std::optional<std::uint64_t> seed;
    bool dump_fields = false;
    std::optional<std::filesystem::path> energy_csv;
};

RunManifest load_run_manifest(const std::filesystem::path& config_path, const RunOverrides& overrides);

// Flat dotted JSON config -> RegistrationConfig; unknown keys are rejected.
RegistrationConfig parse_registration(const std::string& json_text);

int cmd_run(const std::filesystem::path& config_path, const RunOverrides& overrides, bool dry_run);

struct PhantomOptions {
    std::optional<std::filesystem::path> spec_path;
    std::filesystem::path out_dir = "phantom";
    std::string preset = "weak";
    std::optional<std::uint64_t> seed;
    std::optional<int> subjects;
    std::optional<int> size;
    std::optional<double> deform_max_mm;
};

int cmd_phantom(const PhantomOptions& options);

int cmd_eval(const std::vector<std::filesystem::path>& pred, const std::vector<std::filesystem::path>& gt,
             const std::filesystem::path& csv_out);

struct RegisterOptions {
    std::filesystem::path target;
    std::vector<std::filesystem::path> atlas_images;
    std::vector<std::filesystem::path> atlas_labels;
    std::filesystem::path out = "fused.mha";
    std::optional<std::filesystem::path> config_path;
    std::optional<std::uint64_t> seed;
};

int cmd_register(const RegisterOptions& options);

// Parses argv, dispatches to a subcommand and maps errors to exit codes.
int main(int argc, char** argv);

}  // namespace coseg::cli
