#pragma once

#include "bdt/common/json_util.hpp"

#include <string>
#include <vector>

namespace bdt {

// Parsed command line: one verb plus config/overrides and artifact paths.
struct CliOptions {
    std::string command;
    std::string config_path; // JSON config; missing file = all defaults
    std::string output_dir;  // overrides config output_dir when nonempty
    std::string model_path;  // --model: classifier checkpoint
    std::string detector_path; // --detector: VAE/detector checkpoint
    std::string images_dir;    // --images: directory of .ppm/.pgm inputs
    int64_t seed = -1;         // overrides config seed when >= 0
    bool force = false;        // ignore cached checkpoints
};

extern const std::vector<std::string> kCliCommands;

// Built-in defaults for every config field; user files override sparsely.
json default_pipeline_config();

// defaults <- config file <- flag overrides, then schema validation
// (unknown fields and type mismatches raise with field-level messages).
json effective_config(const CliOptions& options);

// Hash of the effective config minus the seed: multi-seed runs of the same
// experiment share a hash, so `report` can aggregate them.
std::string pipeline_config_hash(json effective);

// Executes one command; returns a process exit status (0 = success). Errors
// print to stderr.
int run_command(const CliOptions& options);

} // namespace bdt
