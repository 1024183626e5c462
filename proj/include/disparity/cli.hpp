#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>

#include "disparity/decompose.hpp"
#include "disparity/gbt.hpp"
#include "disparity/nuts.hpp"

namespace disparity {

struct RunConfig {
    std::string scores_path;
    std::string scores_format = "csv";  // csv | json
    std::string languages_path;
    std::string model_language_path;
    std::string out_dir = "out";

    std::map<std::string, std::string> bucket_map;  // benchmark -> bucket tag
    std::set<std::string> chrf100_benchmarks;

    std::uint64_t seed = 20260801;
    NutsConfig sampler;
    GbtConfig gbt;
    StageFormulas formulas = StageFormulas::defaults();
    LdsMode lds_mode = LdsMode::posterior_mean;

    static RunConfig from_file(const std::string& path);
    void validate_paths() const;

    std::set<std::string> buckets() const;  // distinct bucket tags, sorted
};

// Subcommand bodies; they throw (ValidationError, SamplerError,
// MissingArtifact) and the CLI front end maps those to exit codes.
void run_nonparam(const RunConfig& config);
void run_dispersion(const RunConfig& config);
void run_fit(const RunConfig& config, const std::string& stage, const std::string& bucket);
void run_decompose(const RunConfig& config);
void run_tree(const RunConfig& config);
void run_report(const RunConfig& config);

// Exit-code mapping used by the binary: 0 ok, 2 config/validation,
// 3 sampler, 4 missing dependency.
int run_command(const RunConfig& config, const std::string& command, const std::string& stage,
                const std::string& bucket);

}  // namespace disparity
