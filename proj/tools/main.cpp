#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>

#include "disparity/cli.hpp"
#include "disparity/common.hpp"

int main(int argc, char** argv) {
    CLI::App app{"disparity: decompose cross-language performance disparity in a "
                 "(model x benchmark x language) score cube"};
    app.require_subcommand(1);

    std::string config_path;
    app.add_option("--config", config_path, "run configuration JSON")->required();

    // Flag overrides; flags win over the config file.
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir;
    int chains = 0, warmup = -1, draws = 0;
    double target_accept = 0.0;
    app.add_option("--seed", seed, "master seed")->each([&](const std::string&) {
        seed_set = true;
    });
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--chains", chains, "number of chains");
    app.add_option("--warmup", warmup, "warmup iterations per chain");
    app.add_option("--draws", draws, "post-warmup draws per chain");
    app.add_option("--target-accept", target_accept, "NUTS target acceptance");

    auto* nonparam = app.add_subcommand("nonparam", "Friedman, Kruskal-Wallis and Dunn tables");
    auto* dispersion = app.add_subcommand("dispersion", "Gini/Sen/CV disparity tables");
    auto* fit = app.add_subcommand("fit", "fit one model stage on one bucket");
    std::string stage, bucket;
    fit->add_option("--stage", stage, "1 | 2 | 3 | 3-logit")->required();
    fit->add_option("--bucket", bucket, "bucket tag from the config's bucket map")->required();
    auto* decompose =
        app.add_subcommand("decompose", "headline, variance shares, coefficients, LP, PPS");
    auto* tree = app.add_subcommand("tree", "gradient-boosted-tree cross-check");
    auto* report = app.add_subcommand("report", "assemble the markdown report");

    CLI11_PARSE(app, argc, argv);

    disparity::RunConfig cfg;
    try {
        cfg = disparity::RunConfig::from_file(config_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    if (seed_set) cfg.seed = seed;
    if (!out_dir.empty()) cfg.out_dir = out_dir;
    if (chains > 0) cfg.sampler.chains = chains;
    if (warmup >= 0) cfg.sampler.warmup = warmup;
    if (draws > 0) cfg.sampler.draws = draws;
    if (target_accept > 0.0) cfg.sampler.target_accept = target_accept;

    std::string command;
    if (nonparam->parsed()) command = "nonparam";
    if (dispersion->parsed()) command = "dispersion";
    if (fit->parsed()) command = "fit";
    if (decompose->parsed()) command = "decompose";
    if (tree->parsed()) command = "tree";
    if (report->parsed()) command = "report";

    return disparity::run_command(cfg, command, stage, bucket);
}
