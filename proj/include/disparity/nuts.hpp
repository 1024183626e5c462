#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "disparity/posterior.hpp"

namespace disparity {

struct NutsConfig {
    int chains = 4;
    int warmup = 5000;
    int draws = 2000;
    double target_accept = 0.99;
    int max_tree_depth = 10;
    std::uint64_t seed = 0;

    void check() const;
};

struct ChainStats {
    std::size_t divergences = 0;          // post-warmup
    std::size_t warmup_divergences = 0;
    double step_size = 0.0;
    double mean_accept = 0.0;
    std::vector<std::uint8_t> treedepth;  // per kept draw
    std::vector<std::uint8_t> divergent;  // per kept draw
};

struct PosteriorDraws {
    std::vector<std::string> names;
    std::vector<Transform> transforms;
    std::size_t n_chains = 0;
    std::size_t n_draws = 0;  // post-warmup per chain
    std::size_t dim = 0;
    std::vector<double> draws;  // [chain][draw][param], unconstrained scale
    std::vector<ChainStats> stats;

    double value(std::size_t c, std::size_t d, std::size_t k) const {
        return draws[(c * n_draws + d) * dim + k];
    }
    double constrained(std::size_t c, std::size_t d, std::size_t k) const {
        const double v = value(c, d, k);
        return transforms[k] == Transform::log_exp ? std::exp(v) : v;
    }
    // All post-warmup draws of one parameter, constrained scale, chain-major.
    std::vector<double> constrained_param(std::size_t k) const;
    // Index of a parameter by name; -1 if absent.
    int index_of(const std::string& name) const;
};

// target(theta, grad) returns log density and fills grad. make_target is
// called once per chain so each chain can own its scratch buffers; the
// returned callable must be independently usable in parallel.
using TargetFn = std::function<double(std::span<const double>, std::span<double>)>;
using TargetFactory = std::function<TargetFn(int chain)>;

// Multinomial no-U-turn sampler with dual-averaging step-size adaptation
// and windowed diagonal mass-matrix estimation during warmup. Chains run
// in parallel and are bitwise reproducible given (seed, chain count).
// init_inv_mass seeds the diagonal metric (empty = identity).
PosteriorDraws nuts_sample(const TargetFactory& make_target,
                           const std::vector<std::vector<double>>& chain_inits,
                           const std::vector<std::string>& names,
                           const std::vector<Transform>& transforms, const NutsConfig& config,
                           const std::vector<double>& init_inv_mass = {});

// Convenience wrapper for a Posterior model: builds per-chain targets and
// the jittered initial points (offsets get U(-0.1, 0.1) noise per chain).
PosteriorDraws nuts_sample_posterior(const Posterior& post, const NutsConfig& config);

}  // namespace disparity
