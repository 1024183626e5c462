#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "disparity/cube.hpp"

namespace disparity {

struct GbtConfig {
    int trees = 600;
    int depth = 4;  // split levels; depth 1 is a stump
    double learning_rate = 0.05;
    int seeds = 5;
    int min_samples_leaf = 1;

    void check() const;
};

// Continuous features standardized (the frame's z columns), identifiers
// one-hot encoded with the parent feature retained for importance
// aggregation.
struct EncodedFrame {
    std::size_t n = 0;
    std::size_t d = 0;
    std::vector<double> X;  // column-major n * d
    std::vector<double> y;
    std::vector<std::string> col_names;
    std::vector<std::string> parents;  // per column

    // Row metadata for the hold-out protocol.
    std::vector<std::string> benchmark;
    std::vector<std::string> language;
    std::vector<std::string> model;
    std::vector<int> tier;

    double x(std::size_t row, std::size_t col) const { return X[col * n + row]; }
};

EncodedFrame gbt_encode(const FitFrame& frame);

struct TreeNode {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;  // leaf value (unscaled residual mean)
};

struct GbtModel {
    double base = 0.0;
    double learning_rate = 0.0;
    std::vector<std::vector<TreeNode>> trees;
    std::vector<std::string> col_names;
    std::vector<std::string> parents;
    std::vector<double> gain;        // per-column split gain accumulation
    std::vector<double> train_mse;   // after each tree
};

// Squared-error boosting, exact greedy splits, leaf value = mean residual.
// Deterministic given the data and row order. `rows` selects the training
// subset (empty = all rows).
GbtModel gbt_train(const EncodedFrame& frame, const std::vector<std::int32_t>& rows,
                   const GbtConfig& config);

double gbt_predict(const GbtModel& model, const EncodedFrame& frame, std::size_t row);

// Per-parent share of total split gain, normalized to sum to one. A model
// that never split returns all-zero shares and sets *degenerate.
std::map<std::string, double> gbt_importance(const GbtModel& model, bool* degenerate = nullptr);

struct HoldoutRow {
    std::string key;  // benchmark name or tier label
    double mae_mean = 0.0, mae_sd = 0.0;
    double rmse_mean = 0.0, rmse_sd = 0.0;
    std::size_t cells = 0;  // held-out (benchmark, language) cells across seeds
};

struct HoldoutReport {
    std::vector<HoldoutRow> per_benchmark;  // sorted by benchmark
    std::vector<HoldoutRow> per_tier;       // tiers with >= 2 languages somewhere
    HoldoutRow overall;
    std::vector<std::string> skipped;  // (benchmark, tier) combos without a partner
    std::size_t leaked_rows = 0;       // construction audit; must be zero
};

// For each seed and each (benchmark, tier) pair with >= 2 languages, one
// language is held out; its rows for that benchmark form the test set and
// never appear in that fold's training rows.
HoldoutReport gbt_holdout(const EncodedFrame& encoded, const GbtConfig& config,
                          std::uint64_t seed);

}  // namespace disparity
