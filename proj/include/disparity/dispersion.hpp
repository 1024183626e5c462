#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "disparity/cube.hpp"

#include "disparity/common.hpp"

namespace disparity {

// Gini coefficient by the literal double sum over pairs; requires mean > 0.
double gini(const std::vector<double>& xs);

// Sen welfare index mu * (1 - gini).
double sen_welfare(double mu, double gini);

struct SpreadStats {
    double cv = 0.0;       // sigma / mu
    double gap_rel = 0.0;  // (max - min) / mu
    double gap_z = 0.0;    // (max - min) / sigma
    bool degenerate = false;
};

SpreadStats spread_stats(const std::vector<double>& xs);

struct DisparityRow {
    std::string model;
    std::string bucket;
    double mu = 0.0;
    double gini = 0.0;
    double sen = 0.0;
    double cv = 0.0;
    double gap_rel = 0.0;
    double gap_z = 0.0;
    int cells = 0;  // benchmark cells averaged
};

struct DisparityTable {
    std::vector<DisparityRow> rows;  // sorted by model
    std::vector<std::string> warnings;
};

// Per (model, benchmark) cell the indices are computed over per-language
// scores, then averaged (unweighted) across the benchmarks of the bucket.
// Cells with fewer than two languages are skipped and logged.
DisparityTable model_bucket_table(const FitFrame& frame);

struct TierMeans {
    // tier index 0..4 maps tiers 1..5; count == 0 means the tier is absent.
    struct Cell {
        double mean = 0.0;
        std::size_t count = 0;
    };
    Cell pooled[5];
    std::map<std::string, std::array<Cell, 5>> per_model;
};

// Mean raw score per resource tier, pooled across models plus per model.
// Every language in the frame must be present in `tiers`.
TierMeans tier_means(const FitFrame& frame, const std::map<std::string, int>& tiers);

}  // namespace disparity
