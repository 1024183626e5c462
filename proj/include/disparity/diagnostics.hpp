#pragma once

#include <string>
#include <vector>

#include "disparity/nuts.hpp"

namespace disparity {

// Rank-normalized split R-hat over per-chain draw sequences. Needs at
// least 2 chains of at least 4 draws.
double rhat_rank_normalized(const std::vector<std::vector<double>>& chains);

// Rank-normalized bulk effective sample size with Geyer's initial
// monotone sequence truncation of the autocorrelation sum.
double ess_bulk(const std::vector<std::vector<double>>& chains);

// Shortest contiguous interval containing ceil(prob * n) sorted draws.
std::pair<double, double> hdi(std::vector<double> draws, double prob);

struct ParamSummary {
    std::string name;
    double mean = 0.0;
    double hdi_lo = 0.0;
    double hdi_hi = 0.0;
    double rhat = 1.0;
    double ess = 0.0;
};

struct FitDiagnostics {
    double max_rhat = 0.0;
    double min_ess = 0.0;
    bool warn = false;  // max rhat > 1.05 or min ess < 100
    std::string worst;  // offender description, e.g. "sigma[language] (rhat=1.14)"
};

// Constrained-scale posterior summaries with per-parameter diagnostics.
std::vector<ParamSummary> summarize(const PosteriorDraws& draws, double hdi_prob = 0.9);
FitDiagnostics assess(const std::vector<ParamSummary>& summaries);

std::vector<double> rhat_all(const PosteriorDraws& draws);
std::vector<double> ess_bulk_all(const PosteriorDraws& draws);

}  // namespace disparity
