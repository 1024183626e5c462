#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "disparity/diagnostics.hpp"
#include "disparity/modelspec.hpp"
#include "disparity/nuts.hpp"

namespace disparity {

// The three nested model stages; stage strings are "1", "2", "3", "3-logit".
struct StageFormulas {
    std::string stage1;
    std::string stage2;
    std::string stage3;

    static StageFormulas defaults();
    const std::string& get(int stage) const;
};

struct FitResult {
    std::string stage;
    std::string bucket;
    std::string formula;  // canonical printed form
    CheckedSpec checked;
    DesignMatrices design;
    PosteriorDraws draws;
    std::vector<ParamSummary> summaries;
    FitDiagnostics diag;
    NutsConfig config_used;

    int param_index(const std::string& name) const { return draws.index_of(name); }
    // Index of "sigma[<term>]"; -1 if the fit has no such random term.
    int sigma_index(const std::string& term_name) const {
        return draws.index_of("sigma[" + term_name + "]");
    }
};

FitResult fit_stage(const FitFrame& frame, const std::string& stage,
                    const StageFormulas& formulas, const NutsConfig& config,
                    double logit_eps = 1e-3);

// R^2_ling = 1 - (sigma_alpha^lang / sigma_alpha)^2 per paired draw. The two
// fits are independent, so pairs come from a seeded shuffle of the second
// fit's draws; zero-sigma pairs are skipped and counted.
struct R2Result {
    double mean = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    std::size_t pairs = 0;
    std::size_t skipped = 0;
};

R2Result r2_ling_from_draws(std::vector<double> sigma_stage1, std::vector<double> sigma_stage2,
                            std::uint64_t seed);
R2Result r2_ling(const FitResult& stage1, const FitResult& stage2, std::uint64_t seed);

struct VarianceShare {
    std::string component;  // "model", "task:model", ..., "residual"
    double share_mean = 0.0;
    double share_lo = 0.0;
    double share_hi = 0.0;
    double sd_mean = 0.0;
};

// Per posterior draw, share_c = sigma_c^2 / sum_c sigma_c^2 over every
// random term plus the residual; shares sum to one draw by draw.
std::vector<VarianceShare> variance_shares(const FitResult& fit);

struct CoefRow {
    std::string name;
    double mean = 0.0;
    double lo = 0.0;
    double hi = 0.0;
    std::string marker;  // "*" HDI excludes 0; "†" boundary within 10% of width
};

std::vector<CoefRow> coefficient_table(const FitResult& fit);

struct LanguagePotentialRow {
    std::string language;
    double mean = 0.0;
    double lo = 0.0;
    double hi = 0.0;
};

// LP_l = intercept + language-feature terms + script/family contrasts +
// language random intercept, summarized per draw. Sorted by posterior mean,
// descending.
std::vector<LanguagePotentialRow> language_potential(const FitResult& fit,
                                                     const FitFrame& frame);

enum class LdsMode { posterior_mean, per_draw };

struct SliceMetrics {
    std::string level;      // "bucket" | "model" | "model_benchmark"
    std::string model;      // empty at bucket level
    std::string benchmark;  // empty unless model_benchmark
    std::size_t n = 0;
    double mean_y = 0.0;
    double var_y = 0.0;
    double lds_raw = 0.0;
    double lds_clipped = 0.0;
    double mavs_raw = 0.0;
    bool floor_cell = false;  // within-slice score SD < 0.01
    double pps5 = 0.0;
    double pps_w = 0.0;
};

std::vector<SliceMetrics> pps_lds_mavs(const FitResult& fit, const FitFrame& frame,
                                       LdsMode mode = LdsMode::posterior_mean);

// Low-level pieces, exposed for direct checks.
std::pair<double, double> pps(double mean_y, double var_y, double lds_clipped);
double variance_ratio(const std::vector<double>& predictor, const std::vector<double>& y);

double logit_clipped(double score, double eps = 1e-3);
FitFrame logit_frame(FitFrame frame, double eps = 1e-3);  // adds "score_logit"

struct SignComparisonRow {
    std::string name;
    double raw_mean = 0.0;
    double logit_mean = 0.0;
    std::string raw_marker;
    std::string logit_marker;
    bool sign_preserved = false;
};

std::vector<SignComparisonRow> logit_sign_report(const FitResult& raw_fit,
                                                 const FitResult& logit_fit);

// Draw archive: manifest.json plus one raw little-endian f64 matrix per chain.
void save_fit(const FitResult& fit, const std::string& dir);
FitResult load_fit(const std::string& dir, const FitFrame& frame);

}  // namespace disparity
