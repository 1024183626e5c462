#pragma once

#include <optional>
#include <string>
#include <vector>

#include "disparity/linalg.hpp"

#include "disparity/common.hpp"

namespace disparity {

struct FriedmanResult {
    int k = 0;   // items (languages)
    int m = 0;   // judges (models)
    double chi2 = 0.0;
    double p = 1.0;
    double w = 0.0;  // Kendall's W = chi2 / (m (k-1))
};

// Mid-ranks of x (ties get the average of the positions they span).
std::vector<double> midranks(const std::vector<double>& x);

// Drops the columns that contain a missing value; the Friedman input must
// be balanced.
Matrix balance_dropna(const std::vector<std::vector<std::optional<double>>>& rows);

// scores: m x k matrix, judges as rows. Requires m >= 2, k >= 2.
FriedmanResult friedman(const Matrix& scores);

double kendall_w(double chi2, int m, int k);

// Returns (H, p) with the standard tie correction; all-tie input yields
// (0, 1) so downstream tables stay total.
std::pair<double, double> kruskal_wallis(const std::vector<std::vector<double>>& groups);

struct PairwiseMatrix {
    std::vector<std::string> labels;
    Matrix z;      // antisymmetric
    Matrix p_raw;  // symmetric, diagonal unused
    Matrix p_adj;  // BH-adjusted over the unordered pairs
    double alpha = 0.05;
};

PairwiseMatrix dunn_posthoc(const std::vector<std::string>& labels,
                            const std::vector<std::vector<double>>& groups,
                            double alpha = 0.05);

// Benjamini-Hochberg step-up adjustment; output in the input order.
std::vector<double> bh_fdr(const std::vector<double>& pvals);

// Significance stars: *** p<.001, ** p<.01, * p<.05, ns otherwise.
std::string sig_stars(double p);

// p-value rendering for reports; below 1e-4 prints as "<1e-4".
std::string fmt_pvalue(double p);

}  // namespace disparity
