// Brute-force oracles kept independent of the library implementations:
// ranks by pair counting, statistics straight from their defining formulas,
// densities as explicit per-term sums, gradients by finite differences.
#pragma once

#include <cmath>
#include <map>
#include <span>
#include <vector>

#include "disparity/modelspec.hpp"
#include "disparity/posterior.hpp"
#include "disparity/special.hpp"

namespace oracle {

// rank_i = 1 + #{j : x_j < x_i} + 0.5 #{j != i : x_j == x_i}
inline std::vector<double> count_ranks(const std::vector<double>& x) {
    std::vector<double> r(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        double less = 0.0, equal = 0.0;
        for (std::size_t j = 0; j < x.size(); ++j) {
            if (j == i) continue;
            if (x[j] < x[i]) less += 1.0;
            if (x[j] == x[i]) equal += 1.0;
        }
        r[i] = 1.0 + less + 0.5 * equal;
    }
    return r;
}

struct FriedmanOracle {
    double chi2, w, p;
};

inline FriedmanOracle friedman(const std::vector<std::vector<double>>& rows) {
    const std::size_t m = rows.size();
    const std::size_t k = rows.front().size();
    std::vector<double> colsum(k, 0.0);
    for (const auto& row : rows) {
        const auto r = count_ranks(row);
        for (std::size_t j = 0; j < k; ++j) colsum[j] += r[j];
    }
    double ss = 0.0;
    for (double s : colsum) ss += s * s;
    const double md = static_cast<double>(m), kd = static_cast<double>(k);
    double chi2 = 12.0 / (md * kd * (kd + 1.0)) * ss - 3.0 * md * (kd + 1.0);
    if (chi2 < 0.0) chi2 = 0.0;
    FriedmanOracle o;
    o.chi2 = chi2;
    o.w = chi2 / (md * (kd - 1.0));
    o.p = disparity::chi2_sf(chi2, static_cast<int>(k) - 1);
    return o;
}

inline double tie_correction_sum(const std::vector<double>& pooled) {
    std::map<double, double> counts;
    for (double v : pooled) counts[v] += 1.0;
    double s = 0.0;
    for (const auto& [v, t] : counts) s += t * t * t - t;
    return s;
}

inline std::pair<double, double> kruskal_wallis(
    const std::vector<std::vector<double>>& groups) {
    std::vector<double> pooled;
    for (const auto& g : groups) pooled.insert(pooled.end(), g.begin(), g.end());
    const auto ranks = count_ranks(pooled);
    const double N = static_cast<double>(pooled.size());
    double h = 0.0;
    std::size_t off = 0;
    for (const auto& g : groups) {
        double rs = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) rs += ranks[off + i];
        off += g.size();
        h += rs * rs / static_cast<double>(g.size());
    }
    h = 12.0 / (N * (N + 1.0)) * h - 3.0 * (N + 1.0);
    const double denom = 1.0 - tie_correction_sum(pooled) / (N * N * N - N);
    if (denom <= 0.0) return {0.0, 1.0};
    h /= denom;
    if (h < 0.0) h = 0.0;
    return {h, disparity::chi2_sf(h, static_cast<int>(groups.size()) - 1)};
}

struct DunnOracle {
    std::vector<std::vector<double>> z;      // [i][j]
    std::vector<std::vector<double>> p_raw;  // two-sided
};

inline DunnOracle dunn(const std::vector<std::vector<double>>& groups) {
    std::vector<double> pooled;
    for (const auto& g : groups) pooled.insert(pooled.end(), g.begin(), g.end());
    const auto ranks = count_ranks(pooled);
    const double N = static_cast<double>(pooled.size());
    const std::size_t g = groups.size();
    std::vector<double> mean_rank(g, 0.0), sizes(g, 0.0);
    std::size_t off = 0;
    for (std::size_t i = 0; i < g; ++i) {
        double rs = 0.0;
        for (std::size_t t = 0; t < groups[i].size(); ++t) rs += ranks[off + t];
        off += groups[i].size();
        sizes[i] = static_cast<double>(groups[i].size());
        mean_rank[i] = rs / sizes[i];
    }
    const double var_base =
        N * (N + 1.0) / 12.0 - tie_correction_sum(pooled) / (12.0 * (N - 1.0));
    DunnOracle o;
    o.z.assign(g, std::vector<double>(g, 0.0));
    o.p_raw.assign(g, std::vector<double>(g, 1.0));
    for (std::size_t i = 0; i < g; ++i) {
        for (std::size_t j = 0; j < g; ++j) {
            if (i == j) continue;
            double z = 0.0;
            if (var_base > 0.0) {
                z = (mean_rank[i] - mean_rank[j]) /
                    std::sqrt(var_base * (1.0 / sizes[i] + 1.0 / sizes[j]));
            }
            o.z[i][j] = z;
            o.p_raw[i][j] = std::min(1.0, 2.0 * disparity::norm_sf(std::fabs(z)));
        }
    }
    return o;
}

// Sorted-form Gini, a different algebraic route than the double sum.
inline double gini_sorted(std::vector<double> xs) {
    std::sort(xs.begin(), xs.end());
    const double n = static_cast<double>(xs.size());
    double total = 0.0, weighted = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        total += xs[i];
        weighted += static_cast<double>(i + 1) * xs[i];
    }
    return 2.0 * weighted / (n * total) - (n + 1.0) / n;
}

// Direct evaluation of the hierarchical log density as one explicit sum.
inline double direct_log_density(const disparity::DesignMatrices& d,
                                 const disparity::PriorSpec& priors,
                                 const disparity::ParamLayout& layout,
                                 std::span<const double> theta) {
    const double log2pi = std::log(2.0 * M_PI);
    const double sigma = std::exp(theta[layout.log_sigma_resid]);
    double lp = 0.0;
    for (std::size_t i = 0; i < d.n; ++i) {
        double eta = 0.0;
        for (std::size_t k = 0; k < d.p; ++k) eta += theta[k] * d.x(i, k);
        for (std::size_t t = 0; t < d.terms.size(); ++t) {
            const auto& td = d.terms[t];
            const auto& ts = layout.terms[t];
            const double st = std::exp(theta[ts.log_sigma]);
            const double c = td.has_slope ? td.slope[i] : 1.0;
            eta += st * theta[ts.eta0 + static_cast<std::size_t>(td.group[i])] * c;
        }
        const double r = d.y[i] - eta;
        lp += -0.5 * log2pi - std::log(sigma) - 0.5 * r * r / (sigma * sigma);
    }
    if (priors.flat) return lp;
    for (std::size_t t = 0; t < d.terms.size(); ++t) {
        const auto& ts = layout.terms[t];
        for (std::size_t j = 0; j < ts.n_eta; ++j) {
            const double z = theta[ts.eta0 + j];
            lp += -0.5 * log2pi - 0.5 * z * z;
        }
        const double st = std::exp(theta[ts.log_sigma]);
        const double ss = priors.sigma_scale[t];
        lp += std::log(2.0) - std::log(ss) - 0.5 * log2pi - 0.5 * st * st / (ss * ss);
        lp += theta[ts.log_sigma];
    }
    for (std::size_t k = 0; k < d.p; ++k) {
        const double dev = theta[k] - priors.beta_center[k];
        const double s = priors.beta_scale[k];
        lp += -0.5 * log2pi - std::log(s) - 0.5 * dev * dev / (s * s);
    }
    const double nu = priors.resid_nu;
    const double sc = priors.resid_scale;
    lp += std::log(2.0) + std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
          0.5 * std::log(nu * M_PI) - std::log(sc) -
          0.5 * (nu + 1.0) * std::log1p(sigma * sigma / (nu * sc * sc));
    lp += theta[layout.log_sigma_resid];
    return lp;
}

// Central finite differences of a log density functional.
template <class F>
std::vector<double> fd_gradient(F&& logp, std::vector<double> theta, double h = 1e-5) {
    std::vector<double> g(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double orig = theta[i];
        theta[i] = orig + h;
        const double up = logp(theta);
        theta[i] = orig - h;
        const double dn = logp(theta);
        theta[i] = orig;
        g[i] = (up - dn) / (2.0 * h);
    }
    return g;
}

}  // namespace oracle
