#include "disparity/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "disparity/common.hpp"
#include "disparity/csv.hpp"
#include "disparity/npstats.hpp"
#include "disparity/parallel.hpp"
#include "disparity/special.hpp"

namespace disparity {

namespace {

// Split every chain in half; returns 2C sequences of equal length.
std::vector<std::vector<double>> split_chains(const std::vector<std::vector<double>>& chains) {
    std::size_t n = std::numeric_limits<std::size_t>::max();
    for (const auto& c : chains) n = std::min(n, c.size());
    const std::size_t half = n / 2;
    std::vector<std::vector<double>> out;
    for (const auto& c : chains) {
        out.emplace_back(c.begin(), c.begin() + static_cast<long>(half));
        out.emplace_back(c.end() - static_cast<long>(half), c.end());
    }
    return out;
}

// Pooled mid-ranks mapped through the normal quantile function.
std::vector<std::vector<double>> rank_normalize(const std::vector<std::vector<double>>& chains) {
    std::vector<double> pooled;
    for (const auto& c : chains) pooled.insert(pooled.end(), c.begin(), c.end());
    const auto ranks = midranks(pooled);
    const double S = static_cast<double>(pooled.size());
    std::vector<std::vector<double>> out(chains.size());
    std::size_t off = 0;
    for (std::size_t c = 0; c < chains.size(); ++c) {
        out[c].resize(chains[c].size());
        for (std::size_t i = 0; i < chains[c].size(); ++i) {
            out[c][i] = inv_norm_cdf((ranks[off + i] - 0.375) / (S + 0.25));
        }
        off += chains[c].size();
    }
    return out;
}

struct Moments {
    double W = 0.0;         // mean within-chain variance (ddof = 1)
    double var_plus = 0.0;  // marginal posterior variance estimate
    double B_over_n = 0.0;  // variance of chain means
};

Moments chain_moments(const std::vector<std::vector<double>>& chains) {
    const std::size_t m = chains.size();
    const double n = static_cast<double>(chains.front().size());
    std::vector<double> means(m, 0.0), vars(m, 0.0);
    for (std::size_t c = 0; c < m; ++c) {
        double s = 0.0;
        for (double v : chains[c]) s += v;
        means[c] = s / n;
        double ss = 0.0;
        for (double v : chains[c]) ss += (v - means[c]) * (v - means[c]);
        vars[c] = n > 1 ? ss / (n - 1.0) : 0.0;
    }
    Moments mo;
    for (double v : vars) mo.W += v;
    mo.W /= static_cast<double>(m);
    double gm = 0.0;
    for (double v : means) gm += v;
    gm /= static_cast<double>(m);
    double bb = 0.0;
    for (double v : means) bb += (v - gm) * (v - gm);
    mo.B_over_n = m > 1 ? bb / static_cast<double>(m - 1) : 0.0;
    mo.var_plus = (n - 1.0) / n * mo.W + mo.B_over_n;
    return mo;
}

bool all_equal(const std::vector<std::vector<double>>& chains) {
    const double v0 = chains.front().front();
    for (const auto& c : chains) {
        for (double v : c) {
            if (v != v0) return false;
        }
    }
    return true;
}

}  // namespace

double rhat_rank_normalized(const std::vector<std::vector<double>>& chains) {
    if (chains.size() < 2) throw ValidationError("rhat: need at least 2 chains");
    for (const auto& c : chains) {
        if (c.size() < 4) throw ValidationError("rhat: need at least 4 draws per chain");
    }
    if (all_equal(chains)) return 1.0;
    const auto z = rank_normalize(split_chains(chains));
    const auto mo = chain_moments(z);
    if (!(mo.W > 0.0)) return std::numeric_limits<double>::infinity();
    return std::sqrt(mo.var_plus / mo.W);
}

double ess_bulk(const std::vector<std::vector<double>>& chains) {
    if (chains.empty()) throw ValidationError("ess_bulk: no chains");
    for (const auto& c : chains) {
        if (c.size() < 4) throw ValidationError("ess_bulk: need at least 4 draws per chain");
    }
    if (all_equal(chains)) return 1.0;

    const auto z = rank_normalize(split_chains(chains));
    const std::size_t m = z.size();
    const std::size_t n = z.front().size();
    const auto mo = chain_moments(z);
    if (!(mo.var_plus > 0.0)) return 1.0;

    std::vector<double> means(m);
    for (std::size_t c = 0; c < m; ++c) {
        double s = 0.0;
        for (double v : z[c]) s += v;
        means[c] = s / static_cast<double>(n);
    }
    // Autocovariance at lag t averaged over chains (biased 1/n denominator),
    // evaluated lazily so well-mixed chains stop after a few lags.
    auto mean_acov = [&](std::size_t t) {
        double acc = 0.0;
        for (std::size_t c = 0; c < m; ++c) {
            double s = 0.0;
            for (std::size_t i = 0; i + t < n; ++i) {
                s += (z[c][i] - means[c]) * (z[c][i + t] - means[c]);
            }
            acc += s / static_cast<double>(n);
        }
        return acc / static_cast<double>(m);
    };

    auto rho = [&](std::size_t t) { return 1.0 - (mo.W - mean_acov(t)) / mo.var_plus; };

    double tau = 0.0;
    double prev_pair = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; 2 * k + 1 < n; ++k) {
        double pair = rho(2 * k) + rho(2 * k + 1);
        if (pair < 0.0) break;
        pair = std::min(pair, prev_pair);  // enforce monotone non-increase
        prev_pair = pair;
        tau += pair;
    }
    tau = std::max(2.0 * tau - 1.0, 1e-8);
    return static_cast<double>(m * n) / tau;
}

std::pair<double, double> hdi(std::vector<double> draws, double prob) {
    if (!(prob > 0.0 && prob < 1.0)) throw ValidationError("hdi: prob must be in (0,1)");
    if (draws.size() < 10) throw ValidationError("hdi: need at least 10 draws");
    std::sort(draws.begin(), draws.end());
    const std::size_t n = draws.size();
    std::size_t window = static_cast<std::size_t>(
        std::ceil(prob * static_cast<double>(n)));
    window = std::min(std::max<std::size_t>(window, 1), n);
    double best_width = std::numeric_limits<double>::infinity();
    std::size_t best = 0;
    for (std::size_t i = 0; i + window <= n; ++i) {
        const double w = draws[i + window - 1] - draws[i];
        if (w < best_width) {
            best_width = w;
            best = i;
        }
    }
    return {draws[best], draws[best + window - 1]};
}

namespace {

std::vector<std::vector<double>> param_chains(const PosteriorDraws& d, std::size_t k) {
    std::vector<std::vector<double>> chains(d.n_chains);
    for (std::size_t c = 0; c < d.n_chains; ++c) {
        chains[c].resize(d.n_draws);
        for (std::size_t i = 0; i < d.n_draws; ++i) chains[c][i] = d.constrained(c, i, k);
    }
    return chains;
}

}  // namespace

std::vector<double> rhat_all(const PosteriorDraws& draws) {
    std::vector<double> out(draws.dim, 1.0);
    par::for_each_index(draws.dim, [&](std::size_t k) {
        out[k] = rhat_rank_normalized(param_chains(draws, k));
    });
    return out;
}

std::vector<double> ess_bulk_all(const PosteriorDraws& draws) {
    std::vector<double> out(draws.dim, 0.0);
    par::for_each_index(draws.dim, [&](std::size_t k) {
        out[k] = ess_bulk(param_chains(draws, k));
    });
    return out;
}

std::vector<ParamSummary> summarize(const PosteriorDraws& draws, double hdi_prob) {
    std::vector<ParamSummary> out(draws.dim);
    const bool multi_chain = draws.n_chains >= 2;
    par::for_each_index(draws.dim, [&](std::size_t k) {
        ParamSummary& s = out[k];
        s.name = draws.names[k];
        auto pooled = draws.constrained_param(k);
        s.mean = std::accumulate(pooled.begin(), pooled.end(), 0.0) /
                 static_cast<double>(pooled.size());
        const auto [lo, hi] = hdi(pooled, hdi_prob);
        s.hdi_lo = lo;
        s.hdi_hi = hi;
        const auto chains = param_chains(draws, k);
        s.ess = ess_bulk(chains);
        s.rhat = multi_chain ? rhat_rank_normalized(chains) : 1.0;
    });
    return out;
}

FitDiagnostics assess(const std::vector<ParamSummary>& summaries) {
    FitDiagnostics d;
    d.max_rhat = 0.0;
    d.min_ess = std::numeric_limits<double>::infinity();
    std::string worst_rhat_name, worst_ess_name;
    for (const auto& s : summaries) {
        const double r = std::isfinite(s.rhat) ? s.rhat : std::numeric_limits<double>::max();
        if (r > d.max_rhat) {
            d.max_rhat = r;
            worst_rhat_name = s.name;
        }
        if (s.ess < d.min_ess) {
            d.min_ess = s.ess;
            worst_ess_name = s.name;
        }
    }
    const bool rhat_bad = d.max_rhat > 1.05;
    const bool ess_bad = d.min_ess < 100.0;
    d.warn = rhat_bad || ess_bad;
    if (rhat_bad) {
        d.worst = worst_rhat_name + " (rhat=" + fmt_double(d.max_rhat, 4) + ")";
    } else if (ess_bad) {
        d.worst = worst_ess_name + " (ess=" + fmt_double(d.min_ess, 4) + ")";
    }
    return d;
}

}  // namespace disparity
