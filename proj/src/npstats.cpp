#include "disparity/npstats.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "disparity/common.hpp"
#include "disparity/csv.hpp"
#include "disparity/special.hpp"

namespace disparity {

std::vector<double> midranks(const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
        const double r = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j + 1));
        for (std::size_t t = i; t <= j; ++t) ranks[idx[t]] = r;
        i = j + 1;
    }
    return ranks;
}

namespace {

// Sum of (t^3 - t) over runs of tied values.
double tie_term(std::vector<double> vals) {
    std::sort(vals.begin(), vals.end());
    double total = 0.0;
    std::size_t i = 0;
    while (i < vals.size()) {
        std::size_t j = i;
        while (j + 1 < vals.size() && vals[j + 1] == vals[i]) ++j;
        const double t = static_cast<double>(j - i + 1);
        total += t * t * t - t;
        i = j + 1;
    }
    return total;
}

}  // namespace

Matrix balance_dropna(const std::vector<std::vector<std::optional<double>>>& rows) {
    if (rows.empty()) throw ValidationError("friedman: no judges");
    const std::size_t k_all = rows.front().size();
    for (const auto& r : rows) {
        if (r.size() != k_all) throw ValidationError("friedman: ragged input");
    }
    std::vector<std::size_t> keep;
    for (std::size_t j = 0; j < k_all; ++j) {
        bool complete = true;
        for (const auto& r : rows) {
            if (!r[j].has_value()) {
                complete = false;
                break;
            }
        }
        if (complete) keep.push_back(j);
    }
    Matrix out(rows.size(), keep.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < keep.size(); ++j) out(i, j) = *rows[i][keep[j]];
    }
    return out;
}

FriedmanResult friedman(const Matrix& scores) {
    const int m = static_cast<int>(scores.rows);
    const int k = static_cast<int>(scores.cols);
    if (m < 2) throw ValidationError("friedman: need at least 2 judges");
    if (k < 2) throw ValidationError("friedman: need at least 2 items after dropna");

    std::vector<double> colsum(static_cast<std::size_t>(k), 0.0);
    std::vector<double> row(static_cast<std::size_t>(k));
    for (int i = 0; i < m; ++i) {
        for (int j = 0; j < k; ++j) row[static_cast<std::size_t>(j)] = scores(i, j);
        const auto r = midranks(row);
        for (int j = 0; j < k; ++j) colsum[static_cast<std::size_t>(j)] += r[j];
    }
    double ss = 0.0;
    for (double s : colsum) ss += s * s;

    const double md = m, kd = k;
    double chi2 = 12.0 / (md * kd * (kd + 1.0)) * ss - 3.0 * md * (kd + 1.0);
    if (chi2 < 0.0) chi2 = 0.0;  // float noise on total ties

    FriedmanResult res;
    res.k = k;
    res.m = m;
    res.chi2 = chi2;
    res.w = kendall_w(chi2, m, k);
    res.p = chi2_sf(chi2, k - 1);
    return res;
}

double kendall_w(double chi2, int m, int k) {
    if (m < 2 || k < 2) throw ValidationError("kendall_w: need m >= 2 and k >= 2");
    if (chi2 < 0.0) throw ValidationError("kendall_w: chi2 must be non-negative");
    double w = chi2 / (static_cast<double>(m) * (static_cast<double>(k) - 1.0));
    if (w > 1.0) w = 1.0;  // only reachable through inconsistent inputs
    return w;
}

std::pair<double, double> kruskal_wallis(const std::vector<std::vector<double>>& groups) {
    if (groups.size() < 2) throw ValidationError("kruskal_wallis: need at least 2 groups");
    std::vector<double> pooled;
    for (const auto& g : groups) {
        if (g.empty()) throw ValidationError("kruskal_wallis: empty group");
        pooled.insert(pooled.end(), g.begin(), g.end());
    }
    const double N = static_cast<double>(pooled.size());
    const auto ranks = midranks(pooled);

    double h = 0.0;
    std::size_t off = 0;
    for (const auto& g : groups) {
        double rs = 0.0;
        for (std::size_t i = 0; i < g.size(); ++i) rs += ranks[off + i];
        h += rs * rs / static_cast<double>(g.size());
        off += g.size();
    }
    h = 12.0 / (N * (N + 1.0)) * h - 3.0 * (N + 1.0);

    const double ties = tie_term(pooled);
    const double denom = 1.0 - ties / (N * N * N - N);
    if (denom <= 0.0) return {0.0, 1.0};  // every observation tied
    h /= denom;
    if (h < 0.0) h = 0.0;
    const double p = chi2_sf(h, static_cast<int>(groups.size()) - 1);
    return {h, p};
}

PairwiseMatrix dunn_posthoc(const std::vector<std::string>& labels,
                            const std::vector<std::vector<double>>& groups, double alpha) {
    const std::size_t g = groups.size();
    if (g < 2) throw ValidationError("dunn_posthoc: need at least 2 groups");
    if (labels.size() != g) throw ValidationError("dunn_posthoc: label/group count mismatch");

    std::vector<double> pooled;
    for (const auto& grp : groups) {
        if (grp.empty()) throw ValidationError("dunn_posthoc: empty group");
        pooled.insert(pooled.end(), grp.begin(), grp.end());
    }
    const double N = static_cast<double>(pooled.size());
    const auto ranks = midranks(pooled);

    std::vector<double> mean_rank(g, 0.0);
    std::vector<double> sizes(g, 0.0);
    std::size_t off = 0;
    for (std::size_t i = 0; i < g; ++i) {
        double rs = 0.0;
        for (std::size_t t = 0; t < groups[i].size(); ++t) rs += ranks[off + t];
        off += groups[i].size();
        sizes[i] = static_cast<double>(groups[i].size());
        mean_rank[i] = rs / sizes[i];
    }

    const double ties = tie_term(pooled);
    const double var_base = N * (N + 1.0) / 12.0 - ties / (12.0 * (N - 1.0));

    PairwiseMatrix out;
    out.labels = labels;
    out.alpha = alpha;
    out.z = Matrix(g, g, 0.0);
    out.p_raw = Matrix(g, g, 1.0);
    out.p_adj = Matrix(g, g, 1.0);

    std::vector<double> raw_pairs;
    for (std::size_t i = 0; i < g; ++i) {
        for (std::size_t j = i + 1; j < g; ++j) {
            double z = 0.0;
            if (var_base > 0.0) {
                const double se = std::sqrt(var_base * (1.0 / sizes[i] + 1.0 / sizes[j]));
                z = (mean_rank[i] - mean_rank[j]) / se;
            }
            const double p = std::min(1.0, 2.0 * norm_sf(std::fabs(z)));
            out.z(i, j) = z;
            out.z(j, i) = -z;
            out.p_raw(i, j) = out.p_raw(j, i) = p;
            raw_pairs.push_back(p);
        }
    }
    const auto adj = bh_fdr(raw_pairs);
    std::size_t idx = 0;
    for (std::size_t i = 0; i < g; ++i) {
        for (std::size_t j = i + 1; j < g; ++j) {
            out.p_adj(i, j) = out.p_adj(j, i) = adj[idx++];
        }
    }
    return out;
}

std::vector<double> bh_fdr(const std::vector<double>& pvals) {
    const std::size_t m = pvals.size();
    for (double p : pvals) {
        if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("bh_fdr: p-value outside [0,1]");
    }
    std::vector<std::size_t> idx(m);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return pvals[a] < pvals[b]; });
    std::vector<double> adj(m, 0.0);
    double running_min = 1.0;
    for (std::size_t r = m; r-- > 0;) {
        const double v = pvals[idx[r]] * static_cast<double>(m) / static_cast<double>(r + 1);
        running_min = std::min(running_min, std::min(v, 1.0));
        adj[idx[r]] = running_min;
    }
    return adj;
}

std::string sig_stars(double p) {
    if (p < 0.001) return "***";
    if (p < 0.01) return "**";
    if (p < 0.05) return "*";
    return "ns";
}

std::string fmt_pvalue(double p) {
    if (p < 1e-4) return "<1e-4";
    return fmt_double(p, 4);
}

}  // namespace disparity
