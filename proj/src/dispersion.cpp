#include "disparity/dispersion.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "disparity/common.hpp"

namespace disparity {

double gini(const std::vector<double>& xs) {
    const std::size_t n = xs.size();
    if (n < 1) throw ValidationError("gini: empty input");
    const double mu = mean_of(xs);
    if (!(mu > 0.0)) throw ValidationError("gini: mean must be positive");
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) s += std::fabs(xs[i] - xs[j]);
    }
    return s / (2.0 * static_cast<double>(n) * static_cast<double>(n) * mu);
}

double sen_welfare(double mu, double g) {
    if (!(g >= 0.0 && g <= 1.0)) throw ValidationError("sen_welfare: gini outside [0,1]");
    return mu * (1.0 - g);
}

SpreadStats spread_stats(const std::vector<double>& xs) {
    if (xs.size() < 2) throw ValidationError("spread_stats: need at least 2 values");
    const double mu = mean_of(xs);
    if (!(mu > 0.0)) throw ValidationError("spread_stats: mean must be positive");
    const double sd = sample_sd(xs);
    SpreadStats s;
    if (!(sd > 0.0)) {
        s.degenerate = true;
        return s;
    }
    const auto [mn, mx] = std::minmax_element(xs.begin(), xs.end());
    s.cv = sd / mu;
    s.gap_rel = (*mx - *mn) / mu;
    s.gap_z = (*mx - *mn) / sd;
    return s;
}

DisparityTable model_bucket_table(const FitFrame& frame) {
    if (frame.n() == 0) throw ValidationError("model_bucket_table: empty frame");

    // (model, benchmark) -> per-language scores
    std::map<std::pair<std::string, std::string>, std::vector<double>> cells;
    for (std::size_t i = 0; i < frame.n(); ++i) {
        cells[{frame.model[i], frame.benchmark[i]}].push_back(frame.score[i]);
    }

    struct Acc {
        double mu = 0, g = 0, sen = 0, cv = 0, gr = 0, gz = 0;
        int n = 0;
    };
    std::map<std::string, Acc> per_model;
    DisparityTable out;

    for (const auto& [key, scores] : cells) {
        if (scores.size() < 2) {
            out.warnings.push_back("skipped cell (" + key.first + ", " + key.second +
                                   "): fewer than 2 languages");
            continue;
        }
        const double mu = mean_of(scores);
        if (!(mu > 0.0)) {
            out.warnings.push_back("skipped cell (" + key.first + ", " + key.second +
                                   "): non-positive mean");
            continue;
        }
        const double g = gini(scores);
        const auto sp = spread_stats(scores);
        Acc& a = per_model[key.first];
        a.mu += mu;
        a.g += g;
        a.sen += sen_welfare(mu, g);
        a.cv += sp.cv;
        a.gr += sp.gap_rel;
        a.gz += sp.gap_z;
        a.n += 1;
    }

    for (const auto& [model, a] : per_model) {
        DisparityRow r;
        r.model = model;
        r.bucket = frame.bucket;
        const double n = static_cast<double>(a.n);
        r.mu = a.mu / n;
        r.gini = a.g / n;
        r.sen = a.sen / n;
        r.cv = a.cv / n;
        r.gap_rel = a.gr / n;
        r.gap_z = a.gz / n;
        r.cells = a.n;
        out.rows.push_back(r);
    }
    return out;
}

TierMeans tier_means(const FitFrame& frame, const std::map<std::string, int>& tiers) {
    TierMeans tm;
    std::array<double, 5> pooled_sum{};
    std::map<std::string, std::array<double, 5>> model_sum;

    for (std::size_t i = 0; i < frame.n(); ++i) {
        auto it = tiers.find(frame.language[i]);
        if (it == tiers.end()) {
            throw ValidationError("tier_means: language '" + frame.language[i] +
                                  "' has no tier mapping");
        }
        const int t = it->second;
        if (t < 1 || t > 5) throw ValidationError("tier_means: tier outside 1-5");
        const std::size_t k = static_cast<std::size_t>(t - 1);
        pooled_sum[k] += frame.score[i];
        tm.pooled[k].count += 1;
        auto& ms = model_sum[frame.model[i]];
        ms[k] += frame.score[i];
        tm.per_model[frame.model[i]][k].count += 1;
    }
    for (std::size_t k = 0; k < 5; ++k) {
        if (tm.pooled[k].count > 0) {
            tm.pooled[k].mean = pooled_sum[k] / static_cast<double>(tm.pooled[k].count);
        }
    }
    for (auto& [model, cells] : tm.per_model) {
        for (std::size_t k = 0; k < 5; ++k) {
            if (cells[k].count > 0) {
                cells[k].mean = model_sum[model][k] / static_cast<double>(cells[k].count);
            }
        }
    }
    return tm;
}

}  // namespace disparity
