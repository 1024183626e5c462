#include "disparity/gbt.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

#include "disparity/common.hpp"
#include "disparity/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace disparity {

namespace {
constexpr double kMinGain = 1e-12;
}

void GbtConfig::check() const {
    if (trees < 1) throw ValidationError("gbt config: trees must be >= 1");
    if (depth < 1) throw ValidationError("gbt config: depth must be >= 1");
    if (!(learning_rate > 0.0 && learning_rate <= 1.0)) {
        throw ValidationError("gbt config: learning_rate must be in (0,1]");
    }
    if (seeds < 1) throw ValidationError("gbt config: seeds must be >= 1");
    if (min_samples_leaf < 1) throw ValidationError("gbt config: min_samples_leaf must be >= 1");
}

EncodedFrame gbt_encode(const FitFrame& frame) {
    if (frame.n() == 0) throw ValidationError("gbt_encode: empty frame");
    EncodedFrame e;
    e.n = frame.n();
    e.y = frame.score;
    e.benchmark = frame.benchmark;
    e.language = frame.language;
    e.model = frame.model;
    e.tier = frame.resource_class;

    std::vector<std::pair<std::string, const std::vector<double>*>> continuous = {
        {"resource_class", &frame.resource_class_z}, {"syn_dist_en", &frame.syn_dist_en_z},
        {"phon_dist_en", &frame.phon_dist_en_z},     {"geo_dist_en", &frame.geo_dist_en_z},
        {"fertility", &frame.fertility_z},           {"repr_sim_en", &frame.repr_sim_en_z}};
    std::vector<std::pair<std::string, const std::vector<std::string>*>> categorical = {
        {"model", &frame.model},
        {"language", &frame.language},
        {"task", &frame.task},
        {"script", &frame.script},
        {"family", &frame.family}};

    std::vector<std::vector<double>> cols;
    for (const auto& [parent, col] : continuous) {
        e.col_names.push_back(parent + "_z");
        e.parents.push_back(parent);
        cols.push_back(*col);
    }
    for (const auto& [parent, col] : categorical) {
        std::set<std::string> levels(col->begin(), col->end());
        for (const auto& lvl : levels) {
            e.col_names.push_back(parent + "=" + lvl);
            e.parents.push_back(parent);
            std::vector<double> ind(e.n, 0.0);
            for (std::size_t i = 0; i < e.n; ++i) {
                if ((*col)[i] == lvl) ind[i] = 1.0;
            }
            cols.push_back(std::move(ind));
        }
    }
    e.d = cols.size();
    e.X.resize(e.d * e.n);
    for (std::size_t c = 0; c < e.d; ++c) {
        std::copy(cols[c].begin(), cols[c].end(), e.X.begin() + static_cast<long>(c * e.n));
    }
    return e;
}

namespace {

struct SplitChoice {
    double gain = -1.0;
    int feature = -1;
    double threshold = 0.0;
};

}  // namespace

GbtModel gbt_train(const EncodedFrame& frame, const std::vector<std::int32_t>& rows_in,
                   const GbtConfig& config) {
    config.check();
    std::vector<std::int32_t> rows = rows_in;
    if (rows.empty()) {
        rows.resize(frame.n);
        std::iota(rows.begin(), rows.end(), 0);
    }
    const std::size_t ns = rows.size();
    if (ns < 2) throw ValidationError("gbt_train: need at least 2 training rows");
    const std::size_t d = frame.d;

    // Global presort of the training subset per feature; ties broken by
    // subset position so the scan order is deterministic.
    std::vector<std::vector<std::int32_t>> order(d);
    for (std::size_t f = 0; f < d; ++f) {
        auto& o = order[f];
        o.resize(ns);
        std::iota(o.begin(), o.end(), 0);
        const double* col = frame.X.data() + f * frame.n;
        std::stable_sort(o.begin(), o.end(), [&](std::int32_t a, std::int32_t b) {
            return col[rows[static_cast<std::size_t>(a)]] <
                   col[rows[static_cast<std::size_t>(b)]];
        });
    }

    GbtModel model;
    model.learning_rate = config.learning_rate;
    model.col_names = frame.col_names;
    model.parents = frame.parents;
    model.gain.assign(d, 0.0);

    double base = 0.0;
    for (auto i : rows) base += frame.y[static_cast<std::size_t>(i)];
    base /= static_cast<double>(ns);
    model.base = base;

    std::vector<double> pred(ns, base);
    std::vector<double> resid(ns);
    std::vector<std::int32_t> node_of(ns);

    const int max_nodes_per_level = 1 << config.depth;
    std::vector<SplitChoice> feature_best;  // d * max_nodes_per_level scratch

    for (int tree_idx = 0; tree_idx < config.trees; ++tree_idx) {
        for (std::size_t i = 0; i < ns; ++i) {
            resid[i] = frame.y[static_cast<std::size_t>(rows[i])] - pred[i];
        }
        std::vector<TreeNode> nodes(1);
        std::fill(node_of.begin(), node_of.end(), 0);
        std::int32_t frontier_lo = 0, frontier_hi = 1;

        for (int level = 0; level < config.depth && frontier_hi > frontier_lo; ++level) {
            const int width = frontier_hi - frontier_lo;
            // Node totals.
            std::vector<double> node_sum(static_cast<std::size_t>(width), 0.0);
            std::vector<std::int32_t> node_cnt(static_cast<std::size_t>(width), 0);
            for (std::size_t i = 0; i < ns; ++i) {
                const std::int32_t nd = node_of[i];
                if (nd >= frontier_lo && nd < frontier_hi) {
                    node_sum[static_cast<std::size_t>(nd - frontier_lo)] += resid[i];
                    node_cnt[static_cast<std::size_t>(nd - frontier_lo)] += 1;
                }
            }

            feature_best.assign(d * static_cast<std::size_t>(width), SplitChoice{});
#ifdef _OPENMP
#pragma omp parallel for schedule(static)
#endif
            for (std::ptrdiff_t fi = 0; fi < static_cast<std::ptrdiff_t>(d); ++fi) {
                const std::size_t f = static_cast<std::size_t>(fi);
                const double* col = frame.X.data() + f * frame.n;
                SplitChoice* best = feature_best.data() + f * static_cast<std::size_t>(width);
                std::vector<double> lsum(static_cast<std::size_t>(width), 0.0);
                std::vector<std::int32_t> lcnt(static_cast<std::size_t>(width), 0);
                std::vector<double> prev(static_cast<std::size_t>(width), 0.0);
                std::vector<char> has_prev(static_cast<std::size_t>(width), 0);

                for (std::int32_t oi : order[f]) {
                    const std::size_t i = static_cast<std::size_t>(oi);
                    const std::int32_t nd = node_of[i];
                    if (nd < frontier_lo || nd >= frontier_hi) continue;
                    const std::size_t slot = static_cast<std::size_t>(nd - frontier_lo);
                    const double v = col[rows[i]];
                    if (has_prev[slot] && v > prev[slot]) {
                        const std::int32_t lc = lcnt[slot];
                        const std::int32_t rc = node_cnt[slot] - lc;
                        if (lc >= config.min_samples_leaf && rc >= config.min_samples_leaf) {
                            const double ls = lsum[slot];
                            const double ts = node_sum[slot];
                            const double g = ls * ls / lc + (ts - ls) * (ts - ls) / rc -
                                             ts * ts / node_cnt[slot];
                            if (g > best[slot].gain) {
                                best[slot].gain = g;
                                best[slot].feature = static_cast<int>(f);
                                best[slot].threshold = 0.5 * (prev[slot] + v);
                            }
                        }
                    }
                    lsum[slot] += resid[i];
                    lcnt[slot] += 1;
                    prev[slot] = v;
                    has_prev[slot] = 1;
                }
            }

            // Per node, the best feature wins; lower feature index breaks ties.
            const std::int32_t next_lo = static_cast<std::int32_t>(nodes.size());
            std::vector<SplitChoice> chosen(static_cast<std::size_t>(width));
            for (int s = 0; s < width; ++s) {
                SplitChoice c;
                for (std::size_t f = 0; f < d; ++f) {
                    const SplitChoice& fc =
                        feature_best[f * static_cast<std::size_t>(width) +
                                     static_cast<std::size_t>(s)];
                    if (fc.gain > c.gain) c = fc;
                }
                chosen[static_cast<std::size_t>(s)] = c;
            }
            bool any_split = false;
            for (int s = 0; s < width; ++s) {
                const SplitChoice& c = chosen[static_cast<std::size_t>(s)];
                if (c.gain <= kMinGain) continue;
                TreeNode& nd = nodes[static_cast<std::size_t>(frontier_lo + s)];
                nd.feature = c.feature;
                nd.threshold = c.threshold;
                nd.left = static_cast<int>(nodes.size());
                nd.right = nd.left + 1;
                nodes.emplace_back();
                nodes.emplace_back();
                model.gain[static_cast<std::size_t>(c.feature)] += c.gain;
                any_split = true;
            }
            if (!any_split) break;

            for (std::size_t i = 0; i < ns; ++i) {
                const std::int32_t nd = node_of[i];
                if (nd < frontier_lo || nd >= frontier_hi) continue;
                const TreeNode& node = nodes[static_cast<std::size_t>(nd)];
                if (node.feature < 0) continue;
                const double v =
                    frame.X[static_cast<std::size_t>(node.feature) * frame.n +
                            static_cast<std::size_t>(rows[i])];
                node_of[i] = v < node.threshold ? node.left : node.right;
            }
            frontier_lo = next_lo;
            frontier_hi = static_cast<std::int32_t>(nodes.size());
            (void)max_nodes_per_level;
        }

        // Leaf values: mean residual per terminal node.
        std::vector<double> leaf_sum(nodes.size(), 0.0);
        std::vector<std::int32_t> leaf_cnt(nodes.size(), 0);
        for (std::size_t i = 0; i < ns; ++i) {
            leaf_sum[static_cast<std::size_t>(node_of[i])] += resid[i];
            leaf_cnt[static_cast<std::size_t>(node_of[i])] += 1;
        }
        for (std::size_t j = 0; j < nodes.size(); ++j) {
            if (nodes[j].feature < 0 && leaf_cnt[j] > 0) {
                nodes[j].value = leaf_sum[j] / leaf_cnt[j];
            }
        }
        double mse = 0.0;
        for (std::size_t i = 0; i < ns; ++i) {
            pred[i] += config.learning_rate * nodes[static_cast<std::size_t>(node_of[i])].value;
            const double e = frame.y[static_cast<std::size_t>(rows[i])] - pred[i];
            mse += e * e;
        }
        model.train_mse.push_back(mse / static_cast<double>(ns));
        model.trees.push_back(std::move(nodes));
    }
    return model;
}

double gbt_predict(const GbtModel& model, const EncodedFrame& frame, std::size_t row) {
    double out = model.base;
    for (const auto& tree : model.trees) {
        int j = 0;
        while (tree[static_cast<std::size_t>(j)].feature >= 0) {
            const TreeNode& nd = tree[static_cast<std::size_t>(j)];
            const double v =
                frame.X[static_cast<std::size_t>(nd.feature) * frame.n + row];
            j = v < nd.threshold ? nd.left : nd.right;
        }
        out += model.learning_rate * tree[static_cast<std::size_t>(j)].value;
    }
    return out;
}

std::map<std::string, double> gbt_importance(const GbtModel& model, bool* degenerate) {
    std::map<std::string, double> shares;
    double total = 0.0;
    for (std::size_t f = 0; f < model.gain.size(); ++f) {
        shares[model.parents[f]] += model.gain[f];
        total += model.gain[f];
    }
    if (degenerate != nullptr) *degenerate = !(total > 0.0);
    for (auto& [k, v] : shares) {
        v = total > 0.0 ? v / total : 0.0;
    }
    return shares;
}

namespace {

struct FoldErrors {
    std::string benchmark;
    int tier = 0;
    std::vector<double> abs_err;
    std::size_t leaked = 0;
};

struct SeedAgg {
    std::map<std::string, std::pair<double, double>> mae_rmse_bench;  // per benchmark
    std::map<int, std::pair<double, double>> mae_rmse_tier;
    double mae_all = 0.0, rmse_all = 0.0;
    std::size_t cells = 0;
};

HoldoutRow summarize_rows(const std::string& key, const std::vector<double>& mae,
                          const std::vector<double>& rmse, std::size_t cells) {
    HoldoutRow r;
    r.key = key;
    r.cells = cells;
    r.mae_mean = mean_of(mae);
    r.mae_sd = sample_sd(mae);
    r.rmse_mean = mean_of(rmse);
    r.rmse_sd = sample_sd(rmse);
    return r;
}

}  // namespace

HoldoutReport gbt_holdout(const EncodedFrame& encoded, const GbtConfig& config,
                          std::uint64_t seed) {
    config.check();
    // Candidate (benchmark, tier) pairs and their language pools.
    std::map<std::pair<std::string, int>, std::set<std::string>> pools;
    std::map<std::string, int> lang_tier;
    for (std::size_t i = 0; i < encoded.n; ++i) {
        pools[{encoded.benchmark[i], encoded.tier[i]}].insert(encoded.language[i]);
        lang_tier[encoded.language[i]] = encoded.tier[i];
    }
    struct Combo {
        std::string benchmark;
        int tier;
        std::vector<std::string> languages;
    };
    std::vector<Combo> combos;
    HoldoutReport report;
    for (const auto& [key, langs] : pools) {
        if (langs.size() < 2) {
            report.skipped.push_back("(" + key.first + ", tier " + std::to_string(key.second) +
                                     "): single language, skipped");
            continue;
        }
        combos.push_back({key.first, key.second, {langs.begin(), langs.end()}});
    }
    if (combos.empty()) {
        throw ValidationError("gbt_holdout: no (benchmark, tier) pair has two languages");
    }

    std::map<std::string, std::vector<double>> bench_mae, bench_rmse;
    std::map<int, std::vector<double>> tier_mae, tier_rmse;
    std::map<std::string, std::size_t> bench_cells;
    std::map<int, std::size_t> tier_cells;
    std::vector<double> all_mae, all_rmse;
    std::size_t total_cells = 0;

    for (int s = 0; s < config.seeds; ++s) {
        Rng rng(derive_seed(seed, 0x6B7), static_cast<std::uint64_t>(s));
        // Choose every held-out language up front so fold training can run
        // in parallel without touching the RNG.
        std::vector<std::string> held(combos.size());
        for (std::size_t c = 0; c < combos.size(); ++c) {
            held[c] = combos[c].languages[static_cast<std::size_t>(
                rng.uniform_int(combos[c].languages.size()))];
        }

        std::vector<FoldErrors> folds(combos.size());
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
        for (std::ptrdiff_t ci = 0; ci < static_cast<std::ptrdiff_t>(combos.size()); ++ci) {
            const std::size_t c = static_cast<std::size_t>(ci);
            const auto& combo = combos[c];
            FoldErrors fe;
            fe.benchmark = combo.benchmark;
            fe.tier = combo.tier;

            std::vector<char> is_test(encoded.n, 0);
            std::vector<std::int32_t> train_rows;
            std::vector<std::size_t> test_rows;
            for (std::size_t i = 0; i < encoded.n; ++i) {
                if (encoded.benchmark[i] == combo.benchmark && encoded.language[i] == held[c]) {
                    is_test[i] = 1;
                    test_rows.push_back(i);
                } else {
                    train_rows.push_back(static_cast<std::int32_t>(i));
                }
            }
            // Construction audit: the held-out rows must not be trainable.
            for (auto r : train_rows) {
                if (is_test[static_cast<std::size_t>(r)]) fe.leaked++;
            }
            const GbtModel model = gbt_train(encoded, train_rows, config);
            for (std::size_t i : test_rows) {
                fe.abs_err.push_back(std::fabs(gbt_predict(model, encoded, i) - encoded.y[i]));
            }
            folds[c] = std::move(fe);
        }

        // Aggregate this seed.
        std::map<std::string, std::vector<double>> bench_err;
        std::map<int, std::vector<double>> tier_err;
        std::vector<double> seed_err;
        for (const auto& fe : folds) {
            report.leaked_rows += fe.leaked;
            auto& be = bench_err[fe.benchmark];
            be.insert(be.end(), fe.abs_err.begin(), fe.abs_err.end());
            auto& te = tier_err[fe.tier];
            te.insert(te.end(), fe.abs_err.begin(), fe.abs_err.end());
            seed_err.insert(seed_err.end(), fe.abs_err.begin(), fe.abs_err.end());
            if (s == 0) {
                bench_cells[fe.benchmark] += 1;
                tier_cells[fe.tier] += 1;
            }
            total_cells += 1;
        }
        auto mae_of = [](const std::vector<double>& e) { return mean_of(e); };
        auto rmse_of = [](const std::vector<double>& e) {
            double ss = 0.0;
            for (double v : e) ss += v * v;
            return e.empty() ? 0.0 : std::sqrt(ss / static_cast<double>(e.size()));
        };
        for (const auto& [b, errs] : bench_err) {
            bench_mae[b].push_back(mae_of(errs));
            bench_rmse[b].push_back(rmse_of(errs));
        }
        for (const auto& [t, errs] : tier_err) {
            tier_mae[t].push_back(mae_of(errs));
            tier_rmse[t].push_back(rmse_of(errs));
        }
        all_mae.push_back(mae_of(seed_err));
        all_rmse.push_back(rmse_of(seed_err));
    }

    for (const auto& [b, mae] : bench_mae) {
        report.per_benchmark.push_back(
            summarize_rows(b, mae, bench_rmse[b],
                           bench_cells[b] * static_cast<std::size_t>(config.seeds)));
    }
    for (const auto& [t, mae] : tier_mae) {
        report.per_tier.push_back(
            summarize_rows(std::to_string(t), mae, tier_rmse[t],
                           tier_cells[t] * static_cast<std::size_t>(config.seeds)));
    }
    report.overall = summarize_rows("overall", all_mae, all_rmse, total_cells);
    return report;
}

}  // namespace disparity
