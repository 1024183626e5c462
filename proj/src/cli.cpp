#include "disparity/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <json.hpp>

#include "disparity/common.hpp"
#include "disparity/csv.hpp"
#include "disparity/dispersion.hpp"
#include "disparity/npstats.hpp"
#include "disparity/parallel.hpp"
#include "disparity/report.hpp"
#include "disparity/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace disparity {

namespace {

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string fit_dir(const RunConfig& cfg, const std::string& stage, const std::string& bucket) {
    return cfg.out_dir + "/fits/stage" + stage + "_" + slug(bucket);
}

}  // namespace

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open config file: " + path);
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw ValidationError(path + std::string(": invalid JSON: ") + e.what());
    }

    RunConfig cfg;
    cfg.scores_path = j.value("scores", "");
    cfg.scores_format = j.value("scores_format", "csv");
    cfg.languages_path = j.value("languages", "");
    cfg.model_language_path = j.value("model_language", "");
    cfg.out_dir = j.value("out", "out");
    cfg.seed = j.value("seed", std::uint64_t{20260801});

    if (j.contains("buckets")) {
        for (const auto& [k, v] : j["buckets"].items()) {
            cfg.bucket_map[k] = v.get<std::string>();
        }
    }
    if (j.contains("chrf100_benchmarks")) {
        for (const auto& b : j["chrf100_benchmarks"]) {
            cfg.chrf100_benchmarks.insert(b.get<std::string>());
        }
    }
    if (j.contains("sampler")) {
        const auto& s = j["sampler"];
        cfg.sampler.chains = s.value("chains", cfg.sampler.chains);
        cfg.sampler.warmup = s.value("warmup", cfg.sampler.warmup);
        cfg.sampler.draws = s.value("draws", cfg.sampler.draws);
        cfg.sampler.target_accept = s.value("target_accept", cfg.sampler.target_accept);
        cfg.sampler.max_tree_depth = s.value("max_tree_depth", cfg.sampler.max_tree_depth);
    }
    if (j.contains("gbt")) {
        const auto& g = j["gbt"];
        cfg.gbt.trees = g.value("trees", cfg.gbt.trees);
        cfg.gbt.depth = g.value("depth", cfg.gbt.depth);
        cfg.gbt.learning_rate = g.value("learning_rate", cfg.gbt.learning_rate);
        cfg.gbt.seeds = g.value("seeds", cfg.gbt.seeds);
        cfg.gbt.min_samples_leaf = g.value("min_samples_leaf", cfg.gbt.min_samples_leaf);
    }
    if (j.contains("formulas")) {
        const auto& f = j["formulas"];
        cfg.formulas.stage1 = f.value("stage1", cfg.formulas.stage1);
        cfg.formulas.stage2 = f.value("stage2", cfg.formulas.stage2);
        cfg.formulas.stage3 = f.value("stage3", cfg.formulas.stage3);
    }
    if (j.value("lds_per_draw", false)) cfg.lds_mode = LdsMode::per_draw;
    return cfg;
}

void RunConfig::validate_paths() const {
    if (scores_path.empty() || languages_path.empty() || model_language_path.empty()) {
        throw ValidationError("config must set scores, languages and model_language paths");
    }
    if (bucket_map.empty()) throw ValidationError("config must define a bucket map");
    if (scores_format != "csv" && scores_format != "json") {
        throw ValidationError("scores_format must be csv or json");
    }
}

std::set<std::string> RunConfig::buckets() const {
    std::set<std::string> out;
    for (const auto& [b, tag] : bucket_map) out.insert(tag);
    return out;
}

namespace {

struct LoadedInputs {
    std::vector<ScoreCell> cells;
    FeatureTable features;
    std::map<std::string, int> tiers;
};

LoadedInputs load_inputs(const RunConfig& cfg) {
    cfg.validate_paths();
    LoadedInputs in;
    LoadOptions opts;
    opts.chrf100_benchmarks = cfg.chrf100_benchmarks;
    in.cells = load_scores(cfg.scores_path,
                           cfg.scores_format == "json" ? ScoreFormat::json : ScoreFormat::csv,
                           opts);
    in.features = load_features(cfg.languages_path, cfg.model_language_path);
    for (const auto& [lang, f] : in.features.languages) in.tiers[lang] = f.resource_class;

    // Every benchmark present must be mapped to a bucket.
    for (const auto& c : in.cells) {
        if (cfg.bucket_map.find(c.benchmark) == cfg.bucket_map.end()) {
            throw ValidationError("benchmark '" + c.benchmark + "' has no bucket mapping");
        }
    }
    return in;
}

void ensure_dir(const std::string& dir) { fs::create_directories(dir); }

// ---- nonparam ------------------------------------------------------------

void emit_friedman(const RunConfig& cfg, const LoadedInputs& in) {
    // Per benchmark: models as judges, languages as items, balanced via
    // dropping languages not covered by every model.
    std::set<std::string> benchmarks;
    for (const auto& c : in.cells) benchmarks.insert(c.benchmark);
    const std::vector<std::string> bench_list(benchmarks.begin(), benchmarks.end());

    struct Row {
        std::string benchmark, bucket;
        FriedmanResult res;
        bool ok = false;
        std::string error;
    };
    std::vector<Row> rows(bench_list.size());

    par::for_each_index(bench_list.size(), [&](std::size_t bi) {
        const std::string& b = bench_list[bi];
        std::set<std::string> models, langs;
        std::map<std::pair<std::string, std::string>, double> score;
        for (const auto& c : in.cells) {
            if (c.benchmark != b) continue;
            models.insert(c.model);
            langs.insert(c.language);
            // Multiple tasks per benchmark (translation directions) average
            // into one benchmark-level cell.
            auto key = std::make_pair(c.model, c.language);
            auto it = score.find(key);
            if (it == score.end()) {
                score[key] = c.score;
            } else {
                it->second = 0.5 * (it->second + c.score);
            }
        }
        std::vector<std::vector<std::optional<double>>> mat;
        for (const auto& m : models) {
            std::vector<std::optional<double>> r;
            for (const auto& l : langs) {
                auto it = score.find({m, l});
                r.push_back(it == score.end() ? std::nullopt
                                              : std::optional<double>(it->second));
            }
            mat.push_back(std::move(r));
        }
        Row row;
        row.benchmark = b;
        row.bucket = cfg.bucket_map.at(b);
        try {
            row.res = friedman(balance_dropna(mat));
            row.ok = true;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
        rows[bi] = std::move(row);
    });

    CsvTable t;
    t.header = {"benchmark", "bucket", "k", "m", "chi2", "p", "w", "sig"};
    for (const auto& r : rows) {
        if (!r.ok) {
            throw ValidationError("friedman failed for benchmark '" + r.benchmark +
                                  "': " + r.error);
        }
        t.rows.push_back({r.benchmark, r.bucket, std::to_string(r.res.k),
                          std::to_string(r.res.m), fmt_double(r.res.chi2),
                          fmt_double(r.res.p), fmt_double(r.res.w, 3), sig_stars(r.res.p)});
    }
    write_csv_atomic(cfg.out_dir + "/nonparam/friedman.csv", t);
}

// Tier groups of within-cell z-scores; degenerate cells carry no comparative
// signal and are left out.
std::vector<std::vector<double>> tier_groups(const FitFrame& frame,
                                             const std::map<std::string, int>& tiers,
                                             const std::string& model_filter) {
    std::vector<std::vector<double>> groups(5);
    for (std::size_t i = 0; i < frame.n(); ++i) {
        if (frame.cell_flagged[i]) continue;
        if (!model_filter.empty() && frame.model[i] != model_filter) continue;
        const int t = tiers.at(frame.language[i]);
        groups[static_cast<std::size_t>(t - 1)].push_back(frame.score_z[i]);
    }
    return groups;
}

void emit_dunn_matrix(const std::string& path, const PairwiseMatrix& pm) {
    CsvTable wide;
    wide.header.push_back("tier");
    for (const auto& l : pm.labels) wide.header.push_back(l);
    for (std::size_t i = 0; i < pm.labels.size(); ++i) {
        std::vector<std::string> row;
        row.push_back(pm.labels[i]);
        for (std::size_t j = 0; j < pm.labels.size(); ++j) {
            if (i == j) {
                row.push_back("-");
            } else {
                row.push_back(fmt_pvalue(pm.p_adj(i, j)) + " " + sig_stars(pm.p_adj(i, j)));
            }
        }
        wide.rows.push_back(std::move(row));
    }
    write_csv_atomic(path, wide);
}

void emit_tier_tests(const RunConfig& cfg, const LoadedInputs& in) {
    CsvTable kw;
    kw.header = {"bucket", "H", "p", "c1_mean_z", "c2_mean_z", "c3_mean_z", "c4_mean_z",
                 "c5_mean_z"};
    CsvTable pairs;
    pairs.header = {"bucket", "slice", "tier_i", "tier_j", "z", "p_raw", "p_adj", "sig"};

    for (const auto& bucket : cfg.buckets()) {
        const auto frame =
            znorm_within_cell(build_fit_frame(filter_bucket(in.cells, cfg.bucket_map, bucket),
                                              in.features, bucket));

        const auto groups_all = tier_groups(frame, in.tiers, "");
        std::vector<std::string> labels;
        std::vector<std::vector<double>> present;
        std::vector<std::string> mean_cols(5, "");
        for (std::size_t t = 0; t < 5; ++t) {
            if (!groups_all[t].empty()) {
                labels.push_back(std::to_string(t + 1));
                present.push_back(groups_all[t]);
                mean_cols[t] = fmt_double(mean_of(groups_all[t]), 4);
            }
        }
        if (present.size() >= 2) {
            const auto [h, p] = kruskal_wallis(present);
            kw.rows.push_back({bucket, fmt_double(h), fmt_double(p), mean_cols[0], mean_cols[1],
                               mean_cols[2], mean_cols[3], mean_cols[4]});
            const auto pm = dunn_posthoc(labels, present);
            emit_dunn_matrix(cfg.out_dir + "/nonparam/dunn_" + slug(bucket) + "_pooled.csv",
                             pm);
            for (std::size_t i = 0; i < pm.labels.size(); ++i) {
                for (std::size_t j = i + 1; j < pm.labels.size(); ++j) {
                    pairs.rows.push_back({bucket, "pooled", pm.labels[i], pm.labels[j],
                                          fmt_double(pm.z(i, j), 4), fmt_double(pm.p_raw(i, j)),
                                          fmt_double(pm.p_adj(i, j)),
                                          sig_stars(pm.p_adj(i, j))});
                }
            }
        }

        std::set<std::string> models(frame.model.begin(), frame.model.end());
        for (const auto& m : models) {
            const auto groups_m = tier_groups(frame, in.tiers, m);
            std::vector<std::string> labels_m;
            std::vector<std::vector<double>> present_m;
            for (std::size_t t = 0; t < 5; ++t) {
                if (!groups_m[t].empty()) {
                    labels_m.push_back(std::to_string(t + 1));
                    present_m.push_back(groups_m[t]);
                }
            }
            if (present_m.size() < 2) continue;
            const auto pm = dunn_posthoc(labels_m, present_m);
            emit_dunn_matrix(cfg.out_dir + "/nonparam/dunn_" + slug(bucket) + "_" + slug(m) +
                                 ".csv",
                             pm);
            for (std::size_t i = 0; i < pm.labels.size(); ++i) {
                for (std::size_t j = i + 1; j < pm.labels.size(); ++j) {
                    pairs.rows.push_back({bucket, m, pm.labels[i], pm.labels[j],
                                          fmt_double(pm.z(i, j), 4), fmt_double(pm.p_raw(i, j)),
                                          fmt_double(pm.p_adj(i, j)),
                                          sig_stars(pm.p_adj(i, j))});
                }
            }
        }
    }
    write_csv_atomic(cfg.out_dir + "/nonparam/kw_tiers.csv", kw);
    write_csv_atomic(cfg.out_dir + "/nonparam/dunn_pairs.csv", pairs);
}

}  // namespace

void run_nonparam(const RunConfig& cfg) {
    const auto in = load_inputs(cfg);
    ensure_dir(cfg.out_dir + "/nonparam");
    emit_friedman(cfg, in);
    emit_tier_tests(cfg, in);
}

void run_dispersion(const RunConfig& cfg) {
    const auto in = load_inputs(cfg);
    ensure_dir(cfg.out_dir + "/dispersion");

    CsvTable t;
    t.comments.push_back(
        "# mu: higher better; gini/cv/gap_rel/gap_z: lower better; sen: higher better");
    t.header = {"model", "bucket", "mu", "gini", "sen", "cv", "gap_rel", "gap_z", "cells"};

    std::map<std::string, FitFrame> frames;
    for (const auto& bucket : cfg.buckets()) {
        frames.emplace(bucket, build_fit_frame(filter_bucket(in.cells, cfg.bucket_map, bucket),
                                               in.features, bucket));
    }

    std::vector<DisparityRow> rows;
    for (const auto& [bucket, frame] : frames) {
        const auto table = model_bucket_table(frame);
        rows.insert(rows.end(), table.rows.begin(), table.rows.end());
    }
    std::sort(rows.begin(), rows.end(), [](const DisparityRow& a, const DisparityRow& b) {
        if (a.model != b.model) return a.model < b.model;
        return a.bucket < b.bucket;
    });
    for (const auto& r : rows) {
        t.rows.push_back({r.model, r.bucket, fmt_double(r.mu, 4), fmt_double(r.gini, 4),
                          fmt_double(r.sen, 4), fmt_double(r.cv, 4), fmt_double(r.gap_rel, 4),
                          fmt_double(r.gap_z, 4), std::to_string(r.cells)});
    }
    write_csv_atomic(cfg.out_dir + "/dispersion/model_bucket_disparity.csv", t);

    // Tier means per bucket plus overall (rows pooled over every bucket).
    const auto bucket_names = cfg.buckets();
    CsvTable tiers;
    tiers.header = {"tier"};
    for (const auto& b : bucket_names) tiers.header.push_back(b);
    tiers.header.push_back("overall");

    std::map<std::string, TierMeans> per_bucket;
    for (const auto& [bucket, frame] : frames) {
        per_bucket.emplace(bucket, tier_means(frame, in.tiers));
    }
    std::array<double, 5> overall_sum{};
    std::array<std::size_t, 5> overall_cnt{};
    std::map<std::string, std::array<double, 5>> model_sum;
    std::map<std::string, std::array<std::size_t, 5>> model_cnt;
    for (const auto& [bucket, frame] : frames) {
        for (std::size_t i = 0; i < frame.n(); ++i) {
            const std::size_t k = static_cast<std::size_t>(in.tiers.at(frame.language[i]) - 1);
            overall_sum[k] += frame.score[i];
            overall_cnt[k] += 1;
            model_sum[frame.model[i]][k] += frame.score[i];
            model_cnt[frame.model[i]][k] += 1;
        }
    }
    for (std::size_t k = 0; k < 5; ++k) {
        std::vector<std::string> row{std::to_string(k + 1)};
        for (const auto& b : bucket_names) {
            const auto& cell = per_bucket.at(b).pooled[k];
            row.push_back(cell.count > 0 ? fmt_double(cell.mean, 4) : "");
        }
        row.push_back(overall_cnt[k] > 0
                          ? fmt_double(overall_sum[k] / static_cast<double>(overall_cnt[k]), 4)
                          : "");
        tiers.rows.push_back(std::move(row));
    }
    write_csv_atomic(cfg.out_dir + "/dispersion/tier_mean_score.csv", tiers);

    CsvTable per_model;
    per_model.header = {"model", "tier1", "tier2", "tier3", "tier4", "tier5"};
    for (const auto& [model, sums] : model_sum) {
        std::vector<std::string> row{model};
        for (std::size_t k = 0; k < 5; ++k) {
            const auto cnt = model_cnt[model][k];
            row.push_back(cnt > 0 ? fmt_double(sums[k] / static_cast<double>(cnt), 4) : "");
        }
        per_model.rows.push_back(std::move(row));
    }
    write_csv_atomic(cfg.out_dir + "/dispersion/tier_mean_score_per_model.csv", per_model);
}

void run_fit(const RunConfig& cfg, const std::string& stage, const std::string& bucket) {
    if (stage.empty() || bucket.empty()) {
        throw ValidationError("fit requires --stage {1|2|3|3-logit} and --bucket <tag>");
    }
    const auto in = load_inputs(cfg);
    if (!cfg.buckets().count(bucket)) {
        throw ValidationError("bucket '" + bucket + "' not present in the bucket map");
    }
    const auto frame = build_fit_frame(filter_bucket(in.cells, cfg.bucket_map, bucket),
                                       in.features, bucket);

    NutsConfig sampler = cfg.sampler;
    sampler.seed = derive_seed(cfg.seed, fnv1a("fit/" + stage + "/" + bucket));

    FitResult fit = fit_stage(frame, stage, cfg.formulas, sampler);
    save_fit(fit, fit_dir(cfg, stage, bucket));

    std::cout << "stage " << stage << " bucket " << bucket << ": "
              << (fit.diag.warn ? "WARN" : "OK");
    if (fit.diag.warn) std::cout << " (" << fit.diag.worst << ")";
    std::cout << "\n";
}

void run_decompose(const RunConfig& cfg) {
    const auto in = load_inputs(cfg);
    ensure_dir(cfg.out_dir + "/decompose");

    CsvTable headline;
    headline.header = {"bucket", "sigma_alpha_mean", "sigma_alpha_lo", "sigma_alpha_hi",
                       "r2_ling_mean", "r2_ling_lo", "r2_ling_hi"};
    CsvTable shares;
    shares.header = {"bucket", "component", "share_pct_mean", "share_pct_lo", "share_pct_hi",
                     "sd_mean"};
    CsvTable coefs;
    coefs.header = {"bucket", "predictor", "mean", "hdi_lo", "hdi_hi", "marker"};
    CsvTable lp;
    lp.header = {"bucket", "rank", "language", "mean", "hdi_lo", "hdi_hi"};
    CsvTable ppstab;
    ppstab.header = {"bucket", "level",   "model",       "benchmark", "n",
                     "mean_y", "var_y",   "lds_raw",     "lds_clipped", "mavs_raw",
                     "floor_cell", "pps5", "pps_w"};
    CsvTable logitcmp;
    logitcmp.header = {"bucket", "predictor", "raw_mean", "raw_marker", "logit_mean",
                       "logit_marker", "sign_preserved"};
    bool have_logit = false;

    for (const auto& bucket : cfg.buckets()) {
        const auto frame = build_fit_frame(filter_bucket(in.cells, cfg.bucket_map, bucket),
                                           in.features, bucket);
        const FitResult s1 = load_fit(fit_dir(cfg, "1", bucket), frame);
        const FitResult s2 = load_fit(fit_dir(cfg, "2", bucket), frame);
        const FitResult s3 = load_fit(fit_dir(cfg, "3", bucket), frame);

        const int ia = s1.sigma_index("language");
        const auto& sa = s1.summaries[static_cast<std::size_t>(ia)];
        const auto r2 = r2_ling(s1, s2, derive_seed(cfg.seed, fnv1a("r2/" + bucket)));
        headline.rows.push_back({bucket, fmt_double(sa.mean, 4), fmt_double(sa.hdi_lo, 4),
                                 fmt_double(sa.hdi_hi, 4), fmt_double(r2.mean, 4),
                                 fmt_double(r2.lo, 4), fmt_double(r2.hi, 4)});

        for (const auto& v : variance_shares(s3)) {
            shares.rows.push_back({bucket, v.component, fmt_double(100.0 * v.share_mean, 4),
                                   fmt_double(100.0 * v.share_lo, 4),
                                   fmt_double(100.0 * v.share_hi, 4),
                                   fmt_double(v.sd_mean, 4)});
        }
        for (const auto& c : coefficient_table(s3)) {
            coefs.rows.push_back({bucket, c.name, fmt_double(c.mean, 4), fmt_double(c.lo, 4),
                                  fmt_double(c.hi, 4), c.marker});
        }
        std::size_t rank = 1;
        for (const auto& row : language_potential(s3, frame)) {
            lp.rows.push_back({bucket, std::to_string(rank++), row.language,
                               fmt_double(row.mean, 4), fmt_double(row.lo, 4),
                               fmt_double(row.hi, 4)});
        }
        for (const auto& m : pps_lds_mavs(s3, frame, cfg.lds_mode)) {
            ppstab.rows.push_back({bucket, m.level, m.model, m.benchmark,
                                   std::to_string(m.n), fmt_double(m.mean_y, 4),
                                   fmt_double(m.var_y, 6), fmt_double(m.lds_raw, 4),
                                   fmt_double(m.lds_clipped, 4), fmt_double(m.mavs_raw, 4),
                                   m.floor_cell ? "1" : "0", fmt_double(m.pps5, 4),
                                   fmt_double(m.pps_w, 4)});
        }
        const std::string logit_dir = fit_dir(cfg, "3-logit", bucket);
        if (fs::exists(logit_dir + "/manifest.json")) {
            have_logit = true;
            const FitResult s3l = load_fit(logit_dir, frame);
            for (const auto& r : logit_sign_report(s3, s3l)) {
                logitcmp.rows.push_back({bucket, r.name, fmt_double(r.raw_mean, 4),
                                         r.raw_marker, fmt_double(r.logit_mean, 4),
                                         r.logit_marker, r.sign_preserved ? "1" : "0"});
            }
        }
    }
    write_csv_atomic(cfg.out_dir + "/decompose/headline.csv", headline);
    write_csv_atomic(cfg.out_dir + "/decompose/variance_shares.csv", shares);
    write_csv_atomic(cfg.out_dir + "/decompose/coefficients.csv", coefs);
    write_csv_atomic(cfg.out_dir + "/decompose/language_potential.csv", lp);
    write_csv_atomic(cfg.out_dir + "/decompose/pps_lds_mavs.csv", ppstab);
    if (have_logit) {
        write_csv_atomic(cfg.out_dir + "/decompose/logit_comparison.csv", logitcmp);
    }
}

void run_tree(const RunConfig& cfg) {
    const auto in = load_inputs(cfg);
    ensure_dir(cfg.out_dir + "/tree");

    CsvTable hb;
    hb.header = {"bucket", "benchmark", "mae_mean", "mae_sd", "rmse_mean", "rmse_sd", "cells"};
    CsvTable ht;
    ht.header = {"bucket", "tier", "mae_mean", "mae_sd", "rmse_mean", "rmse_sd", "cells"};
    CsvTable imp;
    imp.header = {"bucket", "feature", "share"};

    for (const auto& bucket : cfg.buckets()) {
        const auto frame = build_fit_frame(filter_bucket(in.cells, cfg.bucket_map, bucket),
                                           in.features, bucket);
        const auto encoded = gbt_encode(frame);
        const auto report =
            gbt_holdout(encoded, cfg.gbt, derive_seed(cfg.seed, fnv1a("tree/" + bucket)));
        if (report.leaked_rows != 0) {
            throw ValidationError("gbt_holdout: leakage audit failed");
        }
        for (const auto& r : report.per_benchmark) {
            hb.rows.push_back({bucket, r.key, fmt_double(r.mae_mean, 4),
                               fmt_double(r.mae_sd, 4), fmt_double(r.rmse_mean, 4),
                               fmt_double(r.rmse_sd, 4), std::to_string(r.cells)});
        }
        hb.rows.push_back({bucket, "overall", fmt_double(report.overall.mae_mean, 4),
                           fmt_double(report.overall.mae_sd, 4),
                           fmt_double(report.overall.rmse_mean, 4),
                           fmt_double(report.overall.rmse_sd, 4),
                           std::to_string(report.overall.cells)});
        for (const auto& r : report.per_tier) {
            ht.rows.push_back({bucket, r.key, fmt_double(r.mae_mean, 4),
                               fmt_double(r.mae_sd, 4), fmt_double(r.rmse_mean, 4),
                               fmt_double(r.rmse_sd, 4), std::to_string(r.cells)});
        }
        const auto model = gbt_train(encoded, {}, cfg.gbt);
        for (const auto& [feature, share] : gbt_importance(model)) {
            imp.rows.push_back({bucket, feature, fmt_double(share, 4)});
        }
    }
    write_csv_atomic(cfg.out_dir + "/tree/holdout_benchmark.csv", hb);
    write_csv_atomic(cfg.out_dir + "/tree/holdout_tier.csv", ht);
    write_csv_atomic(cfg.out_dir + "/tree/importance.csv", imp);
}

namespace {

CsvTable require_csv(const std::string& path) {
    if (!fs::exists(path)) throw MissingArtifact(path);
    return read_csv(path);
}

}  // namespace

void run_report(const RunConfig& cfg) {
    std::ostringstream md;
    md << "# Cross-language disparity report\n\n";

    md << "## Non-parametric systematicity tests\n\n";
    md << "Per-benchmark Friedman tests (languages as items, models as judges):\n\n";
    md << markdown_table(require_csv(cfg.out_dir + "/nonparam/friedman.csv")) << "\n";
    md << "Kruskal-Wallis omnibus across resource tiers (within-cell z-scores):\n\n";
    md << markdown_table(require_csv(cfg.out_dir + "/nonparam/kw_tiers.csv")) << "\n";
    for (const auto& bucket : cfg.buckets()) {
        const std::string path = cfg.out_dir + "/nonparam/dunn_" + slug(bucket) + "_pooled.csv";
        if (fs::exists(path)) {
            md << "Dunn post-hoc, pooled, bucket `" << bucket
               << "` (BH-FDR adjusted p-values):\n\n";
            md << markdown_table(read_csv(path)) << "\n";
        }
    }

    md << "## Dispersion indices\n\n";
    md << markdown_table(
              require_csv(cfg.out_dir + "/dispersion/model_bucket_disparity.csv"))
       << "\n";
    md << "Mean score by resource tier:\n\n";
    md << markdown_table(require_csv(cfg.out_dir + "/dispersion/tier_mean_score.csv")) << "\n";

    md << "## Headline: language gap and its explained share\n\n";
    {
        const auto t = require_csv(cfg.out_dir + "/decompose/headline.csv");
        CsvTable pretty;
        pretty.header = {"bucket", "sigma_alpha", "r2_ling"};
        for (const auto& r : t.rows) {
            pretty.rows.push_back({r[0], r[1] + " [" + r[2] + ", " + r[3] + "]",
                                   r[4] + " [" + r[5] + ", " + r[6] + "]"});
        }
        md << markdown_table(pretty) << "\n";
    }

    md << "## Continuous-predictor coefficients\n\n";
    md << markdown_table(require_csv(cfg.out_dir + "/decompose/coefficients.csv")) << "\n";

    md << "## Variance decomposition\n\n";
    md << markdown_table(require_csv(cfg.out_dir + "/decompose/variance_shares.csv")) << "\n";

    md << "## Language potential (top and bottom 10 per bucket)\n\n";
    {
        const auto t = require_csv(cfg.out_dir + "/decompose/language_potential.csv");
        std::map<std::string, std::vector<std::vector<std::string>>> by_bucket;
        for (const auto& r : t.rows) by_bucket[r[0]].push_back(r);
        for (const auto& [bucket, rows] : by_bucket) {
            CsvTable pretty;
            pretty.header = t.header;
            const std::size_t n = rows.size();
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (i < 10 || i + 10 >= n) pretty.rows.push_back(rows[i]);
            }
            md << "Bucket `" << bucket << "`:\n\n" << markdown_table(pretty) << "\n";
        }
    }

    md << "## Parity-discounted scores (PPS) and language-disparity shares\n\n";
    md << markdown_table(require_csv(cfg.out_dir + "/decompose/pps_lds_mavs.csv")) << "\n";

    md << "## Gradient-boosted-tree cross-check\n\n";
    md << "Held-out-language error:\n\n";
    md << markdown_table(require_csv(cfg.out_dir + "/tree/holdout_benchmark.csv")) << "\n";
    md << "By resource tier:\n\n";
    md << markdown_table(require_csv(cfg.out_dir + "/tree/holdout_tier.csv")) << "\n";
    md << "Parent-aggregated importance shares:\n\n";
    md << markdown_table(require_csv(cfg.out_dir + "/tree/importance.csv")) << "\n";

    if (fs::exists(cfg.out_dir + "/decompose/logit_comparison.csv")) {
        md << "## Logit-scale robustness\n\n";
        md << markdown_table(read_csv(cfg.out_dir + "/decompose/logit_comparison.csv")) << "\n";
    }

    md << "## Sampling diagnostics\n\n";
    {
        CsvTable diag;
        diag.header = {"stage", "bucket", "flag", "max_rhat", "min_ess", "worst"};
        const std::string fits = cfg.out_dir + "/fits";
        std::vector<std::string> dirs;
        if (fs::exists(fits)) {
            for (const auto& e : fs::directory_iterator(fits)) {
                if (e.is_directory()) dirs.push_back(e.path().string());
            }
        }
        std::sort(dirs.begin(), dirs.end());
        if (dirs.empty()) throw MissingArtifact(fits);
        for (const auto& dir : dirs) {
            const std::string mpath = dir + "/manifest.json";
            if (!fs::exists(mpath)) continue;
            std::ifstream in(mpath);
            json m;
            in >> m;
            const auto& dg = m["diagnostics"];
            diag.rows.push_back({m.value("stage", ""), m.value("bucket", ""),
                                 dg.value("flag", ""),
                                 fmt_double(dg.value("max_rhat", 0.0), 4),
                                 fmt_double(dg.value("min_ess", 0.0), 4),
                                 dg.value("worst", "")});
        }
        md << markdown_table(diag) << "\n";
    }

    write_text_atomic(cfg.out_dir + "/report.md", md.str());
}

int run_command(const RunConfig& config, const std::string& command, const std::string& stage,
                const std::string& bucket) {
    try {
        if (command == "nonparam") {
            run_nonparam(config);
        } else if (command == "dispersion") {
            run_dispersion(config);
        } else if (command == "fit") {
            run_fit(config, stage, bucket);
        } else if (command == "decompose") {
            run_decompose(config);
        } else if (command == "tree") {
            run_tree(config);
        } else if (command == "report") {
            run_report(config);
        } else {
            std::cerr << "error: unknown command '" << command << "'\n";
            return 2;
        }
        return 0;
    } catch (const MissingArtifact& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const SamplerError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

}  // namespace disparity
