#include "disparity/decompose.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include <json.hpp>

#include "disparity/common.hpp"
#include "disparity/csv.hpp"
#include "disparity/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace disparity {

StageFormulas StageFormulas::defaults() {
    StageFormulas f;
    f.stage1 = "score ~ 1 + C(task) + (1|language) + (1|model)";
    f.stage2 =
        "score ~ 1 + joshi_class_z + syn_dist_en_z + phon_dist_en_z + geo_dist_en_z"
        " + C(script) + C(family) + C(task) + (1|language) + (1|model)";
    f.stage3 =
        "score ~ 1 + joshi_class_z + syn_dist_en_z + phon_dist_en_z + geo_dist_en_z"
        " + C(script) + C(family) + C(task) + fertility_z + repr_sim_en_z"
        " + (1|language) + (1|model)"
        " + (1|model:language) + (1|task:language) + (1|task:model)"
        " + (0 + fertility_z|model)";
    return f;
}

const std::string& StageFormulas::get(int stage) const {
    switch (stage) {
        case 1: return stage1;
        case 2: return stage2;
        default: return stage3;
    }
}

double logit_clipped(double score, double eps) {
    const double s = std::clamp(score, eps, 1.0 - eps);
    return std::log(s / (1.0 - s));
}

FitFrame logit_frame(FitFrame frame, double eps) {
    std::vector<double> t(frame.n());
    for (std::size_t i = 0; i < frame.n(); ++i) t[i] = logit_clipped(frame.score[i], eps);
    frame.extra_columns["score_logit"] = std::move(t);
    return frame;
}

FitResult fit_stage(const FitFrame& frame, const std::string& stage,
                    const StageFormulas& formulas, const NutsConfig& config,
                    double logit_eps) {
    int stage_num = 0;
    bool logit = false;
    if (stage == "1") {
        stage_num = 1;
    } else if (stage == "2") {
        stage_num = 2;
    } else if (stage == "3") {
        stage_num = 3;
    } else if (stage == "3-logit") {
        stage_num = 3;
        logit = true;
    } else {
        throw ValidationError("unknown stage '" + stage + "' (use 1, 2, 3 or 3-logit)");
    }

    const FitFrame* fr = &frame;
    FitFrame transformed;
    ModelSpec spec = parse_formula(formulas.get(stage_num));
    if (logit) {
        transformed = logit_frame(frame, logit_eps);
        fr = &transformed;
        spec.response = "score_logit";
    }

    FitResult out;
    out.stage = stage;
    out.bucket = frame.bucket;
    out.checked = validate(spec, *fr);
    out.formula = out.checked.spec.print();
    out.design = build_design(out.checked, *fr);
    out.config_used = config;

    Posterior post(out.design, PriorSpec::auto_scaled(out.design));
    out.draws = nuts_sample_posterior(post, config);
    out.summaries = summarize(out.draws);
    out.diag = assess(out.summaries);
    return out;
}

R2Result r2_ling_from_draws(std::vector<double> sigma_stage1, std::vector<double> sigma_stage2,
                            std::uint64_t seed) {
    if (sigma_stage1.empty() || sigma_stage2.empty()) {
        throw ValidationError("r2_ling: empty draw vector");
    }
    const std::size_t len = std::min(sigma_stage1.size(), sigma_stage2.size());
    sigma_stage1.resize(len);
    sigma_stage2.resize(len);

    // The stages are fit independently; take the joint posterior as the
    // product measure by shuffling the stage-2 draws.
    Rng rng(derive_seed(seed, 0x522));
    for (std::size_t i = len; i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.uniform_int(i));
        std::swap(sigma_stage2[i - 1], sigma_stage2[j]);
    }

    R2Result res;
    std::vector<double> r2;
    r2.reserve(len);
    for (std::size_t i = 0; i < len; ++i) {
        if (sigma_stage1[i] == 0.0) {
            res.skipped++;
            continue;
        }
        const double ratio = sigma_stage2[i] / sigma_stage1[i];
        r2.push_back(1.0 - ratio * ratio);
    }
    if (r2.empty()) throw ValidationError("r2_ling: all pairs skipped (zero sigma draws)");
    res.pairs = r2.size();
    res.mean = std::accumulate(r2.begin(), r2.end(), 0.0) / static_cast<double>(r2.size());
    if (r2.size() >= 10) {
        const auto [lo, hi] = hdi(r2, 0.9);
        res.lo = lo;
        res.hi = hi;
    } else {
        res.lo = res.hi = res.mean;
    }
    return res;
}

R2Result r2_ling(const FitResult& stage1, const FitResult& stage2, std::uint64_t seed) {
    const int i1 = stage1.sigma_index("language");
    const int i2 = stage2.sigma_index("language");
    if (i1 < 0 || i2 < 0) {
        throw ValidationError("r2_ling: fits lack a (1|language) term");
    }
    return r2_ling_from_draws(stage1.draws.constrained_param(static_cast<std::size_t>(i1)),
                              stage2.draws.constrained_param(static_cast<std::size_t>(i2)),
                              seed);
}

std::vector<VarianceShare> variance_shares(const FitResult& fit) {
    // Full-model table order; any other terms follow in design order,
    // residual last.
    const std::vector<std::string> preferred = {"model",           "task:model",
                                                "fertility_z|model", "model:language",
                                                "task:language",   "language"};
    std::vector<std::string> order;
    for (const auto& name : preferred) {
        if (fit.sigma_index(name) >= 0) order.push_back(name);
    }
    for (const auto& term : fit.design.terms) {
        if (std::find(order.begin(), order.end(), term.name) == order.end()) {
            order.push_back(term.name);
        }
    }

    std::vector<std::size_t> idx;
    for (const auto& name : order) {
        idx.push_back(static_cast<std::size_t>(fit.sigma_index(name)));
    }
    idx.push_back(static_cast<std::size_t>(fit.param_index("sigma")));
    const std::size_t ncomp = idx.size();

    const auto& d = fit.draws;
    const std::size_t total = d.n_chains * d.n_draws;
    std::vector<std::vector<double>> shares(ncomp);
    std::vector<double> sd_sum(ncomp, 0.0);
    for (auto& s : shares) s.reserve(total);

    std::vector<double> sig(ncomp);
    for (std::size_t c = 0; c < d.n_chains; ++c) {
        for (std::size_t k = 0; k < d.n_draws; ++k) {
            double denom = 0.0;
            for (std::size_t j = 0; j < ncomp; ++j) {
                sig[j] = d.constrained(c, k, idx[j]);
                denom += sig[j] * sig[j];
            }
            for (std::size_t j = 0; j < ncomp; ++j) {
                shares[j].push_back(sig[j] * sig[j] / denom);
                sd_sum[j] += sig[j];
            }
        }
    }

    std::vector<VarianceShare> out;
    for (std::size_t j = 0; j < ncomp; ++j) {
        VarianceShare v;
        v.component = j + 1 < ncomp ? order[j] : "residual";
        v.share_mean = std::accumulate(shares[j].begin(), shares[j].end(), 0.0) /
                       static_cast<double>(total);
        if (total >= 10) {
            const auto [lo, hi] = hdi(shares[j], 0.9);
            v.share_lo = lo;
            v.share_hi = hi;
        } else {
            v.share_lo = v.share_hi = v.share_mean;
        }
        v.sd_mean = sd_sum[j] / static_cast<double>(total);
        out.push_back(v);
    }
    return out;
}

namespace {

std::string hdi_marker(double lo, double hi) {
    if (lo > 0.0 || hi < 0.0) return "*";
    const double width = hi - lo;
    const double edge = std::min(hi, -lo);
    if (width > 0.0 && edge <= 0.10 * width) return "†";  // dagger
    return "";
}

}  // namespace

std::vector<CoefRow> coefficient_table(const FitResult& fit) {
    std::vector<CoefRow> out;
    for (std::size_t col : fit.design.continuous_cols) {
        const std::string& cname = fit.design.col_names[col];
        const int k = fit.param_index("b[" + cname + "]");
        if (k < 0) continue;
        const auto& s = fit.summaries[static_cast<std::size_t>(k)];
        CoefRow row;
        row.name = cname;
        row.mean = s.mean;
        row.lo = s.hdi_lo;
        row.hi = s.hdi_hi;
        row.marker = hdi_marker(s.hdi_lo, s.hdi_hi);
        out.push_back(row);
    }
    return out;
}

namespace {

const std::set<std::string> kLanguageFeatureCols = {
    "resource_class_z", "joshi_class_z", "syn_dist_en_z", "phon_dist_en_z", "geo_dist_en_z"};
const std::set<std::string> kModelConditionalCols = {"fertility_z", "repr_sim_en_z"};

struct LangInfo {
    std::string language;
    std::size_t row = 0;  // first frame row of this language
};

std::vector<LangInfo> distinct_languages(const FitFrame& frame) {
    std::map<std::string, std::size_t> first;
    for (std::size_t i = 0; i < frame.n(); ++i) {
        first.emplace(frame.language[i], i);
    }
    std::vector<LangInfo> out;
    out.reserve(first.size());
    for (const auto& [lang, row] : first) out.push_back({lang, row});
    return out;
}

}  // namespace

std::vector<LanguagePotentialRow> language_potential(const FitResult& fit,
                                                     const FitFrame& frame) {
    const auto& d = fit.draws;
    const auto& design = fit.design;
    const std::size_t total = d.n_chains * d.n_draws;

    const int b0 = design.has_intercept ? fit.param_index("b[Intercept]") : -1;
    std::vector<std::pair<int, std::size_t>> feature_cols;  // (param index, design column)
    for (std::size_t col : design.continuous_cols) {
        if (kLanguageFeatureCols.count(design.col_names[col])) {
            feature_cols.push_back({fit.param_index("b[" + design.col_names[col] + "]"), col});
        }
    }
    std::vector<std::pair<int, std::size_t>> contrast_cols;
    for (std::size_t col = 0; col < design.p; ++col) {
        const std::string& nm = design.col_names[col];
        if (nm.rfind("script[", 0) == 0 || nm.rfind("family[", 0) == 0) {
            contrast_cols.push_back({fit.param_index("b[" + nm + "]"), col});
        }
    }

    int lang_term = -1;
    for (std::size_t t = 0; t < design.terms.size(); ++t) {
        if (design.terms[t].name == "language") lang_term = static_cast<int>(t);
    }
    const int sigma_lang = fit.sigma_index("language");

    std::vector<LanguagePotentialRow> out;
    std::vector<double> lp(total);
    for (const auto& info : distinct_languages(frame)) {
        int z_idx = -1;
        if (lang_term >= 0) {
            const auto& td = design.terms[static_cast<std::size_t>(lang_term)];
            const auto g = static_cast<std::size_t>(td.group[info.row]);
            z_idx = fit.param_index("z[language][" + td.levels[g] + "]");
        }
        std::size_t pos = 0;
        for (std::size_t c = 0; c < d.n_chains; ++c) {
            for (std::size_t k = 0; k < d.n_draws; ++k, ++pos) {
                double v = b0 >= 0 ? d.value(c, k, static_cast<std::size_t>(b0)) : 0.0;
                for (const auto& [pidx, col] : feature_cols) {
                    v += d.value(c, k, static_cast<std::size_t>(pidx)) * design.x(info.row, col);
                }
                for (const auto& [pidx, col] : contrast_cols) {
                    const double x = design.x(info.row, col);
                    if (x != 0.0) v += d.value(c, k, static_cast<std::size_t>(pidx)) * x;
                }
                if (z_idx >= 0 && sigma_lang >= 0) {
                    v += d.constrained(c, k, static_cast<std::size_t>(sigma_lang)) *
                         d.value(c, k, static_cast<std::size_t>(z_idx));
                }
                lp[pos] = v;
            }
        }
        LanguagePotentialRow row;
        row.language = info.language;
        row.mean = std::accumulate(lp.begin(), lp.end(), 0.0) / static_cast<double>(total);
        if (total >= 10) {
            const auto [lo, hi] = hdi(lp, 0.9);
            row.lo = lo;
            row.hi = hi;
        } else {
            row.lo = row.hi = row.mean;
        }
        out.push_back(std::move(row));
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        if (a.mean != b.mean) return a.mean > b.mean;
        return a.language < b.language;
    });
    return out;
}

std::pair<double, double> pps(double mean_y, double var_y, double lds_clipped) {
    if (!(lds_clipped >= 0.0 && lds_clipped <= 1.0)) {
        throw ValidationError("pps: clipped LDS outside [0,1]");
    }
    if (var_y < 0.0) throw ValidationError("pps: negative variance");
    const double pps5 = mean_y - 1.645 * std::sqrt(lds_clipped * var_y);
    const double pps_w = mean_y * (1.0 - lds_clipped);
    return {pps5, pps_w};
}

double variance_ratio(const std::vector<double>& predictor, const std::vector<double>& y) {
    if (y.size() < 2 || predictor.size() != y.size()) {
        throw ValidationError("variance_ratio: need matched slices of size >= 2");
    }
    auto ssq = [](const std::vector<double>& v) {
        const double m = mean_of(v);
        double ss = 0.0;
        for (double x : v) ss += (x - m) * (x - m);
        return ss;
    };
    const double denom = ssq(y);
    if (denom == 0.0) return std::numeric_limits<double>::infinity();
    return ssq(predictor) / denom;
}

namespace {

struct LangPredictor {
    std::vector<double> lang;  // full language-varying linear predictor
    std::vector<double> mavs;  // model-conditional measured-feature part
};

// Per-row language-varying predictor at one parameter point. The language
// terms are the language-feature fixed effects, the script/family
// contrasts, the model-conditional covariates (with the per-model slope
// folded in), and every random term whose group involves language.
LangPredictor lang_predictor_at(const FitResult& fit, const std::vector<double>& point) {
    const auto& design = fit.design;
    const std::size_t n = design.n;
    LangPredictor out;
    out.lang.assign(n, 0.0);
    out.mavs.assign(n, 0.0);

    for (std::size_t col = 0; col < design.p; ++col) {
        const std::string& nm = design.col_names[col];
        const bool model_cond = kModelConditionalCols.count(nm) > 0;
        const bool lang_feature = model_cond || kLanguageFeatureCols.count(nm) > 0 ||
                                  nm.rfind("script[", 0) == 0 || nm.rfind("family[", 0) == 0;
        if (!lang_feature) continue;
        const int pidx = fit.param_index("b[" + nm + "]");
        if (pidx < 0) continue;
        const double beta = point[static_cast<std::size_t>(pidx)];
        const double* x = design.col(col);
        for (std::size_t i = 0; i < n; ++i) {
            out.lang[i] += beta * x[i];
            if (model_cond) out.mavs[i] += beta * x[i];
        }
    }

    for (const auto& td : design.terms) {
        const bool involves_language = td.name.find("language") != std::string::npos;
        const bool fert_slope = td.has_slope;
        if (!involves_language && !fert_slope) continue;
        const int ts = fit.draws.index_of("sigma[" + td.name + "]");
        if (ts < 0) continue;
        const double sigma = std::exp(point[static_cast<std::size_t>(ts)]);
        std::vector<double> effect(td.levels.size());
        for (std::size_t g = 0; g < td.levels.size(); ++g) {
            const int zi = fit.draws.index_of("z[" + td.name + "][" + td.levels[g] + "]");
            effect[g] = sigma * point[static_cast<std::size_t>(zi)];
        }
        for (std::size_t i = 0; i < n; ++i) {
            const double c = td.has_slope ? td.slope[i] : 1.0;
            const double v = effect[static_cast<std::size_t>(td.group[i])] * c;
            out.lang[i] += v;
            if (fert_slope) out.mavs[i] += v;
        }
    }
    return out;
}

std::vector<double> posterior_mean_point(const FitResult& fit) {
    const auto& d = fit.draws;
    const std::size_t total = d.n_chains * d.n_draws;
    std::vector<double> point(d.dim, 0.0);
    for (std::size_t c = 0; c < d.n_chains; ++c) {
        for (std::size_t k = 0; k < d.n_draws; ++k) {
            for (std::size_t j = 0; j < d.dim; ++j) point[j] += d.value(c, k, j);
        }
    }
    for (auto& v : point) v /= static_cast<double>(total);
    return point;
}

struct SliceDef {
    std::string level, model, benchmark;
    std::vector<std::size_t> rows;
};

std::vector<SliceDef> make_slices(const FitFrame& frame) {
    std::vector<SliceDef> slices;
    SliceDef bucket;
    bucket.level = "bucket";
    for (std::size_t i = 0; i < frame.n(); ++i) bucket.rows.push_back(i);
    slices.push_back(std::move(bucket));

    std::map<std::string, std::vector<std::size_t>> per_model;
    std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> per_cell;
    for (std::size_t i = 0; i < frame.n(); ++i) {
        per_model[frame.model[i]].push_back(i);
        per_cell[{frame.model[i], frame.benchmark[i]}].push_back(i);
    }
    for (auto& [model, rows] : per_model) {
        slices.push_back({"model", model, "", std::move(rows)});
    }
    for (auto& [key, rows] : per_cell) {
        slices.push_back({"model_benchmark", key.first, key.second, std::move(rows)});
    }
    return slices;
}

}  // namespace

std::vector<SliceMetrics> pps_lds_mavs(const FitResult& fit, const FitFrame& frame,
                                       LdsMode mode) {
    if (fit.design.n != frame.n()) {
        throw ValidationError("pps_lds_mavs: fit and frame row counts differ");
    }
    const auto slices = make_slices(frame);
    std::vector<SliceMetrics> out;

    std::vector<LangPredictor> draw_preds;
    LangPredictor mean_pred;
    if (mode == LdsMode::posterior_mean) {
        mean_pred = lang_predictor_at(fit, posterior_mean_point(fit));
    } else {
        const auto& d = fit.draws;
        std::vector<double> point(d.dim);
        for (std::size_t c = 0; c < d.n_chains; ++c) {
            for (std::size_t k = 0; k < d.n_draws; ++k) {
                for (std::size_t j = 0; j < d.dim; ++j) point[j] = d.value(c, k, j);
                draw_preds.push_back(lang_predictor_at(fit, point));
            }
        }
    }

    for (const auto& slice : slices) {
        if (slice.rows.size() < 2) continue;  // variance ratio undefined
        SliceMetrics m;
        m.level = slice.level;
        m.model = slice.model;
        m.benchmark = slice.benchmark;
        m.n = slice.rows.size();

        std::vector<double> y;
        y.reserve(slice.rows.size());
        for (std::size_t i : slice.rows) y.push_back(frame.score[i]);
        m.mean_y = mean_of(y);
        const double sd = sample_sd(y);
        m.var_y = sd * sd;
        m.floor_cell = sd < 0.01;

        auto ratio_of = [&](const LangPredictor& pred, bool mavs) {
            std::vector<double> v;
            v.reserve(slice.rows.size());
            for (std::size_t i : slice.rows) v.push_back(mavs ? pred.mavs[i] : pred.lang[i]);
            return variance_ratio(v, y);
        };

        if (mode == LdsMode::posterior_mean) {
            m.lds_raw = ratio_of(mean_pred, false);
            m.mavs_raw = ratio_of(mean_pred, true);
        } else {
            double acc_l = 0.0, acc_m = 0.0;
            for (const auto& pred : draw_preds) {
                acc_l += ratio_of(pred, false);
                acc_m += ratio_of(pred, true);
            }
            m.lds_raw = acc_l / static_cast<double>(draw_preds.size());
            m.mavs_raw = acc_m / static_cast<double>(draw_preds.size());
        }
        m.lds_clipped = std::clamp(m.lds_raw, 0.0, 1.0);
        const auto [p5, pw] = pps(m.mean_y, m.var_y, m.lds_clipped);
        m.pps5 = p5;
        m.pps_w = pw;
        out.push_back(std::move(m));
    }
    return out;
}

std::vector<SignComparisonRow> logit_sign_report(const FitResult& raw_fit,
                                                 const FitResult& logit_fit) {
    const auto raw = coefficient_table(raw_fit);
    const auto lg = coefficient_table(logit_fit);
    std::map<std::string, CoefRow> by_name;
    for (const auto& r : lg) by_name[r.name] = r;

    std::vector<SignComparisonRow> out;
    for (const auto& r : raw) {
        auto it = by_name.find(r.name);
        if (it == by_name.end()) continue;
        SignComparisonRow row;
        row.name = r.name;
        row.raw_mean = r.mean;
        row.logit_mean = it->second.mean;
        row.raw_marker = r.marker;
        row.logit_marker = it->second.marker;
        row.sign_preserved = (r.mean >= 0.0) == (it->second.mean >= 0.0);
        out.push_back(row);
    }
    return out;
}

void save_fit(const FitResult& fit, const std::string& dir) {
    fs::create_directories(dir);
    const auto& d = fit.draws;

    json manifest;
    manifest["schema"] = 1;
    manifest["stage"] = fit.stage;
    manifest["bucket"] = fit.bucket;
    manifest["formula"] = fit.formula;
    manifest["n_rows"] = fit.design.n;
    manifest["chains"] = d.n_chains;
    manifest["draws"] = d.n_draws;
    manifest["dim"] = d.dim;
    manifest["warmup"] = fit.config_used.warmup;
    manifest["target_accept"] = fit.config_used.target_accept;
    manifest["max_tree_depth"] = fit.config_used.max_tree_depth;
    manifest["seed"] = fit.config_used.seed;
    manifest["param_names"] = d.names;
    {
        std::vector<int> tr;
        for (auto t : d.transforms) tr.push_back(t == Transform::log_exp ? 1 : 0);
        manifest["transforms"] = tr;
    }
    {
        json st = json::array();
        for (const auto& s : d.stats) {
            st.push_back({{"divergences", s.divergences},
                          {"warmup_divergences", s.warmup_divergences},
                          {"step_size", s.step_size},
                          {"mean_accept", s.mean_accept}});
        }
        manifest["chain_stats"] = st;
    }
    manifest["diagnostics"] = {{"max_rhat", fit.diag.max_rhat},
                               {"min_ess", fit.diag.min_ess},
                               {"flag", fit.diag.warn ? "WARN" : "OK"},
                               {"worst", fit.diag.worst}};
    {
        json sums = json::object();
        for (const auto& s : fit.summaries) {
            sums[s.name] = {s.mean, s.hdi_lo, s.hdi_hi, s.rhat, s.ess};
        }
        manifest["summaries"] = sums;
    }
    write_text_atomic(dir + "/manifest.json", manifest.dump(2) + "\n");

    for (std::size_t c = 0; c < d.n_chains; ++c) {
        std::string blob(d.n_draws * d.dim * sizeof(double), '\0');
        std::memcpy(blob.data(), d.draws.data() + c * d.n_draws * d.dim, blob.size());
        write_text_atomic(dir + "/chain_" + std::to_string(c) + ".bin", blob);
    }
}

FitResult load_fit(const std::string& dir, const FitFrame& frame) {
    const std::string manifest_path = dir + "/manifest.json";
    if (!fs::exists(manifest_path)) throw MissingArtifact(manifest_path);
    std::ifstream in(manifest_path);
    json manifest;
    try {
        in >> manifest;
    } catch (const std::exception& e) {
        throw ValidationError(manifest_path + std::string(": invalid JSON: ") + e.what());
    }

    FitResult fit;
    fit.stage = manifest.at("stage").get<std::string>();
    fit.bucket = manifest.at("bucket").get<std::string>();
    fit.formula = manifest.at("formula").get<std::string>();
    fit.config_used.chains = static_cast<int>(manifest.at("chains").get<std::size_t>());
    fit.config_used.draws = static_cast<int>(manifest.at("draws").get<std::size_t>());
    fit.config_used.warmup = manifest.at("warmup").get<int>();
    fit.config_used.target_accept = manifest.at("target_accept").get<double>();
    fit.config_used.max_tree_depth = manifest.at("max_tree_depth").get<int>();
    fit.config_used.seed = manifest.at("seed").get<std::uint64_t>();

    const FitFrame* fr = &frame;
    FitFrame transformed;
    ModelSpec spec = parse_formula(fit.formula);
    if (fit.stage == "3-logit") {
        transformed = logit_frame(frame, 1e-3);
        fr = &transformed;
    }
    fit.checked = validate(spec, *fr);
    fit.design = build_design(fit.checked, *fr);
    if (fit.design.n != manifest.at("n_rows").get<std::size_t>()) {
        throw ValidationError("load_fit: frame row count does not match artifact " + dir);
    }

    Posterior post(fit.design, PriorSpec::auto_scaled(fit.design));
    const auto& layout = post.layout();
    const auto names = manifest.at("param_names").get<std::vector<std::string>>();
    if (names != layout.names) {
        throw ValidationError("load_fit: parameter registry mismatch in " + dir);
    }

    auto& d = fit.draws;
    d.names = layout.names;
    d.transforms = layout.transforms;
    d.n_chains = manifest.at("chains").get<std::size_t>();
    d.n_draws = manifest.at("draws").get<std::size_t>();
    d.dim = layout.dim;
    d.draws.assign(d.n_chains * d.n_draws * d.dim, 0.0);
    d.stats.resize(d.n_chains);
    for (std::size_t c = 0; c < d.n_chains; ++c) {
        const std::string path = dir + "/chain_" + std::to_string(c) + ".bin";
        if (!fs::exists(path)) throw MissingArtifact(path);
        std::ifstream bin(path, std::ios::binary);
        bin.read(reinterpret_cast<char*>(d.draws.data() + c * d.n_draws * d.dim),
                 static_cast<std::streamsize>(d.n_draws * d.dim * sizeof(double)));
        if (static_cast<std::size_t>(bin.gcount()) != d.n_draws * d.dim * sizeof(double)) {
            throw ValidationError("load_fit: truncated draw file " + path);
        }
    }
    if (manifest.contains("chain_stats")) {
        const auto& st = manifest["chain_stats"];
        for (std::size_t c = 0; c < d.n_chains && c < st.size(); ++c) {
            d.stats[c].divergences = st[c].value("divergences", std::size_t{0});
            d.stats[c].warmup_divergences = st[c].value("warmup_divergences", std::size_t{0});
            d.stats[c].step_size = st[c].value("step_size", 0.0);
            d.stats[c].mean_accept = st[c].value("mean_accept", 0.0);
        }
    }
    fit.summaries = summarize(fit.draws);
    fit.diag = assess(fit.summaries);
    return fit;
}

}  // namespace disparity
