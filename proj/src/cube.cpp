#include "disparity/cube.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "disparity/common.hpp"
#include "disparity/csv.hpp"

namespace disparity {

double mean_of(const std::vector<double>& xs) {
    double s = 0.0;
    for (double v : xs) s += v;
    return xs.empty() ? 0.0 : s / static_cast<double>(xs.size());
}

double sample_sd(const std::vector<double>& xs) {
    if (xs.size() < 2) return 0.0;
    const double m = mean_of(xs);
    double ss = 0.0;
    for (double v : xs) ss += (v - m) * (v - m);
    return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

namespace {

double parse_double(const std::string& s, const std::string& where) {
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        if (!std::isfinite(v)) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ValidationError(where + ": cannot parse number '" + s + "'");
    }
}

int parse_int(const std::string& s, const std::string& where) {
    try {
        std::size_t used = 0;
        const int v = std::stoi(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ValidationError(where + ": cannot parse integer '" + s + "'");
    }
}

void validate_cells(std::vector<ScoreCell>& cells, const LoadOptions& opts,
                    const std::string& origin) {
    std::set<std::tuple<std::string, std::string, std::string>> keys;
    std::size_t row = 0;
    for (auto& c : cells) {
        ++row;
        const std::string where = origin + " row " + std::to_string(row);
        if (c.model.empty() || c.benchmark.empty() || c.task.empty() || c.language.empty()) {
            throw ValidationError(where + ": empty identifier field");
        }
        if (opts.chrf100_benchmarks.count(c.benchmark)) c.score /= 100.0;
        if (!(c.score >= 0.0 && c.score <= 1.0)) {
            throw ValidationError(where + ": score " + fmt_double(c.score) +
                                  " outside [0,1] (column score)");
        }
        auto key = std::make_tuple(c.model, c.effective_task(), c.language);
        if (!keys.insert(key).second) {
            throw ValidationError(where + ": duplicate (model, task, language) key (" + c.model +
                                  ", " + c.effective_task() + ", " + c.language + ")");
        }
    }
}

}  // namespace

std::vector<ScoreCell> load_scores(const std::string& path, ScoreFormat format,
                                   const LoadOptions& opts) {
    std::vector<ScoreCell> cells;
    if (format == ScoreFormat::csv) {
        CsvTable t = read_csv(path);
        const int cm = t.column("model"), cb = t.column("benchmark"), ct = t.column("task"),
                  cl = t.column("language"), cs = t.column("score");
        const int cd = t.column("direction");  // optional
        if (cm < 0 || cb < 0 || ct < 0 || cl < 0 || cs < 0) {
            throw ValidationError(path + ": header must contain model,benchmark,task,language," +
                                  "score (direction optional)");
        }
        std::size_t lineno = 1;
        for (const auto& r : t.rows) {
            ++lineno;
            ScoreCell c;
            c.model = r[cm];
            c.benchmark = r[cb];
            c.task = r[ct];
            c.language = r[cl];
            if (cd >= 0) c.direction = r[cd];
            c.score = parse_double(r[cs], path + ":" + std::to_string(lineno) + " column score");
            cells.push_back(std::move(c));
        }
    } else {
        std::ifstream in(path);
        if (!in) throw ValidationError("cannot open file: " + path);
        nlohmann::json j;
        try {
            in >> j;
        } catch (const std::exception& e) {
            throw ValidationError(path + ": invalid JSON: " + e.what());
        }
        if (!j.is_array()) throw ValidationError(path + ": expected a JSON array of cells");
        std::size_t idx = 0;
        for (const auto& o : j) {
            ++idx;
            const std::string where = path + " element " + std::to_string(idx);
            if (!o.is_object()) throw ValidationError(where + ": expected object");
            ScoreCell c;
            try {
                c.model = o.at("model").get<std::string>();
                c.benchmark = o.at("benchmark").get<std::string>();
                c.task = o.at("task").get<std::string>();
                c.language = o.at("language").get<std::string>();
                if (o.contains("direction") && !o["direction"].is_null()) {
                    c.direction = o["direction"].get<std::string>();
                }
                c.score = o.at("score").get<double>();
            } catch (const std::exception& e) {
                throw ValidationError(where + ": " + e.what());
            }
            cells.push_back(std::move(c));
        }
    }
    validate_cells(cells, opts, path);
    return cells;
}

void save_scores_csv(const std::string& path, const std::vector<ScoreCell>& cells) {
    CsvTable t;
    t.header = {"model", "benchmark", "task", "language", "direction", "score"};
    for (const auto& c : cells) {
        t.rows.push_back({c.model, c.benchmark, c.task, c.language, c.direction,
                          fmt_full(c.score)});
    }
    write_csv_atomic(path, t);
}

FeatureTable load_features(const std::string& languages_csv,
                           const std::string& model_language_csv) {
    FeatureTable ft;
    {
        CsvTable t = read_csv(languages_csv);
        const int cl = t.column("language"), cs = t.column("script"), cf = t.column("family"),
                  cr = t.column("resource_class"), c1 = t.column("syn_dist_en"),
                  c2 = t.column("phon_dist_en"), c3 = t.column("geo_dist_en");
        if (cl < 0 || cs < 0 || cf < 0 || cr < 0 || c1 < 0 || c2 < 0 || c3 < 0) {
            throw ValidationError(languages_csv +
                                  ": header must be language,script,family,resource_class,"
                                  "syn_dist_en,phon_dist_en,geo_dist_en");
        }
        std::size_t lineno = 1;
        for (const auto& r : t.rows) {
            ++lineno;
            const std::string where = languages_csv + ":" + std::to_string(lineno);
            LanguageFeatures f;
            f.script = r[cs];
            f.family = r[cf];
            f.resource_class = parse_int(r[cr], where + " column resource_class");
            if (f.resource_class < 1 || f.resource_class > 5) {
                throw ValidationError(where + ": resource_class " +
                                      std::to_string(f.resource_class) + " outside 1-5");
            }
            f.syn_dist_en = parse_double(r[c1], where + " column syn_dist_en");
            f.phon_dist_en = parse_double(r[c2], where + " column phon_dist_en");
            f.geo_dist_en = parse_double(r[c3], where + " column geo_dist_en");
            if (!ft.languages.emplace(r[cl], f).second) {
                throw ValidationError(where + ": duplicate language " + r[cl]);
            }
        }
    }
    {
        CsvTable t = read_csv(model_language_csv);
        const int cm = t.column("model"), cl = t.column("language"),
                  cf = t.column("fertility"), cr = t.column("repr_sim_en");
        if (cm < 0 || cl < 0 || cf < 0 || cr < 0) {
            throw ValidationError(model_language_csv +
                                  ": header must be model,language,fertility,repr_sim_en");
        }
        std::size_t lineno = 1;
        for (const auto& r : t.rows) {
            ++lineno;
            const std::string where = model_language_csv + ":" + std::to_string(lineno);
            ModelLanguageFeatures f;
            f.fertility = parse_double(r[cf], where + " column fertility");
            if (!(f.fertility > 0.0)) {
                throw ValidationError(where + ": fertility must be > 0");
            }
            f.repr_sim_en = parse_double(r[cr], where + " column repr_sim_en");
            if (!(f.repr_sim_en >= 0.0 && f.repr_sim_en <= 1.0)) {
                throw ValidationError(where + ": repr_sim_en outside [0,1]");
            }
            if (!ft.model_language.emplace(std::make_pair(r[cm], r[cl]), f).second) {
                throw ValidationError(where + ": duplicate (model, language) pair");
            }
        }
    }
    return ft;
}

std::vector<ScoreCell> filter_bucket(const std::vector<ScoreCell>& cells,
                                     const std::map<std::string, std::string>& bucket_map,
                                     const std::string& bucket) {
    std::vector<ScoreCell> out;
    for (const auto& c : cells) {
        auto it = bucket_map.find(c.benchmark);
        if (it == bucket_map.end()) {
            throw ValidationError("benchmark '" + c.benchmark + "' has no bucket mapping");
        }
        if (it->second == bucket) out.push_back(c);
    }
    return out;
}

namespace {

std::vector<double> zscore(const std::vector<double>& xs, const std::string& name) {
    const double m = mean_of(xs);
    const double sd = sample_sd(xs);
    if (!(sd > 0.0)) {
        throw ValidationError("feature '" + name + "' is constant over the frame; " +
                              "standardization undefined");
    }
    std::vector<double> z(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) z[i] = (xs[i] - m) / sd;
    return z;
}

}  // namespace

FitFrame build_fit_frame(const std::vector<ScoreCell>& cells, const FeatureTable& features,
                         const std::string& bucket) {
    // Keep rows with complete features, canonical (model, task, language) order.
    std::vector<const ScoreCell*> kept;
    FitFrame fr;
    fr.bucket = bucket;
    for (const auto& c : cells) {
        const auto lit = features.languages.find(c.language);
        const auto mit = features.model_language.find(std::make_pair(c.model, c.language));
        if (lit == features.languages.end()) {
            fr.drop_log.push_back("dropped (" + c.model + ", " + c.effective_task() + ", " +
                                  c.language + "): no language features");
            ++fr.dropped_rows;
            continue;
        }
        if (mit == features.model_language.end()) {
            fr.drop_log.push_back("dropped (" + c.model + ", " + c.effective_task() + ", " +
                                  c.language + "): no (model, language) features");
            ++fr.dropped_rows;
            continue;
        }
        kept.push_back(&c);
    }
    std::sort(kept.begin(), kept.end(), [](const ScoreCell* a, const ScoreCell* b) {
        if (a->model != b->model) return a->model < b->model;
        const std::string ta = a->effective_task(), tb = b->effective_task();
        if (ta != tb) return ta < tb;
        return a->language < b->language;
    });

    for (const ScoreCell* c : kept) {
        const auto& lf = features.languages.at(c->language);
        const auto& mf = features.model_language.at(std::make_pair(c->model, c->language));
        fr.model.push_back(c->model);
        fr.benchmark.push_back(c->benchmark);
        fr.task.push_back(c->effective_task());
        fr.language.push_back(c->language);
        fr.script.push_back(lf.script);
        fr.family.push_back(lf.family);
        fr.resource_class.push_back(lf.resource_class);
        fr.syn_dist_en.push_back(lf.syn_dist_en);
        fr.phon_dist_en.push_back(lf.phon_dist_en);
        fr.geo_dist_en.push_back(lf.geo_dist_en);
        fr.fertility.push_back(mf.fertility);
        fr.repr_sim_en.push_back(mf.repr_sim_en);
        fr.score.push_back(c->score);
    }
    if (fr.n() == 0) throw ValidationError("fit frame for bucket '" + bucket + "' is empty");

    std::vector<double> rc(fr.n());
    for (std::size_t i = 0; i < fr.n(); ++i) rc[i] = static_cast<double>(fr.resource_class[i]);
    fr.resource_class_z = zscore(rc, "resource_class");
    fr.syn_dist_en_z = zscore(fr.syn_dist_en, "syn_dist_en");
    fr.phon_dist_en_z = zscore(fr.phon_dist_en, "phon_dist_en");
    fr.geo_dist_en_z = zscore(fr.geo_dist_en, "geo_dist_en");
    fr.fertility_z = zscore(fr.fertility, "fertility");
    fr.repr_sim_en_z = zscore(fr.repr_sim_en, "repr_sim_en");
    return fr;
}

FitFrame znorm_within_cell(FitFrame frame) {
    const std::size_t n = frame.n();
    frame.score_z.assign(n, 0.0);
    frame.cell_flagged.assign(n, 0);

    std::map<std::pair<std::string, std::string>, std::vector<std::size_t>> cells;
    for (std::size_t i = 0; i < n; ++i) {
        cells[{frame.benchmark[i], frame.task[i]}].push_back(i);
    }
    for (const auto& [key, rows] : cells) {
        std::vector<double> vals;
        vals.reserve(rows.size());
        for (std::size_t i : rows) vals.push_back(frame.score[i]);
        const double sd = sample_sd(vals);
        if (rows.size() < 2 || !(sd > 0.0)) {
            for (std::size_t i : rows) frame.cell_flagged[i] = 1;
            continue;
        }
        const double m = mean_of(vals);
        for (std::size_t i : rows) frame.score_z[i] = (frame.score[i] - m) / sd;
    }
    return frame;
}

const std::vector<double>* FitFrame::continuous_column(const std::string& name) const {
    if (name == "score") return &score;
    if (name == "score_z") return score_z.empty() ? nullptr : &score_z;
    if (name == "resource_class_z" || name == "joshi_class_z") return &resource_class_z;
    if (name == "syn_dist_en_z") return &syn_dist_en_z;
    if (name == "phon_dist_en_z") return &phon_dist_en_z;
    if (name == "geo_dist_en_z") return &geo_dist_en_z;
    if (name == "fertility_z") return &fertility_z;
    if (name == "repr_sim_en_z") return &repr_sim_en_z;
    auto it = extra_columns.find(name);
    if (it != extra_columns.end()) return &it->second;
    return nullptr;
}

const std::vector<std::string>* FitFrame::categorical_column(const std::string& name) const {
    if (name == "model") return &model;
    if (name == "benchmark") return &benchmark;
    if (name == "task") return &task;
    if (name == "language") return &language;
    if (name == "script") return &script;
    if (name == "family") return &family;
    return nullptr;
}

std::vector<std::string> FitFrame::continuous_names() const {
    std::vector<std::string> out = {"score",        "resource_class_z", "joshi_class_z",
                                    "syn_dist_en_z", "phon_dist_en_z",  "geo_dist_en_z",
                                    "fertility_z",   "repr_sim_en_z"};
    if (!score_z.empty()) out.push_back("score_z");
    for (const auto& [k, v] : extra_columns) out.push_back(k);
    return out;
}

std::vector<std::string> FitFrame::categorical_names() const {
    return {"model", "benchmark", "task", "language", "script", "family"};
}

}  // namespace disparity
