#pragma once

#include <map>
#include <set>
#include <string>
#include <vector>

#include "disparity/common.hpp"

namespace disparity {

// One observation of the (model x benchmark x language) score cube.
// `task` equals the benchmark after benchmark-as-task aggregation; for
// generation data the translation direction stays a separate task, which
// effective_task() encodes as "task:direction".
struct ScoreCell {
    std::string model;
    std::string benchmark;
    std::string task;
    std::string language;
    std::string direction;  // may be empty
    double score = 0.0;

    std::string effective_task() const {
        return direction.empty() ? task : task + ":" + direction;
    }
};

struct LanguageFeatures {
    std::string script;
    std::string family;
    int resource_class = 0;  // 1..5
    double syn_dist_en = 0.0;
    double phon_dist_en = 0.0;
    double geo_dist_en = 0.0;
};

struct ModelLanguageFeatures {
    double fertility = 0.0;     // tokens per word, > 0
    double repr_sim_en = 0.0;   // in [0,1]
};

struct FeatureTable {
    std::map<std::string, LanguageFeatures> languages;
    std::map<std::pair<std::string, std::string>, ModelLanguageFeatures> model_language;
};

// Standardized tidy table for one bucket. Column-oriented; rows sorted by
// (model, task, language) so downstream outputs are byte-stable.
struct FitFrame {
    std::string bucket;

    std::vector<std::string> model, benchmark, task, language, script, family;
    std::vector<int> resource_class;
    std::vector<double> syn_dist_en, phon_dist_en, geo_dist_en, fertility, repr_sim_en;

    std::vector<double> resource_class_z, syn_dist_en_z, phon_dist_en_z, geo_dist_en_z,
        fertility_z, repr_sim_en_z;

    std::vector<double> score;
    std::vector<double> score_z;          // filled by znorm_within_cell
    std::vector<unsigned char> cell_flagged;  // degenerate z-norm cell marker

    std::size_t dropped_rows = 0;
    std::vector<std::string> drop_log;

    std::size_t n() const { return score.size(); }

    // Continuous column lookup; "joshi_class_z" resolves to resource_class_z
    // so the published formula strings validate as written.
    const std::vector<double>* continuous_column(const std::string& name) const;
    const std::vector<std::string>* categorical_column(const std::string& name) const;

    std::vector<std::string> continuous_names() const;
    std::vector<std::string> categorical_names() const;

    // Extra responses (e.g. the logit-transformed score) registered by name.
    std::map<std::string, std::vector<double>> extra_columns;
};

enum class ScoreFormat { csv, json };

struct LoadOptions {
    // Benchmarks whose scores arrive on a 0-100 scale (chrF) and are divided
    // by 100 at ingestion.
    std::set<std::string> chrf100_benchmarks;
};

std::vector<ScoreCell> load_scores(const std::string& path, ScoreFormat format,
                                   const LoadOptions& opts = {});
void save_scores_csv(const std::string& path, const std::vector<ScoreCell>& cells);

FeatureTable load_features(const std::string& languages_csv,
                           const std::string& model_language_csv);

// Keeps the cells whose benchmark maps to `bucket`; throws if a benchmark
// in the data has no bucket assignment.
std::vector<ScoreCell> filter_bucket(const std::vector<ScoreCell>& cells,
                                     const std::map<std::string, std::string>& bucket_map,
                                     const std::string& bucket);

FitFrame build_fit_frame(const std::vector<ScoreCell>& cells, const FeatureTable& features,
                         const std::string& bucket);

// Within-(benchmark, task) z-normalization of the scores; cells with fewer
// than two rows or zero spread are flagged and get score_z = 0.
FitFrame znorm_within_cell(FitFrame frame);

// Mean / sample SD (ddof = 1) on a raw vector; shared convention for all
// standardizations in the pipeline.
double mean_of(const std::vector<double>& xs);
double sample_sd(const std::vector<double>& xs);

}  // namespace disparity
