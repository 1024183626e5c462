#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <unistd.h>

#include "disparity/decompose.hpp"
#include "disparity/rng.hpp"
#include "testutil.hpp"

using namespace disparity;
namespace fs = std::filesystem;

namespace {

// Hand-assembled FitResult for exercising the derived-quantity math without
// running the sampler.
FitResult fake_fit(std::vector<std::string> names, std::vector<Transform> transforms,
                   const std::vector<std::vector<double>>& draw_rows, DesignMatrices design) {
    FitResult f;
    f.stage = "3";
    f.design = std::move(design);
    auto& d = f.draws;
    d.names = std::move(names);
    d.transforms = std::move(transforms);
    d.n_chains = 1;
    d.n_draws = draw_rows.size();
    d.dim = d.names.size();
    for (const auto& row : draw_rows) {
        d.draws.insert(d.draws.end(), row.begin(), row.end());
    }
    if (d.n_draws >= 4) f.summaries = summarize(d);
    return f;
}

FitFrame tiny_frame(const std::vector<double>& scores,
                    const std::vector<std::string>& benchmarks) {
    FitFrame fr;
    fr.bucket = "t";
    for (std::size_t i = 0; i < scores.size(); ++i) {
        fr.model.push_back("m");
        fr.benchmark.push_back(benchmarks[i]);
        fr.task.push_back(benchmarks[i]);
        fr.language.push_back("l" + std::to_string(i));
        fr.script.push_back("Latin");
        fr.family.push_back("IE");
        fr.resource_class.push_back(1 + static_cast<int>(i % 5));
        fr.syn_dist_en.push_back(0.1);
        fr.phon_dist_en.push_back(0.1);
        fr.geo_dist_en.push_back(0.1);
        fr.fertility.push_back(1.5);
        fr.repr_sim_en.push_back(0.5);
        fr.resource_class_z.push_back(0.0);
        fr.syn_dist_en_z.push_back(0.0);
        fr.phon_dist_en_z.push_back(0.0);
        fr.geo_dist_en_z.push_back(0.0);
        fr.fertility_z.push_back(0.0);
        fr.repr_sim_en_z.push_back(0.0);
        fr.score.push_back(scores[i]);
    }
    return fr;
}

DesignMatrices single_column_design(const std::string& col_name,
                                    const std::vector<double>& x,
                                    const std::vector<double>& y) {
    DesignMatrices d;
    d.n = x.size();
    d.p = 1;
    d.X = x;
    d.y = y;
    d.col_names = {col_name};
    d.continuous_cols = {0};
    return d;
}

}  // namespace

TEST_CASE("r2_ling point identities") {
    const auto a = r2_ling_from_draws({0.078}, {0.035}, 1);
    CHECK(a.mean == doctest::Approx(0.798653).epsilon(1e-4));

    const auto b = r2_ling_from_draws({0.014}, {0.304}, 1);
    CHECK(b.mean < -400.0);

    // Identical constant draws in both fits: no reduction.
    const std::vector<double> flat(50, 0.08);
    const auto c = r2_ling_from_draws(flat, flat, 7);
    CHECK(c.mean == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(c.lo == doctest::Approx(0.0).epsilon(1e-12));

    // Identically-zero stage-2 draws: full reduction.
    Rng rng(3);
    std::vector<double> s1(100);
    for (auto& v : s1) v = 0.05 + 0.01 * rng.uniform();
    const auto d = r2_ling_from_draws(s1, std::vector<double>(100, 0.0), 9);
    CHECK(d.mean == doctest::Approx(1.0).epsilon(1e-12));

    // Zero sigma draws in stage 1 are skipped and counted.
    const auto e = r2_ling_from_draws({0.0, 0.08}, {0.03, 0.03}, 5);
    CHECK(e.skipped == 1);
    CHECK(e.pairs == 1);
}

TEST_CASE("variance shares: hand computation and closure") {
    const std::vector<std::string> names = {
        "sigma[model]",         "sigma[task:model]", "sigma[fertility_z|model]",
        "sigma[model:language]", "sigma[task:language]", "sigma[language]", "sigma"};
    const std::vector<Transform> tr(7, Transform::log_exp);
    const double sig[7] = {0.149, 0.061, 0.015, 0.044, 0.031, 0.017, 0.042};
    std::vector<double> row(7);
    for (int i = 0; i < 7; ++i) row[i] = std::log(sig[i]);
    DesignMatrices d;
    d.n = 2;  // unused here
    auto fit = fake_fit(names, tr, {row}, std::move(d));

    const auto shares = variance_shares(fit);
    REQUIRE(shares.size() == 7);
    CHECK(shares[0].component == "model");
    CHECK(shares[0].share_mean == doctest::Approx(0.713928).epsilon(1e-4));
    CHECK(shares.back().component == "residual");
    double total = 0.0;
    for (const auto& s : shares) total += s.share_mean;
    CHECK(std::fabs(total - 1.0) < 1e-12);

    // Two equal components split evenly.
    auto fit2 = fake_fit({"sigma[model]", "sigma[language]", "sigma"},
                         std::vector<Transform>(3, Transform::log_exp),
                         {{std::log(1.0), std::log(1.0), std::log(1e-9)}}, DesignMatrices{});
    const auto s2 = variance_shares(fit2);
    CHECK(s2[0].share_mean == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("coefficient markers") {
    // Credibly positive, borderline, and centered coefficients.
    Rng rng(11);
    std::vector<std::vector<double>> rows;
    for (int i = 0; i < 2000; ++i) {
        rows.push_back({0.065 + 0.008 * rng.normal(),   // star: HDI well above 0
                        0.02 + 0.02 * rng.normal(),     // dagger-ish: boundary near 0
                        0.0 + 0.05 * rng.normal()});    // centered: no marker
    }
    DesignMatrices d;
    d.n = 4;
    d.p = 3;
    d.col_names = {"repr_sim_en_z", "resource_class_z", "syn_dist_en_z"};
    d.continuous_cols = {0, 1, 2};
    d.X.assign(12, 0.0);
    auto fit = fake_fit({"b[repr_sim_en_z]", "b[resource_class_z]", "b[syn_dist_en_z]"},
                        std::vector<Transform>(3, Transform::identity), rows, std::move(d));
    const auto table = coefficient_table(fit);
    REQUIRE(table.size() == 3);
    CHECK(table[0].marker == "*");
    CHECK(table[2].marker == "");
    CHECK(table[1].marker != "");
}

TEST_CASE("language potential") {
    // One language row; mu=0.5, gamma.x = 0.1, alpha = -0.05 -> 0.55.
    FitFrame frame = tiny_frame({0.5}, {"b"});
    frame.resource_class_z = {0.5};

    DesignMatrices d;
    d.n = 1;
    d.p = 2;
    d.has_intercept = true;
    d.col_names = {"Intercept", "joshi_class_z"};
    d.continuous_cols = {1};
    d.X = {1.0, 0.5};  // column-major: intercept col then joshi col
    RandomTermDesign td;
    td.name = "language";
    td.group = {0};
    td.levels = {"l0"};
    td.rows_offset = {0, 1};
    td.rows = {0};
    d.terms.push_back(td);

    const double sigma_alpha = 0.05;
    std::vector<double> row = {0.5, 0.2, std::log(sigma_alpha), -1.0};
    auto fit = fake_fit({"b[Intercept]", "b[joshi_class_z]", "sigma[language]",
                         "z[language][l0]"},
                        {Transform::identity, Transform::identity, Transform::log_exp,
                         Transform::identity},
                        {row}, std::move(d));
    const auto lp = language_potential(fit, frame);
    REQUIRE(lp.size() == 1);
    CHECK(lp[0].mean == doctest::Approx(0.5 + 0.2 * 0.5 - 0.05).epsilon(1e-12));

    // Null model: all coefficients and offsets at zero give LP = mu.
    std::vector<double> null_row = {0.5, 0.0, -40.0, 0.0};
    FitFrame frame2 = tiny_frame({0.5}, {"b"});
    frame2.resource_class_z = {0.5};
    DesignMatrices d2;
    d2.n = 1;
    d2.p = 2;
    d2.has_intercept = true;
    d2.col_names = {"Intercept", "joshi_class_z"};
    d2.continuous_cols = {1};
    d2.X = {1.0, 0.5};
    d2.terms.push_back(td);
    auto fit2 = fake_fit({"b[Intercept]", "b[joshi_class_z]", "sigma[language]",
                          "z[language][l0]"},
                         {Transform::identity, Transform::identity, Transform::log_exp,
                          Transform::identity},
                         {null_row}, std::move(d2));
    const auto lp2 = language_potential(fit2, frame2);
    CHECK(lp2[0].mean == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("lp ordering is shift invariant") {
    // Adding a constant to the intercept shifts every LP equally.
    testutil::CubeSpec cs;
    cs.n_models = 1;
    cs.n_tasks = 1;
    cs.n_langs = 5;
    cs.clamp_scores = true;
    const auto frame = testutil::make_frame(cs, 3);

    DesignMatrices d;
    d.n = frame.n();
    d.p = 1;
    d.has_intercept = true;
    d.col_names = {"Intercept"};
    d.X.assign(d.n, 1.0);
    RandomTermDesign td;
    td.name = "language";
    td.levels = {"lg00", "lg01", "lg02", "lg03", "lg04"};
    for (std::size_t i = 0; i < d.n; ++i) td.group.push_back(static_cast<std::int32_t>(i));
    td.rows_offset = {0, 1, 2, 3, 4, 5};
    td.rows = {0, 1, 2, 3, 4};
    d.terms.push_back(td);

    std::vector<std::string> names = {"b[Intercept]", "sigma[language]"};
    std::vector<Transform> tr = {Transform::identity, Transform::log_exp};
    for (const auto& lvl : td.levels) {
        names.push_back("z[language][" + lvl + "]");
        tr.push_back(Transform::identity);
    }
    Rng rng(9);
    std::vector<double> row = {0.5, std::log(0.08)};
    for (int i = 0; i < 5; ++i) row.push_back(rng.normal());

    auto fit = fake_fit(names, tr, {row}, DesignMatrices(d));
    const auto base = language_potential(fit, frame);

    auto row2 = row;
    row2[0] += 0.37;
    auto fit2 = fake_fit(names, tr, {row2}, std::move(d));
    const auto shifted = language_potential(fit2, frame);
    REQUIRE(base.size() == shifted.size());
    for (std::size_t i = 0; i < base.size(); ++i) {
        CHECK(base[i].language == shifted[i].language);  // same order
        CHECK(shifted[i].mean - base[i].mean == doctest::Approx(0.37).epsilon(1e-10));
    }
}

TEST_CASE("pps arithmetic") {
    const auto [p5, pw] = pps(0.6, 0.04, 0.25);
    CHECK(p5 == doctest::Approx(0.4355).epsilon(1e-12));
    CHECK(pw == doctest::Approx(0.45).epsilon(1e-12));

    const auto [a5, aw] = pps(0.7, 0.09, 0.0);
    CHECK(a5 == 0.7);
    CHECK(aw == 0.7);

    const auto [b5, bw] = pps(0.5, 0.0, 1.0);
    CHECK(b5 == 0.5);
    CHECK(bw == 0.0);

    CHECK_THROWS_AS(pps(0.5, 0.01, 1.5), ValidationError);
    CHECK_THROWS_AS(pps(0.5, -0.01, 0.5), ValidationError);

    // pps5 <= mean always; equality iff lds*var = 0.
    Rng rng(31);
    for (int i = 0; i < 50; ++i) {
        const double mean = rng.uniform();
        const double var = rng.uniform() * 0.2;
        const double lds = rng.uniform();
        const auto [x5, xw] = pps(mean, var, lds);
        CHECK(x5 <= mean + 1e-15);
        if (lds * var > 0.0) CHECK(x5 < mean);
        (void)xw;
    }
}

TEST_CASE("lds and mavs on constructed predictors") {
    // Noise-free language signal: predictor equals the score exactly.
    const std::vector<double> y = {0.2, 0.3, 0.4, 0.5};
    FitFrame frame = tiny_frame(y, {"b", "b", "b", "b"});
    auto fit = fake_fit({"b[repr_sim_en_z]"}, {Transform::identity}, {{1.0}},
                        single_column_design("repr_sim_en_z", y, y));
    const auto rows = pps_lds_mavs(fit, frame);
    REQUIRE(!rows.empty());
    CHECK(rows[0].level == "bucket");
    CHECK(rows[0].lds_raw == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(rows[0].mavs_raw == doctest::Approx(1.0).epsilon(1e-12));
    CHECK_FALSE(rows[0].floor_cell);
    CHECK(rows[0].pps5 <= rows[0].mean_y);

    // Zeroed coefficient: no language-attributable variance.
    auto fit0 = fake_fit({"b[repr_sim_en_z]"}, {Transform::identity}, {{0.0}},
                         single_column_design("repr_sim_en_z", y, y));
    const auto rows0 = pps_lds_mavs(fit0, frame);
    CHECK(rows0[0].lds_raw == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(rows0[0].pps5 == doctest::Approx(rows0[0].mean_y).epsilon(1e-12));

    // Near-constant observed scores: floor cell, raw ratio past 1, clipped.
    const std::vector<double> y2 = {0.500, 0.505, 0.503, 0.501};
    const std::vector<double> x2 = {0.0, 1.0, -1.0, 2.0};
    FitFrame frame2 = tiny_frame(y2, {"b", "b", "b", "b"});
    auto fit2 = fake_fit({"b[repr_sim_en_z]"}, {Transform::identity}, {{1.0}},
                         single_column_design("repr_sim_en_z", x2, y2));
    const auto rows2 = pps_lds_mavs(fit2, frame2);
    CHECK(rows2[0].floor_cell);
    CHECK(rows2[0].lds_raw > 1.0);
    CHECK(rows2[0].lds_clipped == 1.0);

    CHECK_THROWS_AS(variance_ratio({0.1}, {0.1}), ValidationError);
}

TEST_CASE("per-draw lds differs from the posterior-expected default") {
    const std::vector<double> y = {0.2, 0.3, 0.4, 0.5};
    const std::vector<double> x = {-1.0, 0.0, 1.0, 2.0};
    FitFrame frame = tiny_frame(y, {"b", "b", "b", "b"});
    auto fit = fake_fit({"b[repr_sim_en_z]"}, {Transform::identity}, {{1.0}, {3.0}},
                        single_column_design("repr_sim_en_z", x, y));
    const auto mean_mode = pps_lds_mavs(fit, frame, LdsMode::posterior_mean);
    const auto draw_mode = pps_lds_mavs(fit, frame, LdsMode::per_draw);
    // Var(beta x) averages beta^2 = 5 per draw vs (mean beta)^2 = 4.
    CHECK(draw_mode[0].lds_raw / mean_mode[0].lds_raw == doctest::Approx(1.25).epsilon(1e-9));
}

TEST_CASE("logit transform") {
    CHECK(logit_clipped(0.0, 1e-3) == doctest::Approx(-6.906754779).epsilon(1e-9));
    CHECK(logit_clipped(0.5, 1e-3) == 0.0);
    CHECK(logit_clipped(0.9, 1e-3) == doctest::Approx(std::log(9.0)).epsilon(1e-12));

    // Strictly increasing and invertible inside the clipped range.
    double prev = -1e9;
    for (double s = 0.001; s <= 0.999; s += 0.007) {
        const double t = logit_clipped(s, 1e-3);
        CHECK(t > prev);
        prev = t;
        const double back = 1.0 / (1.0 + std::exp(-t));
        CHECK(std::fabs(back - s) < 1e-12);
    }
}

TEST_CASE("stage 1 fit recovers generating values on one synthetic cube") {
    testutil::CubeSpec cs;
    cs.n_models = 7;
    cs.n_tasks = 9;
    cs.n_langs = 60;
    const auto frame = testutil::make_frame(cs, 424242);

    NutsConfig cfg;
    cfg.chains = 2;
    cfg.warmup = 500;
    cfg.draws = 300;
    cfg.target_accept = 0.9;
    cfg.seed = 99;
    const auto fit = fit_stage(frame, "1", StageFormulas::defaults(), cfg);

    CHECK_FALSE(fit.diag.warn);
    const auto check_cover = [&](const std::string& name, double truth) {
        const int k = fit.param_index(name);
        REQUIRE(k >= 0);
        const auto& s = fit.summaries[static_cast<std::size_t>(k)];
        INFO(name, " hdi [", s.hdi_lo, ", ", s.hdi_hi, "] truth ", truth);
        CHECK(s.hdi_lo <= truth);
        CHECK(s.hdi_hi >= truth);
    };
    check_cover("sigma[language]", 0.08);
    check_cover("sigma[model]", 0.15);
    check_cover("sigma", 0.04);
}

TEST_CASE("fit artifacts round-trip") {
    testutil::CubeSpec cs;
    cs.n_models = 3;
    cs.n_tasks = 2;
    cs.n_langs = 8;
    cs.clamp_scores = true;
    const auto frame = testutil::make_frame(cs, 5);

    NutsConfig cfg;
    cfg.chains = 2;
    cfg.warmup = 150;
    cfg.draws = 60;
    cfg.target_accept = 0.8;
    cfg.seed = 4;
    const auto fit = fit_stage(frame, "1", StageFormulas::defaults(), cfg);

    const std::string dir =
        (fs::temp_directory_path() / ("fit_rt_" + std::to_string(::getpid()))).string();
    save_fit(fit, dir);
    const auto loaded = load_fit(dir, frame);
    CHECK(loaded.stage == fit.stage);
    CHECK(loaded.formula == fit.formula);
    REQUIRE(loaded.draws.draws.size() == fit.draws.draws.size());
    bool identical = true;
    for (std::size_t i = 0; i < fit.draws.draws.size(); ++i) {
        if (loaded.draws.draws[i] != fit.draws.draws[i]) identical = false;
    }
    CHECK(identical);
    CHECK(loaded.draws.stats[0].step_size == fit.draws.stats[0].step_size);
    fs::remove_all(dir);

    CHECK_THROWS_AS(static_cast<void>(load_fit(dir + "_missing", frame)), MissingArtifact);
}

TEST_CASE("logit refit keeps the formula and transforms the response") {
    testutil::CubeSpec cs;
    cs.n_models = 3;
    cs.n_tasks = 2;
    cs.n_langs = 8;
    cs.clamp_scores = true;
    const auto frame = testutil::make_frame(cs, 6);

    NutsConfig cfg;
    cfg.chains = 2;
    cfg.warmup = 150;
    cfg.draws = 60;
    cfg.target_accept = 0.8;
    cfg.seed = 8;
    const auto fit = fit_stage(frame, "3-logit", StageFormulas::defaults(), cfg);
    CHECK(fit.stage == "3-logit");
    CHECK(fit.formula.rfind("score_logit ~", 0) == 0);
    // Same right-hand side as stage 3: six continuous predictors.
    CHECK(coefficient_table(fit).size() == 6);

    const auto raw = fit_stage(frame, "3", StageFormulas::defaults(), cfg);
    const auto cmp = logit_sign_report(raw, fit);
    CHECK(cmp.size() == 6);
}
