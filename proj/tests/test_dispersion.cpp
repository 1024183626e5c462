#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "disparity/common.hpp"
#include "disparity/dispersion.hpp"
#include "disparity/rng.hpp"
#include "oracles.hpp"
#include "testutil.hpp"

using namespace disparity;

TEST_CASE("gini hand cases") {
    CHECK(gini({0.5, 0.5, 0.5}) == 0.0);
    CHECK(gini({0.0, 1.0}) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(gini({0.3}) == 0.0);
    CHECK_THROWS_AS(gini({0.0, 0.0}), ValidationError);
    CHECK_THROWS_AS(gini({}), ValidationError);
}

TEST_CASE("gini properties and sorted-form oracle") {
    Rng rng(21);
    for (int it = 0; it < 60; ++it) {
        const std::size_t n = 2 + rng.uniform_int(49);
        std::vector<double> xs(n);
        for (auto& v : xs) v = 0.05 + rng.uniform();
        const double g = gini(xs);
        CHECK(std::fabs(g - oracle::gini_sorted(xs)) < 1e-12);

        // Scale invariance.
        std::vector<double> scaled = xs;
        for (auto& v : scaled) v *= 3.25;
        CHECK(gini(scaled) == doctest::Approx(g).epsilon(1e-12));

        // Translation towards equality.
        std::vector<double> shifted = xs;
        for (auto& v : shifted) v += 0.5;
        CHECK(gini(shifted) <= g + 1e-15);
    }
}

TEST_CASE("sen welfare") {
    CHECK(sen_welfare(0.741, 0.064) == doctest::Approx(0.693576).epsilon(1e-12));
    CHECK(sen_welfare(0.6, 0.0) == 0.6);
    CHECK(sen_welfare(0.6, 1.0) == 0.0);
    CHECK_THROWS_AS(sen_welfare(0.5, 1.5), ValidationError);
    // Strictly decreasing in gini for fixed positive mean.
    double prev = sen_welfare(0.7, 0.0);
    for (double g = 0.1; g <= 1.0; g += 0.1) {
        const double s = sen_welfare(0.7, g);
        CHECK(s < prev);
        prev = s;
    }
}

TEST_CASE("spread stats") {
    const auto s = spread_stats({0.4, 0.6});
    CHECK(s.cv == doctest::Approx(0.2828427).epsilon(1e-6));
    CHECK(s.gap_rel == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(s.gap_z == doctest::Approx(1.4142136).epsilon(1e-6));
    CHECK_FALSE(s.degenerate);

    const auto d = spread_stats({0.5, 0.5, 0.5});
    CHECK(d.degenerate);
    CHECK(d.cv == 0.0);
    CHECK(d.gap_rel == 0.0);
    CHECK(d.gap_z == 0.0);

    CHECK_THROWS_AS(spread_stats({0.4}), ValidationError);

    // Scale invariance of all three.
    Rng rng(4);
    std::vector<double> xs(12);
    for (auto& v : xs) v = 0.1 + rng.uniform();
    const auto a = spread_stats(xs);
    for (auto& v : xs) v *= 7.5;
    const auto b = spread_stats(xs);
    CHECK(a.cv == doctest::Approx(b.cv).epsilon(1e-12));
    CHECK(a.gap_rel == doctest::Approx(b.gap_rel).epsilon(1e-12));
    CHECK(a.gap_z == doctest::Approx(b.gap_z).epsilon(1e-12));
}

TEST_CASE("model bucket table") {
    testutil::CubeSpec spec;
    spec.n_models = 2;
    spec.n_tasks = 2;
    spec.n_langs = 8;
    spec.clamp_scores = true;
    const auto frame = testutil::make_frame(spec, 31, "nlu");
    const auto table = model_bucket_table(frame);
    REQUIRE(table.rows.size() == 2);
    for (const auto& r : table.rows) {
        CHECK(r.bucket == "nlu");
        CHECK(r.cells == 2);
        CHECK(r.gini >= 0.0);
        CHECK(r.gini <= 1.0);
        CHECK(std::isfinite(r.gap_z));
    }

    // Single-cell bucket: the row equals the cell indices and sen = mu(1-g).
    FitFrame single = frame;
    // Restrict to one model and one benchmark by rebuilding from two rows.
    testutil::CubeSpec tiny;
    tiny.n_models = 1;
    tiny.n_tasks = 1;
    tiny.n_langs = 2;
    tiny.clamp_scores = true;
    const auto f1 = testutil::make_frame(tiny, 5, "nlu");
    const auto t1 = model_bucket_table(f1);
    REQUIRE(t1.rows.size() == 1);
    const auto& row = t1.rows[0];
    CHECK(row.sen == doctest::Approx(row.mu * (1.0 - row.gini)).epsilon(1e-12));
    const double g = gini(f1.score);
    CHECK(row.gini == doctest::Approx(g).epsilon(1e-12));
}

TEST_CASE("unweighted averaging across benchmarks") {
    // Two benchmarks with different language spreads; the bucket gini is the
    // plain mean of the two cell ginis.
    FeatureTable ft;
    for (int l = 0; l < 4; ++l) {
        LanguageFeatures f;
        f.script = "Latin";
        f.family = "F";
        f.resource_class = 1 + l;
        f.syn_dist_en = 0.1 * l;
        f.phon_dist_en = 0.2 + 0.1 * l;
        f.geo_dist_en = 0.3 + 0.1 * l;
        ft.languages["l" + std::to_string(l)] = f;
        ModelLanguageFeatures mf;
        mf.fertility = 1.0 + l;
        mf.repr_sim_en = 0.2 + 0.1 * l;
        ft.model_language[{"m", "l" + std::to_string(l)}] = mf;
    }
    std::vector<ScoreCell> cells;
    const double b1[4] = {0.2, 0.4, 0.6, 0.8};
    const double b2[4] = {0.5, 0.5, 0.6, 0.6};
    for (int l = 0; l < 4; ++l) {
        cells.push_back({"m", "b1", "b1", "l" + std::to_string(l), "", b1[l]});
        cells.push_back({"m", "b2", "b2", "l" + std::to_string(l), "", b2[l]});
    }
    const auto frame = build_fit_frame(cells, ft, "nlu");
    const auto table = model_bucket_table(frame);
    REQUIRE(table.rows.size() == 1);
    const double g1 = gini({0.2, 0.4, 0.6, 0.8});
    const double g2 = gini({0.5, 0.5, 0.6, 0.6});
    CHECK(table.rows[0].gini == doctest::Approx(0.5 * (g1 + g2)).epsilon(1e-12));
}

TEST_CASE("tier means") {
    testutil::CubeSpec spec;
    spec.n_models = 3;
    spec.n_tasks = 2;
    spec.n_langs = 10;
    spec.clamp_scores = true;
    const auto cube = testutil::make_cube(spec, 77);
    const auto frame = build_fit_frame(cube.cells, cube.features, "nlu");
    std::map<std::string, int> tiers;
    for (const auto& [lang, f] : cube.features.languages) tiers[lang] = f.resource_class;

    const auto tm = tier_means(frame, tiers);
    double pooled_mean = 0.0;
    std::size_t pooled_n = 0;
    for (std::size_t k = 0; k < 5; ++k) {
        pooled_mean += tm.pooled[k].mean * static_cast<double>(tm.pooled[k].count);
        pooled_n += tm.pooled[k].count;
    }
    CHECK(pooled_n == frame.n());
    CHECK(pooled_mean / static_cast<double>(pooled_n) ==
          doctest::Approx(mean_of(frame.score)).epsilon(1e-12));

    // Constant scores give constant tier means.
    FitFrame flat = frame;
    for (auto& s : flat.score) s = 0.5;
    const auto tm2 = tier_means(flat, tiers);
    for (std::size_t k = 0; k < 5; ++k) {
        if (tm2.pooled[k].count > 0) {
            CHECK(tm2.pooled[k].mean == doctest::Approx(0.5).epsilon(1e-12));
        }
    }

    std::map<std::string, int> missing = tiers;
    missing.erase(missing.begin());
    CHECK_THROWS_AS(tier_means(frame, missing), ValidationError);
}
