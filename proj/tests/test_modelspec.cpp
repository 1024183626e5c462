#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "disparity/decompose.hpp"
#include "disparity/modelspec.hpp"
#include "disparity/rng.hpp"
#include "testutil.hpp"

using namespace disparity;

TEST_CASE("parse the published stage formulas") {
    const auto s1 = parse_formula("score ~ 1 + C(task) + (1|language) + (1|model)");
    CHECK(s1.response == "score");
    CHECK(s1.intercept);
    CHECK(s1.continuous.empty());
    REQUIRE(s1.categoricals.size() == 1);
    CHECK(s1.categoricals[0] == "task");
    REQUIRE(s1.random_terms.size() == 2);
    CHECK(s1.random_terms[0].group_name() == "language");
    CHECK(s1.random_terms[1].group_name() == "model");

    const auto s3 = parse_formula(StageFormulas::defaults().stage3);
    CHECK(s3.continuous.size() == 6);
    CHECK(s3.categoricals.size() == 3);
    REQUIRE(s3.random_terms.size() == 6);
    const auto& slope = s3.random_terms.back();
    CHECK(slope.slope == "fertility_z");
    CHECK_FALSE(slope.intercept);
    CHECK(slope.group_name() == "model");
    CHECK(slope.name() == "fertility_z|model");

    const auto& colon = s3.random_terms[2];
    CHECK(colon.group_factors.size() == 2);
    CHECK(colon.group_name() == "model:language");

    const auto minimal = parse_formula("y ~ 1");
    CHECK(minimal.intercept);
    CHECK(minimal.continuous.empty());
}

TEST_CASE("parse errors carry positions") {
    CHECK_THROWS_AS(parse_formula("score 1 + x"), ParseError);       // missing ~
    CHECK_THROWS_AS(parse_formula("score ~ (1|)"), ParseError);       // empty group
    CHECK_THROWS_AS(parse_formula("score ~ x + $"), ParseError);      // unknown token
    CHECK_THROWS_AS(parse_formula("score ~ x + x"), ParseError);      // duplicate
    CHECK_THROWS_AS(parse_formula("score ~ (2|g)"), ParseError);      // bad random term
    CHECK_THROWS_AS(parse_formula("score ~ (0 + |g)"), ParseError);   // missing slope
    CHECK_THROWS_AS(parse_formula("score ~ (1|a:b:c)"), ParseError);  // three factors
}

TEST_CASE("canonical print round-trips") {
    const std::string formulas[] = {
        "score ~ 1 + C(task) + (1|language) + (1|model)",
        StageFormulas::defaults().stage2,
        StageFormulas::defaults().stage3,
        "y ~ 1",
        "y ~ fertility_z + (0 + fertility_z|model)",
    };
    for (const auto& f : formulas) {
        const auto spec = parse_formula(f);
        const auto printed = spec.print();
        const auto reparsed = parse_formula(printed);
        CHECK(reparsed.print() == printed);
        CHECK(reparsed.response == spec.response);
        CHECK(reparsed.continuous == spec.continuous);
        CHECK(reparsed.categoricals == spec.categoricals);
        CHECK(reparsed.random_terms.size() == spec.random_terms.size());
    }
}

TEST_CASE("validate against a frame") {
    testutil::CubeSpec cs;
    cs.n_models = 3;
    cs.n_tasks = 2;
    cs.n_langs = 10;
    cs.clamp_scores = true;
    const auto frame = testutil::make_frame(cs, 3);

    const auto ok = validate(parse_formula(StageFormulas::defaults().stage2), frame);
    CHECK(ok.warnings.empty());

    CHECK_THROWS_WITH_AS(
        static_cast<void>(validate(parse_formula("score ~ 1 + tokens_z"), frame)),
        doctest::Contains("tokens_z"), ValidationError);
    CHECK_THROWS_WITH_AS(
        static_cast<void>(validate(parse_formula("points ~ 1"), frame)),
        doctest::Contains("points"), ValidationError);
    CHECK_THROWS_AS(static_cast<void>(validate(parse_formula("score ~ (1|region)"), frame)),
                    ValidationError);

    // A single-level factor is dropped with a warning.
    FitFrame mono = frame;
    for (auto& s : mono.script) s = "Latin";
    const auto checked = validate(parse_formula("score ~ 1 + C(script)"), mono);
    REQUIRE(checked.warnings.size() == 1);
    CHECK(checked.spec.categoricals.empty());
    const auto design = build_design(checked, mono);
    CHECK(design.p == 1);  // intercept only
}

TEST_CASE("design matrices: treatment coding and groups") {
    testutil::CubeSpec cs;
    cs.n_models = 2;
    cs.n_tasks = 3;
    cs.n_langs = 4;
    cs.clamp_scores = true;
    const auto frame = testutil::make_frame(cs, 9);

    // Intercept-only design.
    const auto d0 = build_design(validate(parse_formula("score ~ 1"), frame), frame);
    CHECK(d0.p == 1);
    for (std::size_t i = 0; i < d0.n; ++i) CHECK(d0.x(i, 0) == 1.0);

    // Treatment coding: reference level is the lexicographically first.
    const auto d1 = build_design(validate(parse_formula("score ~ 1 + C(task)"), frame), frame);
    CHECK(d1.p == 3);  // intercept + 2 contrasts for 3 tasks
    CHECK(d1.col_names[1] == "task[task1]");
    CHECK(d1.col_names[2] == "task[task2]");
    for (std::size_t i = 0; i < d1.n; ++i) {
        const double expect1 = frame.task[i] == "task1" ? 1.0 : 0.0;
        CHECK(d1.x(i, 1) == expect1);
    }
    CHECK(d1.rank == d1.p);

    // Colon group over observed pairs only.
    const auto d2 = build_design(
        validate(parse_formula("score ~ 1 + (1|model:language)"), frame), frame);
    REQUIRE(d2.terms.size() == 1);
    CHECK(d2.terms[0].levels.size() == 8);  // 2 models x 4 languages all observed
    // CSR covers every row exactly once.
    CHECK(d2.terms[0].rows.size() == d2.n);

    // Sparse crossing: drop one (model, language) pair and the group count
    // follows the observed pairs.
    testutil::CubeSpec cs2 = cs;
    auto cube = testutil::make_cube(cs2, 10);
    std::vector<ScoreCell> cells;
    for (const auto& c : cube.cells) {
        if (c.model == "model0" && c.language == "lg00") continue;
        cells.push_back(c);
    }
    const auto partial = build_fit_frame(cells, cube.features, "nlu");
    const auto d3 = build_design(
        validate(parse_formula("score ~ 1 + (1|model:language)"), partial), partial);
    CHECK(d3.terms[0].levels.size() == 7);

    // Random slope term carries the covariate.
    const auto d4 = build_design(
        validate(parse_formula("score ~ 1 + (0 + fertility_z|model)"), frame), frame);
    REQUIRE(d4.terms.size() == 1);
    CHECK(d4.terms[0].has_slope);
    CHECK(d4.terms[0].slope.size() == frame.n());
    CHECK(d4.terms[0].name == "fertility_z|model");
}

TEST_CASE("row order tracks the frame and confounding is reported") {
    testutil::CubeSpec cs;
    cs.n_models = 2;
    cs.n_tasks = 2;
    cs.n_langs = 6;
    cs.clamp_scores = true;
    const auto frame = testutil::make_frame(cs, 21);
    const auto d = build_design(
        validate(parse_formula(StageFormulas::defaults().stage2), frame), frame);
    CHECK(d.n == frame.n());
    for (std::size_t i = 0; i < d.n; ++i) {
        CHECK(d.y[i] == frame.score[i]);
    }

    // Duplicate a factor through an alias column: joshi_class_z with
    // resource_class_z yields identical columns, hence rank deficiency.
    const auto dup = build_design(
        validate(parse_formula("score ~ 1 + joshi_class_z + resource_class_z"), frame), frame);
    CHECK(dup.rank < dup.p);
    bool warned = false;
    for (const auto& w : dup.warnings) {
        if (w.find("rank deficient") != std::string::npos) warned = true;
    }
    CHECK(warned);
}
