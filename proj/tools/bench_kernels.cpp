// Timing harness for the hot kernels: the posterior gradient evaluation
// (OpenMP chunked vs the serial reference) and one boosted-tree round.
// Also reports the max deviation between the two gradient paths.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "disparity/cube.hpp"
#include "disparity/decompose.hpp"
#include "disparity/gbt.hpp"
#include "disparity/modelspec.hpp"
#include "disparity/parallel.hpp"
#include "disparity/posterior.hpp"
#include "disparity/rng.hpp"

using namespace disparity;

namespace {

FitFrame synthetic_frame(std::size_t n_models, std::size_t n_tasks, std::size_t n_langs,
                         std::uint64_t seed) {
    Rng rng(seed);
    const char* scripts[] = {"Latin", "Cyrillic", "Devanagari", "Arabic"};
    const char* families[] = {"IE", "ST", "AA", "NC", "DR"};

    FeatureTable ft;
    std::vector<std::string> langs;
    for (std::size_t l = 0; l < n_langs; ++l) {
        const std::string code = "l" + std::to_string(l);
        langs.push_back(code);
        LanguageFeatures f;
        f.script = scripts[l % 4];
        f.family = families[l % 5];
        f.resource_class = static_cast<int>(l % 5) + 1;
        f.syn_dist_en = rng.uniform();
        f.phon_dist_en = rng.uniform();
        f.geo_dist_en = rng.uniform();
        ft.languages[code] = f;
    }
    std::vector<ScoreCell> cells;
    for (std::size_t m = 0; m < n_models; ++m) {
        const std::string model = "m" + std::to_string(m);
        for (const auto& lang : langs) {
            ModelLanguageFeatures mf;
            mf.fertility = 1.0 + 3.0 * rng.uniform();
            mf.repr_sim_en = rng.uniform();
            ft.model_language[{model, lang}] = mf;
        }
        for (std::size_t t = 0; t < n_tasks; ++t) {
            for (const auto& lang : langs) {
                ScoreCell c;
                c.model = model;
                c.benchmark = c.task = "t" + std::to_string(t);
                c.language = lang;
                c.score = 0.2 + 0.6 * rng.uniform();
                cells.push_back(c);
            }
        }
    }
    return build_fit_frame(cells, ft, "bench");
}

double now_ms() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double, std::milli>(clock::now().time_since_epoch()).count();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"kernel timing: OpenMP vs serial reference"};
    std::size_t n_models = 8, n_tasks = 12, n_langs = 80;
    int reps = 50;
    app.add_option("--models", n_models, "synthetic model count");
    app.add_option("--tasks", n_tasks, "synthetic task count");
    app.add_option("--languages", n_langs, "synthetic language count");
    app.add_option("--reps", reps, "gradient evaluations per timing");
    CLI11_PARSE(app, argc, argv);

    const auto frame = synthetic_frame(n_models, n_tasks, n_langs, 7);
    const auto spec = parse_formula(StageFormulas::defaults().stage3);
    const auto checked = validate(spec, frame);
    const auto design = build_design(checked, frame);
    Posterior post(design, PriorSpec::auto_scaled(design));
    auto ws = post.make_workspace();

    const std::size_t dim = post.layout().dim;
    std::vector<double> theta = post.default_init();
    Rng rng(11);
    for (auto& v : theta) v += 0.05 * rng.normal();
    std::vector<double> grad_omp(dim), grad_ref(dim);

    std::printf("rows=%zu fixed_cols=%zu params=%zu threads=%d reps=%d\n", design.n, design.p,
                dim, par::max_threads(), reps);

    double t0 = now_ms();
    double lp_omp = 0.0;
    for (int r = 0; r < reps; ++r) lp_omp = post.log_density_grad(theta, grad_omp, ws);
    const double ms_omp = (now_ms() - t0) / reps;

    t0 = now_ms();
    double lp_ref = 0.0;
    for (int r = 0; r < reps; ++r) {
        lp_ref = reference::log_density_grad(design, post.priors(), post.layout(), theta,
                                             grad_ref);
    }
    const double ms_ref = (now_ms() - t0) / reps;

    double max_dev = std::fabs(lp_omp - lp_ref);
    for (std::size_t i = 0; i < dim; ++i) {
        max_dev = std::max(max_dev, std::fabs(grad_omp[i] - grad_ref[i]));
    }

    std::printf("%-28s %10.4f ms/eval\n", "posterior grad (omp)", ms_omp);
    std::printf("%-28s %10.4f ms/eval\n", "posterior grad (reference)", ms_ref);
    std::printf("%-28s %10.2fx\n", "speedup", ms_ref / ms_omp);
    std::printf("%-28s %10.3e\n", "max |omp - reference|", max_dev);

    // One boosting round on the same frame.
    const auto encoded = gbt_encode(frame);
    GbtConfig gc;
    gc.trees = 60;
    t0 = now_ms();
    const auto model = gbt_train(encoded, {}, gc);
    const double ms_gbt = now_ms() - t0;
    std::printf("%-28s %10.2f ms (%d trees, depth %d)\n", "gbt_train", ms_gbt, gc.trees,
                gc.depth);
    std::printf("%-28s %10.6f\n", "gbt final train mse", model.train_mse.back());
    return 0;
}
