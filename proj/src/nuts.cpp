#include "disparity/nuts.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "disparity/common.hpp"
#include "disparity/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace disparity {

void NutsConfig::check() const {
    if (chains <= 0) throw ValidationError("sampler config: chains must be positive");
    if (draws <= 0) throw ValidationError("sampler config: draws must be positive");
    if (warmup < 0) throw ValidationError("sampler config: warmup must be non-negative");
    if (!(target_accept > 0.0 && target_accept < 1.0)) {
        throw ValidationError("sampler config: target_accept must be in (0,1)");
    }
    if (max_tree_depth < 1 || max_tree_depth > 14) {
        throw ValidationError("sampler config: max_tree_depth must be in [1,14]");
    }
}

std::vector<double> PosteriorDraws::constrained_param(std::size_t k) const {
    std::vector<double> out;
    out.reserve(n_chains * n_draws);
    for (std::size_t c = 0; c < n_chains; ++c) {
        for (std::size_t d = 0; d < n_draws; ++d) out.push_back(constrained(c, d, k));
    }
    return out;
}

int PosteriorDraws::index_of(const std::string& name) const {
    for (std::size_t k = 0; k < names.size(); ++k) {
        if (names[k] == name) return static_cast<int>(k);
    }
    return -1;
}

namespace {

constexpr double kDivergenceThreshold = 1000.0;

struct PhasePoint {
    std::vector<double> theta;
    std::vector<double> r;
    std::vector<double> grad;
    double logp = 0.0;
    double H = 0.0;  // -logp + kinetic
};

struct DualAverage {
    double mu = 0.0;
    double log_eps = 0.0;
    double log_eps_bar = 0.0;
    double h_bar = 0.0;
    double m = 1.0;
    double delta;
    static constexpr double gamma = 0.05;
    static constexpr double t0 = 10.0;
    static constexpr double kappa = 0.75;

    explicit DualAverage(double eps0, double target) : delta(target) { reset(eps0); }
    void reset(double eps0) {
        mu = std::log(10.0 * eps0);
        log_eps = std::log(eps0);
        log_eps_bar = 0.0;
        h_bar = 0.0;
        m = 1.0;
    }
    void update(double accept) {
        const double prop = 1.0 / (m + t0);
        h_bar = (1.0 - prop) * h_bar + prop * (delta - accept);
        log_eps = mu - std::sqrt(m) * h_bar / gamma;
        const double w = std::pow(m, -kappa);
        log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;
        m += 1.0;
    }
    double eps() const { return std::exp(log_eps); }
    double eps_final() const { return std::exp(log_eps_bar); }
};

// Welford accumulator for the diagonal mass estimate.
struct Welford {
    std::vector<double> mean, m2;
    double count = 0.0;
    explicit Welford(std::size_t dim) : mean(dim, 0.0), m2(dim, 0.0) {}
    void add(std::span<const double> x) {
        count += 1.0;
        for (std::size_t i = 0; i < mean.size(); ++i) {
            const double d = x[i] - mean[i];
            mean[i] += d / count;
            m2[i] += d * (x[i] - mean[i]);
        }
    }
    void reset() {
        std::fill(mean.begin(), mean.end(), 0.0);
        std::fill(m2.begin(), m2.end(), 0.0);
        count = 0.0;
    }
    // Regularized variance, Stan-style shrinkage toward a small diagonal.
    std::vector<double> regularized_variance() const {
        std::vector<double> v(mean.size(), 1.0);
        if (count < 2.0) return v;
        const double w = count / (count + 5.0);
        for (std::size_t i = 0; i < v.size(); ++i) {
            v[i] = w * (m2[i] / (count - 1.0)) + (1.0 - w) * 1e-3;
            if (!(v[i] > 1e-12)) v[i] = 1e-12;
        }
        return v;
    }
};

// Warmup window schedule: fast start, doubling slow windows, fast tail.
struct AdaptSchedule {
    int init_buffer = 75;
    int term_buffer = 50;
    int base_window = 25;
    int warmup = 0;

    explicit AdaptSchedule(int w) : warmup(w) {
        if (warmup < init_buffer + term_buffer + base_window) {
            init_buffer = std::max(1, static_cast<int>(0.15 * warmup));
            term_buffer = std::max(1, static_cast<int>(0.10 * warmup));
            base_window = std::max(1, warmup - init_buffer - term_buffer);
        }
    }
    bool in_slow(int iter) const {
        return iter >= init_buffer && iter < warmup - term_buffer;
    }
    // End-of-window iterations where the mass matrix is refreshed.
    std::vector<int> window_ends() const {
        std::vector<int> ends;
        int start = init_buffer;
        int size = base_window;
        const int last = warmup - term_buffer;
        while (start < last) {
            int end = start + size;
            if (end + 2 * size > last) end = last;  // absorb the remainder
            ends.push_back(end - 1);
            start = end;
            size *= 2;
        }
        return ends;
    }
};

class Chain {
  public:
    Chain(TargetFn target, std::vector<double> init, std::vector<double> inv_mass,
          const NutsConfig& cfg, int chain_id)
        : target_(std::move(target)),
          dim_(init.size()),
          cfg_(cfg),
          rng_(cfg.seed, static_cast<std::uint64_t>(chain_id) + 1),
          inv_mass_(std::move(inv_mass)),
          theta_(std::move(init)) {}

    void run(double* draw_out, ChainStats& stats);

  private:
    double eval(std::span<const double> theta, std::span<double> grad) {
        return target_(theta, grad);
    }

    double kinetic(const std::vector<double>& r) const {
        double k = 0.0;
        for (std::size_t i = 0; i < dim_; ++i) k += r[i] * r[i] * inv_mass_[i];
        return 0.5 * k;
    }

    void sample_momentum(std::vector<double>& r) {
        for (std::size_t i = 0; i < dim_; ++i) {
            r[i] = rng_.normal() / std::sqrt(inv_mass_[i]);
        }
    }

    // One leapfrog step of signed size eps from `from` into `out`.
    void leapfrog(const PhasePoint& from, double eps, PhasePoint& out) {
        out.theta = from.theta;
        out.r = from.r;
        out.grad.resize(dim_);
        for (std::size_t i = 0; i < dim_; ++i) out.r[i] += 0.5 * eps * from.grad[i];
        for (std::size_t i = 0; i < dim_; ++i) out.theta[i] += eps * inv_mass_[i] * out.r[i];
        out.logp = eval(out.theta, out.grad);
        for (std::size_t i = 0; i < dim_; ++i) out.r[i] += 0.5 * eps * out.grad[i];
        out.H = std::isfinite(out.logp) ? -out.logp + kinetic(out.r)
                                        : std::numeric_limits<double>::infinity();
    }

    bool uturn(const PhasePoint& minus, const PhasePoint& plus) const {
        double dot_minus = 0.0, dot_plus = 0.0;
        for (std::size_t i = 0; i < dim_; ++i) {
            const double dq = plus.theta[i] - minus.theta[i];
            dot_minus += dq * inv_mass_[i] * minus.r[i];
            dot_plus += dq * inv_mass_[i] * plus.r[i];
        }
        return dot_minus < 0.0 || dot_plus < 0.0;
    }

    struct Tree {
        PhasePoint minus, plus;
        std::vector<double> proposal;
        double logw = -std::numeric_limits<double>::infinity();
        bool ok = false;
        bool divergent = false;
        double sum_accept = 0.0;
        std::size_t n_leapfrog = 0;
    };

    Tree build_tree(const PhasePoint& from, double eps_signed, int depth, double h0) {
        Tree t;
        if (depth == 0) {
            PhasePoint q;
            leapfrog(from, eps_signed, q);
            const double dh = h0 - q.H;  // log weight relative to the start
            t.divergent = !(q.H - h0 < kDivergenceThreshold);
            t.ok = !t.divergent;
            t.logw = dh;
            t.sum_accept = std::min(1.0, std::exp(dh));
            t.n_leapfrog = 1;
            t.proposal = q.theta;
            t.minus = q;
            t.plus = std::move(q);
            return t;
        }
        Tree first = build_tree(from, eps_signed, depth - 1, h0);
        if (!first.ok) return first;
        const PhasePoint& edge = eps_signed > 0 ? first.plus : first.minus;
        Tree second = build_tree(edge, eps_signed, depth - 1, h0);

        Tree merged;
        merged.sum_accept = first.sum_accept + second.sum_accept;
        merged.n_leapfrog = first.n_leapfrog + second.n_leapfrog;
        merged.divergent = first.divergent || second.divergent;
        merged.logw = log_sum_exp(first.logw, second.logw);
        // Uniform multinomial choice between the two halves.
        const double accept_second = std::exp(second.logw - merged.logw);
        merged.proposal = rng_.uniform() < accept_second ? std::move(second.proposal)
                                                         : std::move(first.proposal);
        if (eps_signed > 0) {
            merged.minus = std::move(first.minus);
            merged.plus = std::move(second.plus);
        } else {
            merged.minus = std::move(second.minus);
            merged.plus = std::move(first.plus);
        }
        merged.ok = second.ok && !uturn(merged.minus, merged.plus);
        return merged;
    }

    static double log_sum_exp(double a, double b) {
        if (a == -std::numeric_limits<double>::infinity()) return b;
        if (b == -std::numeric_limits<double>::infinity()) return a;
        const double m = std::max(a, b);
        return m + std::log(std::exp(a - m) + std::exp(b - m));
    }

    struct StepResult {
        double accept_stat = 0.0;
        bool divergent = false;
        std::uint8_t depth = 0;
    };

    StepResult transition(PhasePoint& state, double eps) {
        sample_momentum(state.r);
        state.H = -state.logp + kinetic(state.r);
        const double h0 = state.H;

        PhasePoint minus = state, plus = state;
        std::vector<double> selected = state.theta;
        double logw_total = 0.0;  // the initial point carries weight exp(0)
        double sum_accept = 0.0;
        std::size_t n_leapfrog = 0;
        bool divergent = false;
        std::uint8_t depth = 0;

        for (int d = 0; d < cfg_.max_tree_depth; ++d) {
            const double dir = rng_.uniform() < 0.5 ? -1.0 : 1.0;
            Tree t = build_tree(dir > 0 ? plus : minus, dir * eps, d, h0);
            sum_accept += t.sum_accept;
            n_leapfrog += t.n_leapfrog;
            divergent = divergent || t.divergent;
            if (!t.ok) break;
            // Biased progressive sampling toward the new subtree.
            if (std::log(rng_.uniform()) < t.logw - logw_total) {
                selected = t.proposal;
            }
            logw_total = log_sum_exp(logw_total, t.logw);
            if (dir > 0) {
                plus = std::move(t.plus);
            } else {
                minus = std::move(t.minus);
            }
            depth = static_cast<std::uint8_t>(d + 1);
            if (uturn(minus, plus)) break;
        }

        state.theta = std::move(selected);
        state.logp = eval(state.theta, state.grad);

        StepResult res;
        res.accept_stat = n_leapfrog > 0 ? sum_accept / static_cast<double>(n_leapfrog) : 0.0;
        res.divergent = divergent;
        res.depth = depth;
        return res;
    }

    double find_initial_step(const PhasePoint& state) {
        double eps = 1.0;
        PhasePoint probe = state;
        sample_momentum(probe.r);
        probe.H = -probe.logp + kinetic(probe.r);
        PhasePoint next;

        auto log_ratio = [&](double e) {
            leapfrog(probe, e, next);
            return probe.H - next.H;  // log acceptance
        };
        double lr = log_ratio(eps);
        while (!std::isfinite(lr) && eps > 1e-10) {
            eps *= 0.5;
            lr = log_ratio(eps);
        }
        const double threshold = std::log(0.5);
        const double dir = lr > threshold ? 2.0 : 0.5;
        for (int it = 0; it < 100; ++it) {
            eps *= dir;
            lr = log_ratio(eps);
            if (!std::isfinite(lr)) lr = -std::numeric_limits<double>::infinity();
            if ((dir > 1.0 && lr <= threshold) || (dir < 1.0 && lr >= threshold)) break;
            if (eps > 1e7 || eps < 1e-10) break;
        }
        return std::clamp(eps, 1e-10, 1e7);
    }

    TargetFn target_;
    std::size_t dim_;
    NutsConfig cfg_;
    Rng rng_;
    std::vector<double> inv_mass_;
    std::vector<double> theta_;
};

void Chain::run(double* draw_out, ChainStats& stats) {
    PhasePoint state;
    state.theta = theta_;
    state.r.assign(dim_, 0.0);
    state.grad.assign(dim_, 0.0);
    state.logp = eval(state.theta, state.grad);
    if (!std::isfinite(state.logp)) {
        throw SamplerError("initial point has non-finite log density");
    }

    double eps = find_initial_step(state);
    DualAverage da(eps, cfg_.target_accept);
    AdaptSchedule sched(cfg_.warmup);
    const auto window_ends = sched.window_ends();
    std::size_t window_idx = 0;
    Welford welford(dim_);

    stats.treedepth.reserve(cfg_.draws);
    stats.divergent.reserve(cfg_.draws);
    double accept_sum = 0.0;

    for (int iter = 0; iter < cfg_.warmup + cfg_.draws; ++iter) {
        const bool warming = iter < cfg_.warmup;
        const double step = warming ? da.eps() : eps;
        const StepResult res = transition(state, step);

        if (warming) {
            da.update(res.accept_stat);
            if (res.divergent) stats.warmup_divergences++;
            if (sched.in_slow(iter)) welford.add(state.theta);
            if (window_idx < window_ends.size() && iter == window_ends[window_idx]) {
                inv_mass_ = welford.regularized_variance();
                welford.reset();
                ++window_idx;
                // Re-tune the step size under the new metric.
                const double eps0 = find_initial_step(state);
                da.reset(eps0);
            }
            if (iter == cfg_.warmup - 1) {
                eps = da.eps_final();
                if (stats.warmup_divergences == static_cast<std::size_t>(cfg_.warmup)) {
                    throw SamplerError(
                        "every warmup iteration diverged; try a smaller initial step size or "
                        "check the model");
                }
            }
        } else {
            const std::size_t d = static_cast<std::size_t>(iter - cfg_.warmup);
            std::copy(state.theta.begin(), state.theta.end(), draw_out + d * dim_);
            stats.treedepth.push_back(res.depth);
            stats.divergent.push_back(res.divergent ? 1 : 0);
            if (res.divergent) stats.divergences++;
            accept_sum += res.accept_stat;
        }
    }
    stats.step_size = eps;
    stats.mean_accept = cfg_.draws > 0 ? accept_sum / cfg_.draws : 0.0;
}

}  // namespace

PosteriorDraws nuts_sample(const TargetFactory& make_target,
                           const std::vector<std::vector<double>>& chain_inits,
                           const std::vector<std::string>& names,
                           const std::vector<Transform>& transforms, const NutsConfig& config,
                           const std::vector<double>& init_inv_mass) {
    config.check();
    if (chain_inits.size() != static_cast<std::size_t>(config.chains)) {
        throw ValidationError("nuts_sample: need one init per chain");
    }
    const std::size_t dim = chain_inits.front().size();
    if (names.size() != dim || transforms.size() != dim) {
        throw ValidationError("nuts_sample: names/transforms must match dimension");
    }
    std::vector<double> metric = init_inv_mass.empty() ? std::vector<double>(dim, 1.0)
                                                       : init_inv_mass;
    if (metric.size() != dim) {
        throw ValidationError("nuts_sample: init_inv_mass must match dimension");
    }
    for (double v : metric) {
        if (!(v > 0.0)) throw ValidationError("nuts_sample: init_inv_mass must be positive");
    }

    PosteriorDraws out;
    out.names = names;
    out.transforms = transforms;
    out.n_chains = static_cast<std::size_t>(config.chains);
    out.n_draws = static_cast<std::size_t>(config.draws);
    out.dim = dim;
    out.draws.assign(out.n_chains * out.n_draws * dim, 0.0);
    out.stats.resize(out.n_chains);

    std::vector<std::string> errors(out.n_chains);
#ifdef _OPENMP
    omp_set_max_active_levels(1);
#pragma omp parallel for schedule(static, 1) if (config.chains > 1)
#endif
    for (int c = 0; c < config.chains; ++c) {
        try {
            Chain chain(make_target(c), chain_inits[static_cast<std::size_t>(c)], metric,
                        config, c);
            chain.run(out.draws.data() + static_cast<std::size_t>(c) * out.n_draws * dim,
                      out.stats[static_cast<std::size_t>(c)]);
        } catch (const std::exception& e) {
            errors[static_cast<std::size_t>(c)] = e.what();
        }
    }
    for (const auto& e : errors) {
        if (!e.empty()) throw SamplerError(e);
    }
    return out;
}

PosteriorDraws nuts_sample_posterior(const Posterior& post, const NutsConfig& config) {
    // Sample with centered coordinates for strongly-identified terms (better
    // geometry), then map those slices back to the published non-centered
    // registry, eta = u / sigma, an exact change of variables.
    const auto mask = Posterior::auto_centering(post.design());
    const Posterior sampler_post(post.design(), post.priors(), mask);
    const auto& layout = sampler_post.layout();

    const auto init = sampler_post.default_init();
    std::vector<std::vector<double>> inits;
    for (int c = 0; c < config.chains; ++c) {
        Rng jitter(derive_seed(config.seed, 0xA11CE), static_cast<std::uint64_t>(c));
        auto theta = init;
        for (std::size_t t = 0; t < layout.terms.size(); ++t) {
            const auto& ts = layout.terms[t];
            const double scale = mask[t] ? std::exp(theta[ts.log_sigma]) : 1.0;
            for (std::size_t j = 0; j < ts.n_eta; ++j) {
                theta[ts.eta0 + j] += scale * jitter.uniform(-0.1, 0.1);
            }
        }
        inits.push_back(std::move(theta));
    }

    auto factory = [&sampler_post](int) -> TargetFn {
        auto ws = std::make_shared<Posterior::Workspace>(sampler_post.make_workspace());
        return [&sampler_post, ws](std::span<const double> theta, std::span<double> grad) {
            return sampler_post.log_density_grad(theta, grad, *ws);
        };
    };
    PosteriorDraws draws = nuts_sample(factory, inits, layout.names, layout.transforms,
                                       config, sampler_post.initial_metric());

    for (std::size_t t = 0; t < layout.terms.size(); ++t) {
        if (!mask[t]) continue;
        const auto& ts = layout.terms[t];
        for (std::size_t c = 0; c < draws.n_chains; ++c) {
            for (std::size_t k = 0; k < draws.n_draws; ++k) {
                double* row = draws.draws.data() + (c * draws.n_draws + k) * draws.dim;
                const double sigma = std::exp(row[ts.log_sigma]);
                for (std::size_t j = 0; j < ts.n_eta; ++j) row[ts.eta0 + j] /= sigma;
            }
        }
    }
    return draws;
}

}  // namespace disparity
