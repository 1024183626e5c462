#pragma once

#include <span>
#include <string>
#include <vector>

#include "disparity/modelspec.hpp"

namespace disparity {

enum class Transform { identity, log_exp };

// Flat unconstrained parameter vector layout:
//   beta[0..p) , then per random term (log sigma_g, eta_g[0..G_g)), then
//   log sigma (residual). Random effects are non-centered: effect = sigma_g * eta_g.
struct ParamLayout {
    std::size_t dim = 0;
    std::size_t p = 0;

    struct TermSlice {
        std::size_t log_sigma = 0;
        std::size_t eta0 = 0;
        std::size_t n_eta = 0;
    };
    std::vector<TermSlice> terms;
    std::size_t log_sigma_resid = 0;

    std::vector<std::string> names;
    std::vector<Transform> transforms;
};

// Auto-scaled priors: Normal(0, 2.5 sd(y)/sd(x)) per fixed-effect column
// (the intercept is Normal(mean(y), 2.5 sd(y))), Half-Normal(sd(y)) on the
// random-effect SDs, Half-Student-t(nu=4, sd(y)) on the residual SD.
struct PriorSpec {
    std::vector<double> beta_center;
    std::vector<double> beta_scale;
    std::vector<double> sigma_scale;  // per random term
    double resid_scale = 1.0;
    double resid_nu = 4.0;
    bool flat = false;  // test hook: likelihood only, no priors, no Jacobians

    static PriorSpec auto_scaled(const DesignMatrices& design);
};

ParamLayout make_layout(const DesignMatrices& design);

// Log posterior density with analytic gradient. The parallel path splits
// row loops into fixed chunks so results are bitwise identical for any
// thread count; Workspace keeps the per-evaluation buffers so concurrent
// chains can share one Posterior.
//
// The published parameter registry is non-centered (effect = sigma_g *
// eta_g). For sampling, terms whose groups carry enough data may be
// evaluated in centered coordinates (the slice holds u_g = sigma_g * eta_g
// directly): the data then pins u_g instead of a curved sigma-eta ridge,
// which a diagonal metric can handle. Draws are mapped back to eta = u /
// sigma afterwards, an exact change of variables, so the external contract
// is unchanged.
class Posterior {
  public:
    Posterior(const DesignMatrices& design, PriorSpec priors,
              std::vector<unsigned char> centered_terms = {});

    // Heuristic: centered coordinates for terms whose groups average at
    // least 10 effective observations (sum of squared slope values).
    static std::vector<unsigned char> auto_centering(const DesignMatrices& design);

    const std::vector<unsigned char>& centered_terms() const { return centered_; }

    const ParamLayout& layout() const { return layout_; }
    const DesignMatrices& design() const { return *design_; }
    const PriorSpec& priors() const { return priors_; }

    struct Workspace {
        std::vector<double> eta;
        std::vector<double> resid;
    };
    Workspace make_workspace() const;

    double log_density(std::span<const double> theta, Workspace& ws) const;
    double log_density_grad(std::span<const double> theta, std::span<double> grad,
                            Workspace& ws) const;

    // Robust starting point: beta from least squares, scales at sd(y)/2,
    // offsets at zero (the sampler adds per-chain jitter).
    std::vector<double> default_init() const;

    // Structured initial diagonal metric: fixed effects at sd(y)^2/|x_k|^2
    // (their least-squares posterior scale), non-centered offsets at 1,
    // log-scales at 0.1. Warmup refines it; starting near the right
    // conditioning keeps early trees shallow.
    std::vector<double> initial_metric() const;

  private:
    const DesignMatrices* design_;
    PriorSpec priors_;
    ParamLayout layout_;
    std::vector<unsigned char> centered_;
    double half_t_lognorm_ = 0.0;  // normalizing constant of the residual prior
};

namespace reference {

// Plain serial evaluation of the same density, written as a direct sum of
// terms. Kept for testing the OpenMP kernel and for the kernel benchmark.
double log_density_grad(const DesignMatrices& design, const PriorSpec& priors,
                        const ParamLayout& layout, std::span<const double> theta,
                        std::span<double> grad,
                        const std::vector<unsigned char>& centered_terms = {});

}  // namespace reference

}  // namespace disparity
