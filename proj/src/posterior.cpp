#include "disparity/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "disparity/common.hpp"
#include "disparity/cube.hpp"
#include "disparity/linalg.hpp"
#include "disparity/parallel.hpp"

namespace disparity {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;  // log(2*pi)

double column_sd(const double* col, std::size_t n) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) m += col[i];
    m /= static_cast<double>(n);
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += (col[i] - m) * (col[i] - m);
    return n > 1 ? std::sqrt(ss / static_cast<double>(n - 1)) : 0.0;
}

double term_slope_ss(const RandomTermDesign& td, std::size_t group) {
    double csum = 0.0;
    for (std::int32_t q = td.rows_offset[group]; q < td.rows_offset[group + 1]; ++q) {
        const double c = td.has_slope ? td.slope[td.rows[q]] : 1.0;
        csum += c * c;
    }
    return csum;
}
}  // namespace

PriorSpec PriorSpec::auto_scaled(const DesignMatrices& design) {
    PriorSpec pr;
    const double sd_y = sample_sd(design.y);
    const double mean_y = mean_of(design.y);
    const double base = sd_y > 0.0 ? sd_y : 1.0;

    pr.beta_center.assign(design.p, 0.0);
    pr.beta_scale.assign(design.p, 2.5 * base);
    for (std::size_t k = 0; k < design.p; ++k) {
        if (design.col_names[k] == "Intercept") {
            pr.beta_center[k] = mean_y;
        } else {
            const double sx = column_sd(design.col(k), design.n);
            if (sx > 0.0) pr.beta_scale[k] = 2.5 * base / sx;
        }
    }
    pr.sigma_scale.assign(design.terms.size(), base);
    pr.resid_scale = base;
    pr.resid_nu = 4.0;
    return pr;
}

ParamLayout make_layout(const DesignMatrices& design) {
    ParamLayout lay;
    lay.p = design.p;
    std::size_t off = 0;
    for (std::size_t k = 0; k < design.p; ++k) {
        lay.names.push_back("b[" + design.col_names[k] + "]");
        lay.transforms.push_back(Transform::identity);
    }
    off = design.p;
    for (const auto& term : design.terms) {
        ParamLayout::TermSlice ts;
        ts.log_sigma = off++;
        lay.names.push_back("sigma[" + term.name + "]");
        lay.transforms.push_back(Transform::log_exp);
        ts.eta0 = off;
        ts.n_eta = term.levels.size();
        for (const auto& lvl : term.levels) {
            lay.names.push_back("z[" + term.name + "][" + lvl + "]");
            lay.transforms.push_back(Transform::identity);
        }
        off += ts.n_eta;
        lay.terms.push_back(ts);
    }
    lay.log_sigma_resid = off++;
    lay.names.push_back("sigma");
    lay.transforms.push_back(Transform::log_exp);
    lay.dim = off;
    return lay;
}

std::vector<unsigned char> Posterior::auto_centering(const DesignMatrices& design) {
    std::vector<unsigned char> mask(design.terms.size(), 0);
    for (std::size_t t = 0; t < design.terms.size(); ++t) {
        const auto& td = design.terms[t];
        if (td.levels.empty()) continue;
        double total = 0.0;
        for (std::size_t g = 0; g < td.levels.size(); ++g) total += term_slope_ss(td, g);
        const double avg = total / static_cast<double>(td.levels.size());
        mask[t] = avg >= 10.0 ? 1 : 0;
    }
    return mask;
}

Posterior::Posterior(const DesignMatrices& design, PriorSpec priors,
                     std::vector<unsigned char> centered_terms)
    : design_(&design),
      priors_(std::move(priors)),
      layout_(make_layout(design)),
      centered_(std::move(centered_terms)) {
    if (centered_.empty()) centered_.assign(design.terms.size(), 0);
    if (centered_.size() != design.terms.size()) {
        throw ValidationError("posterior: centered mask length mismatch");
    }
    const double nu = priors_.resid_nu;
    half_t_lognorm_ = std::log(2.0) + std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
                      0.5 * std::log(nu * M_PI) - std::log(priors_.resid_scale);
}

Posterior::Workspace Posterior::make_workspace() const {
    Workspace ws;
    ws.eta.resize(design_->n);
    ws.resid.resize(design_->n);
    return ws;
}

double Posterior::log_density(std::span<const double> theta, Workspace& ws) const {
    std::vector<double> scratch(layout_.dim);
    return log_density_grad(theta, scratch, ws);
}

double Posterior::log_density_grad(std::span<const double> theta, std::span<double> grad,
                                   Workspace& ws) const {
    const DesignMatrices& d = *design_;
    const std::size_t n = d.n;
    const std::size_t p = d.p;
    const bool par_rows = n >= par::kChunk;

    double* eta = ws.eta.data();
    double* r = ws.resid.data();
    std::fill(grad.begin(), grad.end(), 0.0);

    // Linear predictor: column axpy keeps the per-row accumulation order
    // fixed regardless of thread count.
    std::fill(ws.eta.begin(), ws.eta.end(), 0.0);
    for (std::size_t k = 0; k < p; ++k) {
        const double bk = theta[k];
        const double* col = d.col(k);
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (par_rows)
#endif
        for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
            eta[i] += bk * col[i];
        }
    }
    const std::size_t n_terms = d.terms.size();
    std::vector<double> sigma_t(n_terms);
    for (std::size_t t = 0; t < n_terms; ++t) {
        const auto& td = d.terms[t];
        const auto& ts = layout_.terms[t];
        const double st = std::exp(theta[ts.log_sigma]);
        sigma_t[t] = st;
        // Centered slices carry the effect directly; non-centered ones are
        // scaled standard-normal offsets.
        const double scale = centered_[t] ? 1.0 : st;
        const double* etat = theta.data() + ts.eta0;
        const std::int32_t* grp = td.group.data();
        if (td.has_slope) {
            const double* c = td.slope.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (par_rows)
#endif
            for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
                eta[i] += scale * etat[grp[i]] * c[i];
            }
        } else {
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (par_rows)
#endif
            for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
                eta[i] += scale * etat[grp[i]];
            }
        }
    }

    const double* y = d.y.data();
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (par_rows)
#endif
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(n); ++i) {
        r[i] = y[i] - eta[i];
    }

    const double sigma = std::exp(theta[layout_.log_sigma_resid]);
    const double inv_var = 1.0 / (sigma * sigma);
    const double rss = par::det_sum(n, [&](std::size_t i) { return r[i] * r[i]; });

    double ll = -0.5 * static_cast<double>(n) * kLog2Pi -
                static_cast<double>(n) * theta[layout_.log_sigma_resid] - 0.5 * rss * inv_var;

    // Fixed-effect gradients: X'r / sigma^2 plus the prior pull.
    for (std::size_t k = 0; k < p; ++k) {
        const double* col = d.col(k);
        const double xr = par::det_sum(n, [&](std::size_t i) { return col[i] * r[i]; });
        grad[k] = xr * inv_var;
    }

    // Random terms: per-group residual sums drive both the offset gradients
    // and the scale gradient.
    for (std::size_t t = 0; t < n_terms; ++t) {
        const auto& td = d.terms[t];
        const auto& ts = layout_.terms[t];
        const double st = sigma_t[t];
        const double* etat = theta.data() + ts.eta0;
        const std::size_t ng = ts.n_eta;
        double* gslot = grad.data() + ts.eta0;
#ifdef _OPENMP
#pragma omp parallel for schedule(static) if (ng >= 512)
#endif
        for (std::ptrdiff_t j = 0; j < static_cast<std::ptrdiff_t>(ng); ++j) {
            double s = 0.0;
            for (std::int32_t q = td.rows_offset[j]; q < td.rows_offset[j + 1]; ++q) {
                const std::int32_t i = td.rows[q];
                s += (td.has_slope ? td.slope[i] : 1.0) * r[i];
            }
            gslot[j] = s;  // raw group sum; finalized below
        }

        double glog = 0.0;
        if (centered_[t]) {
            double u_ss = 0.0;
            for (std::size_t j = 0; j < ng; ++j) {
                u_ss += etat[j] * etat[j];
                gslot[j] = gslot[j] * inv_var -
                           (priors_.flat ? 0.0 : etat[j] / (st * st));
            }
            if (!priors_.flat) {
                ll += -0.5 * static_cast<double>(ng) * kLog2Pi -
                      static_cast<double>(ng) * theta[ts.log_sigma] -
                      0.5 * u_ss / (st * st);
                glog += -static_cast<double>(ng) + u_ss / (st * st);
            }
        } else {
            double s_term = 0.0;
            double eta_ss = 0.0;
            for (std::size_t j = 0; j < ng; ++j) {
                s_term += etat[j] * gslot[j];
                eta_ss += etat[j] * etat[j];
                gslot[j] = st * gslot[j] * inv_var - (priors_.flat ? 0.0 : etat[j]);
            }
            glog += st * s_term * inv_var;
            if (!priors_.flat) {
                ll += -0.5 * eta_ss - 0.5 * static_cast<double>(ng) * kLog2Pi;
            }
        }
        if (!priors_.flat) {
            const double ss = priors_.sigma_scale[t];
            ll += std::log(2.0) - std::log(ss) - 0.5 * kLog2Pi -
                  0.5 * st * st / (ss * ss) + theta[ts.log_sigma];
            glog += -st * st / (ss * ss) + 1.0;
        }
        grad[ts.log_sigma] = glog;
    }

    // Residual scale.
    double glog_resid = -static_cast<double>(n) + rss * inv_var;
    if (!priors_.flat) {
        const double nu = priors_.resid_nu;
        const double s2 = priors_.resid_scale * priors_.resid_scale;
        ll += half_t_lognorm_ -
              0.5 * (nu + 1.0) * std::log1p(sigma * sigma / (nu * s2)) +
              theta[layout_.log_sigma_resid];
        glog_resid += -(nu + 1.0) * sigma * sigma / (nu * s2 + sigma * sigma) + 1.0;

        for (std::size_t k = 0; k < p; ++k) {
            const double dev = theta[k] - priors_.beta_center[k];
            const double sc = priors_.beta_scale[k];
            ll += -0.5 * kLog2Pi - std::log(sc) - 0.5 * dev * dev / (sc * sc);
            grad[k] -= dev / (sc * sc);
        }
    }
    grad[layout_.log_sigma_resid] = glog_resid;

    if (!std::isfinite(ll)) {
        return -std::numeric_limits<double>::infinity();
    }
    return ll;
}

std::vector<double> Posterior::default_init() const {
    const DesignMatrices& d = *design_;
    std::vector<double> theta(layout_.dim, 0.0);
    if (d.p > 0) {
        Matrix gram(d.p, d.p, 0.0);
        std::vector<double> xty(d.p, 0.0);
        for (std::size_t a = 0; a < d.p; ++a) {
            for (std::size_t b = a; b < d.p; ++b) {
                double s = 0.0;
                for (std::size_t i = 0; i < d.n; ++i) s += d.col(a)[i] * d.col(b)[i];
                gram(a, b) = gram(b, a) = s;
            }
            double s = 0.0;
            for (std::size_t i = 0; i < d.n; ++i) s += d.col(a)[i] * d.y[i];
            xty[a] = s;
        }
        const auto beta = solve_spd(gram, xty);
        for (std::size_t k = 0; k < d.p; ++k) theta[k] = beta[k];
    }
    const double sd_y = std::max(sample_sd(d.y), 1e-3);
    for (const auto& ts : layout_.terms) theta[ts.log_sigma] = std::log(sd_y / 2.0);
    theta[layout_.log_sigma_resid] = std::log(sd_y / 2.0);
    return theta;
}

std::vector<double> Posterior::initial_metric() const {
    const DesignMatrices& d = *design_;
    const double sd_y = std::max(sample_sd(d.y), 1e-3);
    const double s0sq = 0.25 * sd_y * sd_y;  // both scales start at sd_y/2
    std::vector<double> inv_mass(layout_.dim, 1.0);
    for (std::size_t k = 0; k < d.p; ++k) {
        double norm2 = 0.0;
        const double* col = d.col(k);
        for (std::size_t i = 0; i < d.n; ++i) norm2 += col[i] * col[i];
        inv_mass[k] = std::max(1e-8, sd_y * sd_y / std::max(norm2, 1e-12));
    }
    // Conditional offset variance at the initial scales: non-centered
    // 1/(1 + sum c^2), centered s0^2/(1 + sum c^2).
    for (std::size_t t = 0; t < d.terms.size(); ++t) {
        const auto& td = d.terms[t];
        const auto& ts = layout_.terms[t];
        for (std::size_t j = 0; j < ts.n_eta; ++j) {
            const double csum = term_slope_ss(td, j);
            inv_mass[ts.eta0 + j] =
                centered_[t] ? s0sq / (1.0 + csum) : 1.0 / (1.0 + csum);
        }
        inv_mass[ts.log_sigma] = 0.1;
    }
    inv_mass[layout_.log_sigma_resid] = 0.1;
    return inv_mass;
}

namespace reference {

double log_density_grad(const DesignMatrices& d, const PriorSpec& priors,
                        const ParamLayout& layout, std::span<const double> theta,
                        std::span<double> grad,
                        const std::vector<unsigned char>& centered_terms) {
    const std::size_t n = d.n;
    const double sigma = std::exp(theta[layout.log_sigma_resid]);
    std::fill(grad.begin(), grad.end(), 0.0);
    auto centered = [&](std::size_t t) {
        return t < centered_terms.size() && centered_terms[t] != 0;
    };

    double ll = 0.0;
    double rss = 0.0;
    std::vector<double> resid(n);
    for (std::size_t i = 0; i < n; ++i) {
        double eta = 0.0;
        for (std::size_t k = 0; k < d.p; ++k) eta += theta[k] * d.x(i, k);
        for (std::size_t t = 0; t < d.terms.size(); ++t) {
            const auto& td = d.terms[t];
            const auto& ts = layout.terms[t];
            const double scale = centered(t) ? 1.0 : std::exp(theta[ts.log_sigma]);
            const double c = td.has_slope ? td.slope[i] : 1.0;
            eta += scale * theta[ts.eta0 + static_cast<std::size_t>(td.group[i])] * c;
        }
        const double r = d.y[i] - eta;
        resid[i] = r;
        rss += r * r;
        ll += -0.5 * kLog2Pi - theta[layout.log_sigma_resid] - 0.5 * r * r / (sigma * sigma);
    }

    for (std::size_t k = 0; k < d.p; ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += d.x(i, k) * resid[i];
        grad[k] = s / (sigma * sigma);
    }
    for (std::size_t t = 0; t < d.terms.size(); ++t) {
        const auto& td = d.terms[t];
        const auto& ts = layout.terms[t];
        const double st = std::exp(theta[ts.log_sigma]);
        if (centered(t)) {
            for (std::size_t i = 0; i < n; ++i) {
                const double c = td.has_slope ? td.slope[i] : 1.0;
                const std::size_t j = ts.eta0 + static_cast<std::size_t>(td.group[i]);
                grad[j] += c * resid[i] / (sigma * sigma);
            }
            if (!priors.flat) {
                double u_ss = 0.0;
                for (std::size_t j = 0; j < ts.n_eta; ++j) {
                    const double u = theta[ts.eta0 + j];
                    u_ss += u * u;
                    ll += -0.5 * kLog2Pi - theta[ts.log_sigma] - 0.5 * u * u / (st * st);
                    grad[ts.eta0 + j] -= u / (st * st);
                }
                grad[ts.log_sigma] = -static_cast<double>(ts.n_eta) + u_ss / (st * st);
            }
        } else {
            double s_term = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double c = td.has_slope ? td.slope[i] : 1.0;
                const std::size_t j = ts.eta0 + static_cast<std::size_t>(td.group[i]);
                grad[j] += st * c * resid[i] / (sigma * sigma);
                s_term += c * theta[j] * resid[i];
            }
            grad[ts.log_sigma] = st * s_term / (sigma * sigma);
            if (!priors.flat) {
                for (std::size_t j = 0; j < ts.n_eta; ++j) {
                    const double z = theta[ts.eta0 + j];
                    ll += -0.5 * kLog2Pi - 0.5 * z * z;
                    grad[ts.eta0 + j] -= z;
                }
            }
        }
        if (!priors.flat) {
            const double ss = priors.sigma_scale[t];
            ll += std::log(2.0) - std::log(ss) - 0.5 * kLog2Pi -
                  0.5 * st * st / (ss * ss) + theta[ts.log_sigma];
            grad[ts.log_sigma] += -st * st / (ss * ss) + 1.0;
        }
    }

    grad[layout.log_sigma_resid] = -static_cast<double>(n) + rss / (sigma * sigma);
    if (!priors.flat) {
        const double nu = priors.resid_nu;
        const double sc = priors.resid_scale;
        ll += std::log(2.0) + std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) -
              0.5 * std::log(nu * M_PI) - std::log(sc) -
              0.5 * (nu + 1.0) * std::log1p(sigma * sigma / (nu * sc * sc)) +
              theta[layout.log_sigma_resid];
        grad[layout.log_sigma_resid] +=
            -(nu + 1.0) * sigma * sigma / (nu * sc * sc + sigma * sigma) + 1.0;

        for (std::size_t k = 0; k < d.p; ++k) {
            const double dev = theta[k] - priors.beta_center[k];
            const double s = priors.beta_scale[k];
            ll += -0.5 * kLog2Pi - std::log(s) - 0.5 * dev * dev / (s * s);
            grad[k] -= dev / (s * s);
        }
    }
    return ll;
}

}  // namespace reference

}  // namespace disparity
