#pragma once

namespace disparity {

// Survival function of the chi-square distribution with df >= 1, computed
// through the regularized upper incomplete gamma Q(df/2, x/2).
double chi2_sf(double x, int df);

// Survival function of the standard normal, via erfc.
double norm_sf(double z);

// Regularized upper incomplete gamma Q(a, x), a > 0, x >= 0.
double gamma_q(double a, double x);

// Inverse standard normal CDF (Acklam's approximation plus one Halley
// refinement step); used for rank normalization in the MCMC diagnostics.
double inv_norm_cdf(double p);

}  // namespace disparity
