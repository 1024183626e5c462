#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "disparity/common.hpp"
#include "disparity/rng.hpp"
#include "disparity/special.hpp"

using namespace disparity;

namespace {

// Closed forms for even df: Q = exp(-x/2) * sum_{j<df/2} (x/2)^j / j!.
double chi2_sf_even_df(double x, int df) {
    const double h = 0.5 * x;
    double term = 1.0, sum = 1.0;
    for (int j = 1; j < df / 2; ++j) {
        term *= h / j;
        sum += term;
    }
    return std::exp(-h) * sum;
}

}  // namespace

TEST_CASE("chi2_sf closed forms") {
    CHECK(chi2_sf(4.0, 2) == doctest::Approx(std::exp(-2.0)).epsilon(1e-12));
    CHECK(chi2_sf(0.0, 5) == 1.0);
    // df=1 reduces to 2 * normal tail of sqrt(x).
    for (double x : {0.5, 1.0, 3.857, 10.0, 25.0}) {
        CHECK(std::fabs(chi2_sf(x, 1) - 2.0 * norm_sf(std::sqrt(x))) < 1e-12);
    }
    for (int df : {2, 4, 6, 10, 60}) {
        for (double x : {0.3, 1.7, 5.0, 20.0, 80.0}) {
            CHECK(std::fabs(chi2_sf(x, df) - chi2_sf_even_df(x, df)) < 1e-10);
        }
    }
    CHECK(chi2_sf(3.857, 1) == doctest::Approx(0.0495).epsilon(2e-3));
    CHECK_THROWS_AS(chi2_sf(-1.0, 2), ValidationError);
    CHECK_THROWS_AS(chi2_sf(1.0, 0), ValidationError);
}

TEST_CASE("norm_sf basics") {
    CHECK(norm_sf(0.0) == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(norm_sf(1.959963984540054) == doctest::Approx(0.025).epsilon(1e-9));
    CHECK(std::fabs(norm_sf(-1.0) + norm_sf(1.0) - 1.0) < 1e-14);
}

TEST_CASE("inv_norm_cdf inverts the normal CDF") {
    for (double p : {1e-10, 1e-5, 0.01, 0.3, 0.5, 0.7, 0.99, 1.0 - 1e-6}) {
        const double z = inv_norm_cdf(p);
        const double back = 1.0 - norm_sf(z);
        CHECK(std::fabs(back - p) < 1e-12);
    }
    CHECK(inv_norm_cdf(0.5) == doctest::Approx(0.0).epsilon(1e-14));
    CHECK_THROWS_AS(inv_norm_cdf(0.0), ValidationError);
    CHECK_THROWS_AS(inv_norm_cdf(1.0), ValidationError);
}

TEST_CASE("rng determinism and moments") {
    Rng a(42, 1), b(42, 1), c(42, 2);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.next_u64() == b.next_u64());
    }
    bool differs = false;
    Rng a2(42, 1);
    for (int i = 0; i < 100; ++i) {
        if (a2.next_u64() != c.next_u64()) differs = true;
    }
    CHECK(differs);

    Rng r(7);
    double sum = 0.0, ss = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double v = r.normal();
        sum += v;
        ss += v * v;
    }
    CHECK(std::fabs(sum / n) < 0.01);
    CHECK(std::fabs(ss / n - 1.0) < 0.02);

    Rng u(9);
    int counts[5] = {0, 0, 0, 0, 0};
    for (int i = 0; i < 50000; ++i) counts[u.uniform_int(5)]++;
    for (int k = 0; k < 5; ++k) CHECK(std::fabs(counts[k] / 50000.0 - 0.2) < 0.01);
}
