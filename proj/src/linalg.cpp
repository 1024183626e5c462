#include "disparity/linalg.hpp"

#include <cmath>
#include <stdexcept>

namespace disparity {

std::vector<double> solve_spd(Matrix A, std::vector<double> b) {
    const std::size_t n = A.rows;
    if (A.cols != n || b.size() != n) throw std::invalid_argument("solve_spd: shape mismatch");

    double ridge = 0.0;
    for (int attempt = 0; attempt < 8; ++attempt) {
        Matrix L(n, n, 0.0);
        bool ok = true;
        for (std::size_t j = 0; j < n && ok; ++j) {
            double d = A(j, j) + ridge;
            for (std::size_t k = 0; k < j; ++k) d -= L(j, k) * L(j, k);
            if (d <= 0.0 || !std::isfinite(d)) {
                ok = false;
                break;
            }
            L(j, j) = std::sqrt(d);
            for (std::size_t i = j + 1; i < n; ++i) {
                double s = A(i, j);
                for (std::size_t k = 0; k < j; ++k) s -= L(i, k) * L(j, k);
                L(i, j) = s / L(j, j);
            }
        }
        if (!ok) {
            double diag_max = 1.0;
            for (std::size_t j = 0; j < n; ++j) diag_max = std::max(diag_max, std::fabs(A(j, j)));
            ridge = ridge == 0.0 ? 1e-10 * diag_max : ridge * 100.0;
            continue;
        }
        // L y = b, then L' x = y.
        std::vector<double> y(n, 0.0), x(n, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double s = b[i];
            for (std::size_t k = 0; k < i; ++k) s -= L(i, k) * y[k];
            y[i] = s / L(i, i);
        }
        for (std::size_t ii = n; ii-- > 0;) {
            double s = y[ii];
            for (std::size_t k = ii + 1; k < n; ++k) s -= L(k, ii) * x[k];
            x[ii] = s / L(ii, ii);
        }
        return x;
    }
    throw std::runtime_error("solve_spd: factorization failed");
}

std::size_t gram_rank(const Matrix& gram, double tol) {
    Matrix A = gram;
    const std::size_t n = A.rows;
    double scale = 0.0;
    for (std::size_t j = 0; j < n; ++j) scale = std::max(scale, std::fabs(A(j, j)));
    if (scale == 0.0) return 0;

    std::size_t rank = 0;
    std::size_t row = 0;
    for (std::size_t col = 0; col < n && row < n; ++col) {
        std::size_t piv = row;
        for (std::size_t r = row + 1; r < n; ++r) {
            if (std::fabs(A(r, col)) > std::fabs(A(piv, col))) piv = r;
        }
        if (std::fabs(A(piv, col)) <= tol * scale) continue;
        if (piv != row) {
            for (std::size_t c = 0; c < n; ++c) std::swap(A(piv, c), A(row, c));
        }
        for (std::size_t r = row + 1; r < n; ++r) {
            const double f = A(r, col) / A(row, col);
            for (std::size_t c = col; c < n; ++c) A(r, c) -= f * A(row, c);
        }
        ++row;
        ++rank;
    }
    return rank;
}

}  // namespace disparity
