#pragma once

#include <cstddef>
#include <vector>

namespace disparity {

// Dense row-major matrix, just enough for the small designs here.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), a(r * c, fill) {}

    double& operator()(std::size_t r, std::size_t c) { return a[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return a[r * cols + c]; }
};

// Solve A x = b for symmetric positive definite A by Cholesky; adds a tiny
// ridge and retries when the factorization stalls (rank-deficient designs).
std::vector<double> solve_spd(Matrix A, std::vector<double> b);

// Rank of X'X via Gaussian elimination with partial pivoting.
std::size_t gram_rank(const Matrix& gram, double tol = 1e-10);

}  // namespace disparity
