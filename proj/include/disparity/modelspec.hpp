#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "disparity/cube.hpp"

#include "disparity/common.hpp"

namespace disparity {

// One random term: `(1|g)` or `(0 + slope|g)` where g is a factor or a
// colon interaction of two factors.
struct RandomTerm {
    std::vector<std::string> group_factors;  // 1 or 2 entries
    bool intercept = true;                   // false for suppressed-intercept slopes
    std::string slope;                       // empty for intercept terms

    std::string group_name() const;  // "language" or "model:language"
    std::string name() const;        // "language" or "fertility_z|model"
};

struct ModelSpec {
    std::string response;
    bool intercept = false;
    std::vector<std::string> continuous;     // formula order
    std::vector<std::string> categoricals;   // C(...) factors, formula order
    std::vector<RandomTerm> random_terms;

    std::string print() const;  // canonical form; parse(print(spec)) == spec
};

ModelSpec parse_formula(const std::string& formula);

struct CheckedSpec {
    ModelSpec spec;  // single-level factors removed
    std::vector<std::string> warnings;
};

CheckedSpec validate(const ModelSpec& spec, const FitFrame& frame);

struct RandomTermDesign {
    std::string name;
    bool has_slope = false;
    std::vector<std::int32_t> group;      // row -> group id
    std::vector<std::string> levels;      // group id -> label
    std::vector<double> slope;            // per row; empty when !has_slope

    // CSR layout of rows per group, for deterministic scatter/gather.
    std::vector<std::int32_t> rows_offset;  // levels.size() + 1
    std::vector<std::int32_t> rows;
};

struct DesignMatrices {
    std::size_t n = 0;
    std::size_t p = 0;
    std::vector<double> y;
    std::vector<double> X;  // column-major, n * p
    std::vector<std::string> col_names;
    bool has_intercept = false;
    std::vector<std::size_t> continuous_cols;  // indices into col_names

    std::vector<RandomTermDesign> terms;

    std::size_t rank = 0;
    std::vector<std::string> warnings;

    double x(std::size_t row, std::size_t col) const { return X[col * n + row]; }
    const double* col(std::size_t c) const { return X.data() + c * n; }
};

DesignMatrices build_design(const CheckedSpec& checked, const FitFrame& frame);

}  // namespace disparity
