#include "disparity/modelspec.hpp"

#include <algorithm>
#include <cctype>
#include <map>
#include <set>

#include "disparity/common.hpp"
#include "disparity/linalg.hpp"

namespace disparity {

std::string RandomTerm::group_name() const {
    std::string g = group_factors.front();
    for (std::size_t i = 1; i < group_factors.size(); ++i) g += ":" + group_factors[i];
    return g;
}

std::string RandomTerm::name() const {
    return slope.empty() ? group_name() : slope + "|" + group_name();
}

std::string ModelSpec::print() const {
    std::string s = response + " ~";
    bool first = true;
    auto add = [&](const std::string& term) {
        s += first ? " " : " + ";
        s += term;
        first = false;
    };
    if (intercept) add("1");
    for (const auto& c : continuous) add(c);
    for (const auto& c : categoricals) add("C(" + c + ")");
    for (const auto& rt : random_terms) {
        if (rt.slope.empty()) {
            add("(1|" + rt.group_name() + ")");
        } else {
            add("(0 + " + rt.slope + "|" + rt.group_name() + ")");
        }
    }
    return s;
}

namespace {

struct Lexer {
    const std::string& src;
    std::size_t pos = 0;

    void skip_ws() {
        while (pos < src.size() && std::isspace(static_cast<unsigned char>(src[pos]))) ++pos;
    }
    bool eof() {
        skip_ws();
        return pos >= src.size();
    }
    char peek() {
        skip_ws();
        return pos < src.size() ? src[pos] : '\0';
    }
    bool accept(char c) {
        skip_ws();
        if (pos < src.size() && src[pos] == c) {
            ++pos;
            return true;
        }
        return false;
    }
    void expect(char c, const char* what) {
        if (!accept(c)) throw ParseError(std::string("expected '") + c + "' " + what, pos);
    }
    std::string name() {
        skip_ws();
        std::size_t start = pos;
        auto is_name_char = [](char ch) {
            return std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '.';
        };
        if (pos >= src.size() ||
            !(std::isalpha(static_cast<unsigned char>(src[pos])) || src[pos] == '_')) {
            throw ParseError("expected identifier", pos);
        }
        while (pos < src.size() && is_name_char(src[pos])) ++pos;
        return src.substr(start, pos - start);
    }
};

std::vector<std::string> parse_group(Lexer& lex) {
    std::vector<std::string> factors;
    if (lex.peek() == ')') throw ParseError("empty group in random term", lex.pos);
    factors.push_back(lex.name());
    if (lex.accept(':')) factors.push_back(lex.name());
    return factors;
}

}  // namespace

ModelSpec parse_formula(const std::string& formula) {
    Lexer lex{formula};
    ModelSpec spec;
    spec.response = lex.name();
    lex.expect('~', "after response");

    std::set<std::string> seen;
    auto check_dup = [&](const std::string& canonical) {
        if (!seen.insert(canonical).second) {
            throw ParseError("duplicate term '" + canonical + "'", lex.pos);
        }
    };

    bool first = true;
    while (true) {
        if (!first && !lex.accept('+')) break;
        first = false;
        if (lex.eof()) throw ParseError("expected term", lex.pos);

        const char c = lex.peek();
        if (c == '1') {
            ++lex.pos;
            check_dup("1");
            spec.intercept = true;
        } else if (c == '(') {
            lex.expect('(', "");
            RandomTerm rt;
            const char inner = lex.peek();
            if (inner == '1') {
                ++lex.pos;
                rt.intercept = true;
            } else if (inner == '0') {
                ++lex.pos;
                lex.expect('+', "after '0' in random term");
                rt.intercept = false;
                rt.slope = lex.name();
            } else {
                throw ParseError("random term must start with '1' or '0 + name'", lex.pos);
            }
            lex.expect('|', "in random term");
            rt.group_factors = parse_group(lex);
            if (rt.group_factors.size() > 2) {
                throw ParseError("colon groups take at most two factors", lex.pos);
            }
            lex.expect(')', "closing random term");
            check_dup("(" + (rt.slope.empty() ? std::string("1") : "0+" + rt.slope) + "|" +
                      rt.group_name() + ")");
            spec.random_terms.push_back(std::move(rt));
        } else {
            const std::string nm = lex.name();
            if (nm == "C" && lex.peek() == '(') {
                lex.expect('(', "");
                const std::string factor = lex.name();
                lex.expect(')', "closing C()");
                check_dup("C(" + factor + ")");
                spec.categoricals.push_back(factor);
            } else {
                check_dup(nm);
                spec.continuous.push_back(nm);
            }
        }
        if (lex.eof()) break;
    }
    if (!lex.eof()) throw ParseError("unexpected trailing input", lex.pos);
    if (!spec.intercept && spec.continuous.empty() && spec.categoricals.empty() &&
        spec.random_terms.empty()) {
        throw ParseError("formula has no terms", lex.pos);
    }
    return spec;
}

namespace {

std::vector<std::string> observed_levels(const std::vector<std::string>& col) {
    std::set<std::string> s(col.begin(), col.end());
    return {s.begin(), s.end()};
}

}  // namespace

CheckedSpec validate(const ModelSpec& spec, const FitFrame& frame) {
    CheckedSpec out;
    out.spec = spec;

    if (frame.continuous_column(spec.response) == nullptr) {
        throw ValidationError("response column '" + spec.response + "' not found in frame");
    }
    for (const auto& c : spec.continuous) {
        if (frame.continuous_column(c) == nullptr) {
            throw ValidationError("continuous column '" + c + "' not found in frame");
        }
    }
    std::vector<std::string> kept;
    for (const auto& f : spec.categoricals) {
        const auto* col = frame.categorical_column(f);
        if (col == nullptr) {
            throw ValidationError("categorical column '" + f + "' not found in frame");
        }
        if (observed_levels(*col).size() < 2) {
            out.warnings.push_back("factor '" + f +
                                   "' has a single observed level; absorbed into the intercept");
            continue;
        }
        kept.push_back(f);
    }
    out.spec.categoricals = kept;

    for (const auto& rt : spec.random_terms) {
        for (const auto& g : rt.group_factors) {
            if (frame.categorical_column(g) == nullptr) {
                throw ValidationError("grouping column '" + g + "' not found in frame");
            }
        }
        if (!rt.slope.empty() && frame.continuous_column(rt.slope) == nullptr) {
            throw ValidationError("slope column '" + rt.slope + "' not found in frame");
        }
    }
    return out;
}

DesignMatrices build_design(const CheckedSpec& checked, const FitFrame& frame) {
    const ModelSpec& spec = checked.spec;
    const std::size_t n = frame.n();
    DesignMatrices d;
    d.n = n;
    d.warnings = checked.warnings;
    d.has_intercept = spec.intercept;
    d.y = *frame.continuous_column(spec.response);

    // Fixed-effect columns: intercept, continuous (formula order), then one
    // treatment-coded block per categorical with the lexicographically first
    // observed level as reference.
    std::vector<std::vector<double>> cols;
    if (spec.intercept) {
        d.col_names.push_back("Intercept");
        cols.emplace_back(n, 1.0);
    }
    for (const auto& cname : spec.continuous) {
        d.continuous_cols.push_back(d.col_names.size());
        d.col_names.push_back(cname);
        cols.push_back(*frame.continuous_column(cname));
    }
    for (const auto& f : spec.categoricals) {
        const auto& col = *frame.categorical_column(f);
        auto levels = observed_levels(col);
        for (std::size_t li = 1; li < levels.size(); ++li) {
            d.col_names.push_back(f + "[" + levels[li] + "]");
            std::vector<double> ind(n, 0.0);
            for (std::size_t i = 0; i < n; ++i) {
                if (col[i] == levels[li]) ind[i] = 1.0;
            }
            cols.push_back(std::move(ind));
        }
    }
    d.p = cols.size();
    d.X.resize(d.p * n);
    for (std::size_t c = 0; c < d.p; ++c) {
        std::copy(cols[c].begin(), cols[c].end(), d.X.begin() + static_cast<long>(c * n));
    }

    // Random terms: groups indexed over observed levels (or observed pairs
    // for colon interactions), sorted for determinism.
    for (const auto& rt : spec.random_terms) {
        RandomTermDesign td;
        td.name = rt.name();
        std::vector<std::string> key(n);
        if (rt.group_factors.size() == 1) {
            key = *frame.categorical_column(rt.group_factors[0]);
        } else {
            const auto& a = *frame.categorical_column(rt.group_factors[0]);
            const auto& b = *frame.categorical_column(rt.group_factors[1]);
            for (std::size_t i = 0; i < n; ++i) key[i] = a[i] + ":" + b[i];
        }
        td.levels = observed_levels(key);
        std::map<std::string, std::int32_t> index;
        for (std::size_t i = 0; i < td.levels.size(); ++i) {
            index[td.levels[i]] = static_cast<std::int32_t>(i);
        }
        td.group.resize(n);
        for (std::size_t i = 0; i < n; ++i) td.group[i] = index[key[i]];
        if (!rt.slope.empty()) {
            td.has_slope = true;
            td.slope = *frame.continuous_column(rt.slope);
        }
        // CSR rows per group.
        td.rows_offset.assign(td.levels.size() + 1, 0);
        for (std::size_t i = 0; i < n; ++i) td.rows_offset[td.group[i] + 1]++;
        for (std::size_t g = 0; g < td.levels.size(); ++g) {
            td.rows_offset[g + 1] += td.rows_offset[g];
        }
        td.rows.resize(n);
        std::vector<std::int32_t> cursor(td.rows_offset.begin(), td.rows_offset.end() - 1);
        for (std::size_t i = 0; i < n; ++i) {
            td.rows[cursor[td.group[i]]++] = static_cast<std::int32_t>(i);
        }
        d.terms.push_back(std::move(td));
    }

    // Rank check via the Gram matrix.
    if (d.p > 0) {
        Matrix gram(d.p, d.p, 0.0);
        for (std::size_t a = 0; a < d.p; ++a) {
            for (std::size_t b = a; b < d.p; ++b) {
                double s = 0.0;
                const double* ca = d.col(a);
                const double* cb = d.col(b);
                for (std::size_t i = 0; i < n; ++i) s += ca[i] * cb[i];
                gram(a, b) = gram(b, a) = s;
            }
        }
        d.rank = gram_rank(gram);
        if (d.rank < d.p) {
            d.warnings.push_back("design matrix is rank deficient (rank " +
                                 std::to_string(d.rank) + " of " + std::to_string(d.p) +
                                 " columns); a factor is confounded");
        }
    }
    return d;
}

}  // namespace disparity
