#include "blq/problem.hpp"

#include "blq/errors.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace blq {

CoefficientExpr::CoefficientExpr(int rows, int cols, std::vector<Expression> entries)
    : rows_(rows), cols_(cols), entries_(std::move(entries)) {
    if (rows_ < 0 || cols_ < 0 || entries_.size() != static_cast<std::size_t>(rows_ * cols_))
        throw ValidationError("coefficient matrix has inconsistent shape");
    for (const auto& e : entries_) {
        uses_s_ = uses_s_ || e.depends_on_s();
        uses_w_ = uses_w_ || e.depends_on_w();
    }
}

CoefficientExpr CoefficientExpr::constant(const Mat& value) {
    std::vector<Expression> entries;
    entries.reserve(static_cast<std::size_t>(value.size()));
    for (Eigen::Index c = 0; c < value.cols(); ++c)
        for (Eigen::Index r = 0; r < value.rows(); ++r) entries.push_back(Expression::constant(value(r, c)));
    return CoefficientExpr(static_cast<int>(value.rows()), static_cast<int>(value.cols()), std::move(entries));
}

Mat CoefficientExpr::evaluate(double s, double w) const {
    Mat out(rows_, cols_);
    for (int c = 0; c < cols_; ++c)
        for (int r = 0; r < rows_; ++r) out(r, c) = entry(r, c).evaluate(s, w);
    return out;
}

Coefficients ProblemInstance::coefficients(double s, double w) const {
    return {A.evaluate(s, w), B.evaluate(s, w), C.evaluate(s, w),
            Q.evaluate(s, w), N.evaluate(s, w), R.evaluate(s, w)};
}

Mat ProblemInstance::terminal_weight() const { return G.evaluate(t0, 0.0); }

Vec ProblemInstance::terminal_state(double w) const { return xi.evaluate(T, w); }

bool ProblemInstance::is_deterministic() const noexcept {
    return !(A.depends_on_w() || B.depends_on_w() || C.depends_on_w() || Q.depends_on_w() ||
             N.depends_on_w() || R.depends_on_w());
}

void ProblemInstance::check_shapes() const {
    auto expect = [](const CoefficientExpr& e, int r, int c, const char* name) {
        if (e.rows() != r || e.cols() != c) {
            std::ostringstream msg;
            msg << "coefficient " << name << " must be " << r << "x" << c << ", got " << e.rows() << "x"
                << e.cols();
            throw ValidationError(msg.str());
        }
    };
    if (n < 1 || n > kMaxDim) throw ValidationError("state dimension n must lie in [1, 6]");
    if (m < 1 || m > kMaxDim) throw ValidationError("control dimension m must lie in [1, 6]");
    if (!(t0 >= 0.0 && t0 < T) || !std::isfinite(T)) throw ValidationError("horizon must satisfy 0 <= t0 < T");
    if (!(delta > 0.0)) throw ValidationError("delta must be positive");
    if (!(lambda_up >= delta)) throw ValidationError("lambda must be at least delta");
    expect(A, n, n, "A");
    expect(B, n, m, "B");
    expect(C, n, n, "C");
    expect(Q, n, n, "Q");
    expect(N, n, n, "N");
    expect(R, m, m, "R");
    expect(G, n, n, "G");
    expect(xi, n, 1, "xi");
}

namespace {

Expression entry_from_json(const nlohmann::json& v, const char* name) {
    if (v.is_number()) return Expression::constant(v.get<double>());
    if (v.is_string()) return Expression::parse(v.get<std::string>());
    throw ValidationError(std::string("entry of ") + name + " must be a number or an expression string");
}

CoefficientExpr matrix_from_json(const nlohmann::json& v, const char* name) {
    if (v.is_number() || v.is_string()) return CoefficientExpr(1, 1, {entry_from_json(v, name)});
    if (!v.is_array() || v.empty()) throw ValidationError(std::string(name) + " must be a non-empty array");
    const int rows = static_cast<int>(v.size());
    int cols = -1;
    std::vector<std::vector<Expression>> table;
    for (const auto& row : v) {
        std::vector<Expression> parsed;
        if (row.is_array()) {
            for (const auto& e : row) parsed.push_back(entry_from_json(e, name));
        } else {
            parsed.push_back(entry_from_json(row, name));
        }
        if (cols < 0) cols = static_cast<int>(parsed.size());
        if (static_cast<int>(parsed.size()) != cols || cols == 0)
            throw ValidationError(std::string(name) + " has ragged rows");
        table.push_back(std::move(parsed));
    }
    std::vector<Expression> entries;
    for (int c = 0; c < cols; ++c)
        for (int r = 0; r < rows; ++r) entries.push_back(table[r][c]);
    return CoefficientExpr(rows, cols, std::move(entries));
}

CoefficientExpr vector_from_json(const nlohmann::json& v, const char* name) {
    CoefficientExpr raw = matrix_from_json(v, name);
    if (raw.cols() == 1) return raw;
    if (raw.rows() == 1) {
        std::vector<Expression> entries;
        for (int c = 0; c < raw.cols(); ++c) entries.push_back(raw.entry(0, c));
        return CoefficientExpr(raw.cols(), 1, std::move(entries));
    }
    throw ValidationError(std::string(name) + " must be a vector");
}

template <typename T>
T required(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) throw ValidationError(std::string("missing field '") + key + "'");
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(std::string("field '") + key + "': " + e.what());
    }
}

const nlohmann::json& required_node(const nlohmann::json& j, const char* key) {
    if (!j.contains(key)) throw ValidationError(std::string("missing field '") + key + "'");
    return j.at(key);
}

} // namespace

ProblemInstance problem_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw ValidationError("problem file must contain a JSON object");
    ProblemInstance p;
    p.n = required<int>(j, "n");
    p.m = required<int>(j, "m");
    p.t0 = j.contains("t0") ? required<double>(j, "t0") : 0.0;
    p.T = required<double>(j, "T");
    p.A = matrix_from_json(required_node(j, "A"), "A");
    p.B = matrix_from_json(required_node(j, "B"), "B");
    p.C = matrix_from_json(required_node(j, "C"), "C");
    p.Q = matrix_from_json(required_node(j, "Q"), "Q");
    p.N = matrix_from_json(required_node(j, "N"), "N");
    p.R = matrix_from_json(required_node(j, "R"), "R");
    p.G = matrix_from_json(required_node(j, "G"), "G");
    p.xi = vector_from_json(required_node(j, "xi"), "xi");
    p.delta = required<double>(j, "delta");
    p.lambda_up = required<double>(j, "lambda");
    if (p.G.depends_on_s()) throw ValidationError("G may depend on w only");
    p.check_shapes();
    return p;
}

ProblemInstance load_problem(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open problem file " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError("malformed JSON in " + path.string() + ": " + e.what());
    }
    return problem_from_json(j);
}

std::vector<SamplePoint> default_sample_grid(const ProblemInstance& p) {
    std::vector<SamplePoint> grid;
    constexpr int kTimes = 11;
    constexpr int kValues = 121;
    grid.reserve(kTimes * kValues);
    for (int i = 0; i < kTimes; ++i) {
        const double s = p.t0 + (p.T - p.t0) * i / (kTimes - 1);
        for (int j = 0; j < kValues; ++j) grid.emplace_back(s, -6.0 + 12.0 * j / (kValues - 1));
    }
    return grid;
}

AssumptionReport validate_assumptions(const ProblemInstance& p, const std::vector<SamplePoint>& samples,
                                      double tolerance) {
    AssumptionReport rep;
    constexpr double inf = std::numeric_limits<double>::infinity();
    rep.observed_min_eig_N = inf;
    rep.observed_max_eig_N = -inf;
    rep.observed_min_eig_R = inf;
    rep.observed_min_eig_Q = inf;
    rep.observed_min_eig_G = inf;
    bool h1 = true, h2 = true, h3 = true;
    constexpr double kSymmetryTol = 1e-12;

    auto note = [&](std::string msg) {
        if (rep.messages.size() < 20) rep.messages.push_back(std::move(msg));
    };
    auto sym_check = [&](const Mat& m, const char* name, bool& flag) {
        const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
        rep.max_asymmetry = std::max(rep.max_asymmetry, asym);
        if (asym > kSymmetryTol * std::max(1.0, m.cwiseAbs().maxCoeff())) {
            flag = false;
            note(std::string(name) + " is not symmetric");
        }
    };

    for (const auto& [s, w] : samples) {
        ++rep.sample_count;
        Coefficients c;
        Mat g;
        Vec x;
        try {
            c = p.coefficients(s, w);
            g = p.G.evaluate(p.t0, w);
            x = p.xi.evaluate(p.T, w);
        } catch (const DomainError& e) {
            h1 = false;
            note(e.what());
            continue;
        }
        const bool finite = c.A.allFinite() && c.B.allFinite() && c.C.allFinite() && c.Q.allFinite() &&
                            c.N.allFinite() && c.R.allFinite() && g.allFinite() && x.allFinite();
        if (!finite) {
            h1 = false;
            note("non-finite coefficient value");
            continue;
        }
        Eigen::JacobiSVD<Mat> sa(c.A), sb(c.B), sc(c.C);
        rep.observed_max_norms = std::max({rep.observed_max_norms, sa.singularValues()(0),
                                           sb.singularValues()(0), sc.singularValues()(0)});

        sym_check(c.Q, "Q", h2);
        sym_check(c.R, "R", h2);
        sym_check(g, "G", h2);
        sym_check(c.N, "N", h3);

        const double q = min_eigenvalue(c.Q);
        const double r = min_eigenvalue(c.R);
        const double gm = min_eigenvalue(g);
        Eigen::SelfAdjointEigenSolver<Mat> en(symmetrized(c.N), Eigen::EigenvaluesOnly);
        const double nmin = en.eigenvalues().minCoeff();
        const double nmax = en.eigenvalues().maxCoeff();
        rep.observed_min_eig_Q = std::min(rep.observed_min_eig_Q, q);
        rep.observed_min_eig_R = std::min(rep.observed_min_eig_R, r);
        rep.observed_min_eig_G = std::min(rep.observed_min_eig_G, gm);
        rep.observed_min_eig_N = std::min(rep.observed_min_eig_N, nmin);
        rep.observed_max_eig_N = std::max(rep.observed_max_eig_N, nmax);

        if (q < -tolerance || gm < -tolerance || nmin < -tolerance) h2 = false;
        if (r < p.delta - tolerance) h2 = false;
        if (nmin < p.delta - tolerance || nmax > p.lambda_up + tolerance) h3 = false;
    }
    if (rep.observed_min_eig_R < p.delta - tolerance) note("R falls below delta");
    if (rep.observed_min_eig_N < p.delta - tolerance) note("N falls below delta");
    if (rep.observed_max_eig_N > p.lambda_up + tolerance) note("N exceeds lambda");
    if (rep.observed_min_eig_Q < -tolerance) note("Q is not positive semidefinite");
    if (rep.observed_min_eig_G < -tolerance) note("G is not positive semidefinite");
    rep.h1_ok = h1 && rep.sample_count > 0;
    rep.h2_ok = h2 && rep.h1_ok;
    rep.h3_ok = h3 && rep.h1_ok;
    return rep;
}

nlohmann::json to_json(const AssumptionReport& r) {
    return {{"h1_ok", r.h1_ok},
            {"h2_ok", r.h2_ok},
            {"h3_ok", r.h3_ok},
            {"observed_min_eig_N", r.observed_min_eig_N},
            {"observed_max_eig_N", r.observed_max_eig_N},
            {"observed_min_eig_R", r.observed_min_eig_R},
            {"observed_min_eig_Q", r.observed_min_eig_Q},
            {"observed_min_eig_G", r.observed_min_eig_G},
            {"observed_max_norms", r.observed_max_norms},
            {"max_asymmetry", r.max_asymmetry},
            {"sample_count", r.sample_count},
            {"messages", r.messages}};
}

} // namespace blq
