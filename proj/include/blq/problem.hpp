#pragma once

#include "blq/expression.hpp"
#include "blq/linalg.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace blq {

// Matrix of scalar expressions with fixed shape.
class CoefficientExpr {
public:
    CoefficientExpr() = default;
    CoefficientExpr(int rows, int cols, std::vector<Expression> entries);
    static CoefficientExpr constant(const Mat& value);

    Mat evaluate(double s, double w) const;

    int rows() const noexcept { return rows_; }
    int cols() const noexcept { return cols_; }
    bool depends_on_w() const noexcept { return uses_w_; }
    bool depends_on_s() const noexcept { return uses_s_; }
    bool is_constant() const noexcept { return !uses_w_ && !uses_s_; }
    const Expression& entry(int r, int c) const { return entries_[static_cast<std::size_t>(c * rows_ + r)]; }

private:
    int rows_ = 0;
    int cols_ = 0;
    std::vector<Expression> entries_;  // column-major
    bool uses_s_ = false;
    bool uses_w_ = false;
};

// Coefficients of the state equation and the running cost at one (s, w).
struct Coefficients {
    Mat A, B, C, Q, N, R;
};

struct ProblemInstance {
    int n = 0;
    int m = 0;
    double t0 = 0.0;
    double T = 1.0;
    CoefficientExpr A, B, C, Q, N, R;
    CoefficientExpr G;   // terminal weight, evaluated at (t0, W(t0) = 0)
    CoefficientExpr xi;  // terminal state (n x 1), evaluated at (T, W(T))
    double delta = 0.0;
    double lambda_up = 0.0;

    Coefficients coefficients(double s, double w) const;
    Mat terminal_weight() const;
    Vec terminal_state(double w) const;
    // True when no coefficient of the dynamics or running cost depends on w.
    bool is_deterministic() const noexcept;

    // Shape and horizon checks; throws ValidationError.
    void check_shapes() const;
};

ProblemInstance problem_from_json(const nlohmann::json& j);
ProblemInstance load_problem(const std::filesystem::path& path);

struct AssumptionReport {
    bool h1_ok = false;
    bool h2_ok = false;
    bool h3_ok = false;
    double observed_min_eig_N = 0.0;
    double observed_max_eig_N = 0.0;
    double observed_min_eig_R = 0.0;
    double observed_min_eig_Q = 0.0;
    double observed_min_eig_G = 0.0;
    double observed_max_norms = 0.0;  // largest spectral norm of A, B, C seen
    double max_asymmetry = 0.0;
    long sample_count = 0;
    std::vector<std::string> messages;

    bool all_ok() const noexcept { return h1_ok && h2_ok && h3_ok; }
};

using SamplePoint = std::pair<double, double>;  // (s, w)

// Default audit grid: 11 times across the horizon times 121 values of w in [-6, 6].
std::vector<SamplePoint> default_sample_grid(const ProblemInstance& p);

AssumptionReport validate_assumptions(const ProblemInstance& p, const std::vector<SamplePoint>& samples,
                                      double tolerance = 1e-10);

nlohmann::json to_json(const AssumptionReport& r);

} // namespace blq
