#pragma once

#include "blq/bsde.hpp"
#include "blq/decoupler.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <memory>
#include <optional>

namespace blq {

// Discrete cost
//   J = mean <G Y_0, Y_0> + sum_{k=1..K} dt mean <Q_k Y_k, Y_k>
//       + sum_{k=0..K-1} dt mean (<N_k Z_k, Z_k> + <R_k u_k, u_k>)
// with the state from solve_state_bsde. The state term uses right endpoints so that the
// decoupled solution is the exact minimizer of this functional.
struct CostBreakdown {
    double total = 0.0;
    double terminal_part = 0.0;
    double q_part = 0.0;
    double n_part = 0.0;
    double r_part = 0.0;
    double standard_error = 0.0;      // of the scenario mean
    Eigen::VectorXd per_scenario;     // total cost along each scenario
};

// Coefficients and terminal data bound to one filtration; all cost and oracle computations
// share it so comparisons use common random numbers.
class DiscreteOperatorBundle {
public:
    DiscreteOperatorBundle(const ProblemInstance& p, const Filtration& f);
    DiscreteOperatorBundle(const ProblemInstance& p, const Filtration& f,
                           std::shared_ptr<const CoefficientTable> table);

    const ProblemInstance& problem() const noexcept { return p_; }
    const Filtration& filtration() const noexcept { return f_; }
    const CoefficientTable& table() const noexcept { return *table_; }
    const Field& xi() const noexcept { return xi_; }
    // Number of control coordinates: sum_k atoms(k) * m.
    std::int64_t dimension() const noexcept { return dimension_; }

    // u -> (Y, Z) with the given terminal value (zero for the pure control map).
    BackwardSolution state(const ControlProcess& u, const Field& terminal) const;
    BackwardSolution state(const ControlProcess& u) const { return state(u, xi_); }
    // Transpose of u -> (Y_0..Y_{K-1}, Z) under the level inner products: returns g with
    // sum_k mean <g_k, u_k> = sum_k mean <seedY_k, Y_k> + sum_k mean <seedZ_k, Z_k>.
    ControlProcess adjoint(const Process& seedY, const Process& seedZ) const;

    CostBreakdown cost(const ControlProcess& u) const;
    // Hessian action in the control inner product: the quadratic part of J is <H u, u>.
    ControlProcess hessian(const ControlProcess& u) const;
    // Linear term: J(u) = <H u, u> + 2 <b, u> + J(0).
    ControlProcess linear_term() const;
    // Gradient-side adjoint of the state at u: X with X_0 = G Y_0 and
    // X_{k+1} = E^T X_k + dW (N Z_k - C^T X_k) + dt Q_{k+1} Y_{k+1}.
    Process adjoint_state(const BackwardSolution& state) const;

    // |<L u, v> - <u, L* v>| / (|u| |v|) for random u, v drawn from seed.
    double adjoint_test(std::uint64_t seed) const;
    // min over samples of <H u, u> / |u|^2 for random u.
    double coercivity_ratio(std::uint64_t seed, int samples) const;

    ControlProcess random_control(std::uint64_t seed) const;

private:
    // Half-gradients of J with respect to Y and Z at a state.
    void cost_seeds(const BackwardSolution& s, Process& seedY, Process& seedZ) const;
    // g / dt + R u: the control-inner-product gradient from an adjoint output.
    ControlProcess with_control_weight(ControlProcess g, const ControlProcess& u, bool add_weight) const;

    const ProblemInstance& p_;
    const Filtration& f_;
    std::shared_ptr<const CoefficientTable> table_;
    Field xi_;
    Field zero_terminal_;
    std::int64_t dimension_ = 0;
};

CostBreakdown evaluate_cost(const DiscreteOperatorBundle& bundle, const ControlProcess& u);

struct QuadraticFit {
    double linear = 0.0;     // b
    double quadratic = 0.0;  // a
    double constant = 0.0;   // c
    double linear_stderr = 0.0;
};

// Exact interpolation of g(e) = J(u + e d) through e in {-step, 0, step}; b's standard
// error comes from the scenario-wise fits.
QuadraticFit quadratic_expansion_check(const DiscreteOperatorBundle& bundle, const ControlProcess& u,
                                       const ControlProcess& direction, double step);

struct OracleResult {
    ControlProcess u;
    double cost = 0.0;
    int iterations = 0;
    double residual = 0.0;
};

// Conjugate gradient on H u = -b; throws NoConvergenceError after max_iters.
OracleResult oracle_minimize(const DiscreteOperatorBundle& bundle, int max_iters, double tol);

// Pass thresholds; every flag in the report compares a measurement to one of these.
struct VerifyTolerances {
    double stationarity_construction = 1e-6;
    double stationarity_resolved = 5e-2;
    double expansion_sigmas = 3.0;
    double expansion_floor = 1e-10;      // relative to 1 + |a| + |J| when the stderr vanishes
    double oracle_relative = 5e-2;
    double oracle_cost_gap = 1e-4;
    double residual_rms = 5e-2;
    double fixed_point = 5e-2;
    double adjoint = 1e-8;
    int oracle_max_iters = 500;
    double oracle_tol = 1e-10;
    int directions = 3;
    double step = 1e-1;
    std::uint64_t seed = 1;
    bool run_oracle = true;
};

struct VerificationReport {
    double stationarity_residual = 0.0;          // |R u - B^T X| along the triple's X
    double stationarity_resolved = 0.0;          // same with X re-solved from the state under u
    double quadratic_expansion_linear_coeff = 0.0;  // max |b| over directions
    double quadratic_expansion_linear_stderr = 0.0; // its standard error
    double quadratic_expansion_min_convexity = 0.0; // min a / (delta |d|^2)
    bool expansion_linear_ok = false;
    std::optional<double> oracle_control_distance;  // |u - u_oracle|
    std::optional<double> oracle_control_norm;
    std::optional<double> cost_gap;                 // J(u) - J(u_oracle)
    std::optional<int> oracle_iterations;
    double adjoint_consistency = 0.0;
    double coercivity_ratio = 0.0;                  // min <Hu,u>/|u|^2
    double value = 0.0;
    double value_stderr = 0.0;
    CostBreakdown cost;
    ResidualReport residuals;
    std::optional<double> fixed_point_residual;
    double fixed_point_tolerance = 0.0;

    bool stationarity_ok = false;
    bool expansion_ok = false;
    bool oracle_ok = true;
    bool residuals_ok = false;
    bool fixed_point_ok = true;
    bool adjoint_ok = false;
    bool coercivity_ok = false;

    bool all_ok() const noexcept {
        return stationarity_ok && expansion_ok && oracle_ok && residuals_ok && fixed_point_ok && adjoint_ok &&
               coercivity_ok;
    }
};

VerificationReport verify_optimality(const DiscreteOperatorBundle& bundle, const OptimalTriple& triple,
                                     const VerifyTolerances& tol = {});

nlohmann::json to_json(const CostBreakdown& c);
nlohmann::json to_json(const VerificationReport& r);

} // namespace blq
