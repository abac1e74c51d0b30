#pragma once

#include "blq/filtration.hpp"
#include "blq/levels.hpp"
#include "blq/problem.hpp"

#include <nlohmann/json.hpp>

#include <ostream>
#include <span>
#include <string>
#include <vector>

namespace blq {

// Sigma and Lambda on levels 0..K: one row per level when deterministic, one row per atom
// otherwise.
struct RiccatiSolution {
    int n = 0;
    bool per_atom = false;
    std::string route;
    Process sigma;
    Process lambda;
    long projections = 0;     // eigenvalue floors applied
    long clamps = 0;          // atoms whose conditional mean or martingale part was truncated
    double max_lambda = 0.0;  // largest |Lambda| entry seen

    Mat sigma_at(int k, Eigen::Index atom) const;
    Mat lambda_at(int k, Eigen::Index atom) const;
    int steps() const noexcept { return static_cast<int>(sigma.size()) - 1; }
};

struct ForwardRiccatiSolution {
    int n = 0;
    bool per_atom = false;
    double epsilon = 0.0;
    Process P;
    Process Pi;
    double min_eigenvalue = 0.0;  // recorded uniform positivity level
    long substeps = 0;
};

struct UndeterminedCoefficients {
    Mat tilde_A, tilde_Q, tilde_S, tilde_R, tilde_G;
};

// Coefficients of the standard-condition forward equation built from a candidate Sigma.
UndeterminedCoefficients undetermined_coefficients(const AtomCoefficients& c, const Mat& sigma);

// Backward RK4 for dSigma/ds = Sigma A^T + A Sigma + Sigma Q Sigma - B R^{-1} B^T - C (I + Sigma N)^{-1} Sigma C^T.
RiccatiSolution solve_riccati_deterministic(const ProblemInstance& p, const TimeGrid& grid);

// P_eps with P(T) = I / eps. Deterministic problems use substepped RK4; with a filtration the
// martingale part Pi is estimated by increment regression and each step integrates the
// frozen-Pi local equation.
ForwardRiccatiSolution solve_forward_riccati_eps(const ProblemInstance& p, const TimeGrid& grid, double epsilon);
ForwardRiccatiSolution solve_forward_riccati_eps(const ProblemInstance& p, const Filtration& f, double epsilon);

struct EpsLimitResult {
    RiccatiSolution limit;                 // smallest-eps member with the exact terminal value 0
    std::vector<RiccatiSolution> members;  // Sigma_eps = P_eps^{-1} for every eps
    std::vector<double> eps;
    std::vector<double> differences;       // sup |Sigma_{eps_i} - Sigma_{eps_{i+1}}|
    std::vector<double> min_order_gap;    // min eigenvalue of Sigma_{eps_i} - Sigma_{eps_{i+1}}
    std::vector<bool> monotone;
    std::vector<double> sigma_start;      // max eigenvalue of Sigma_eps at t0 (mean over atoms)
    double tail_estimate = 0.0;           // geometric extrapolation of the remaining error
    bool converged = false;
};

inline constexpr double kMonotoneTolerance = 1e-6;

// Throws ValidationError for a bad sequence and NonmonotoneError when strict and the PSD
// order Sigma_{eps_{i+1}} <= Sigma_{eps_i} fails beyond 1e-6.
EpsLimitResult eps_limit_sigma(const ProblemInstance& p, const TimeGrid& grid, std::span<const double> eps,
                               const Filtration* f = nullptr, bool strict = true,
                               double convergence_tolerance = 1e-2);

// Discrete backward recursion on the filtration. With S = (I + dt Sigma_{k+1} Q_{k+1})^{-1} Sigma_{k+1},
// Shat = E_k S, Lambda_k = -E_k[(S - Shat) dW]/dt, H = (I + Shat N)^{-1}, E = (I + dt A)^{-1}:
//   Sigma_k = E Shat E^T + dt [B R^{-1} B^T + C H Shat C^T + E Lambda H^T C^T + C H Lambda E^T
//                              - E Lambda N H Lambda E^T]
// This is the exact decoupling of the state scheme used by solve_state_bsde.
RiccatiSolution solve_riccati_markovian(const ProblemInstance& p, const Filtration& f);
RiccatiSolution solve_riccati_markovian(const CoefficientTable& table, const Filtration& f, int n);

// Pre-step contraction S = (I + dt Sigma_{k+1} Q_{k+1})^{-1} Sigma_{k+1} at every atom of level k+1
// (a single row for deterministic solutions).
Field contracted_sigma(const RiccatiSolution& sol, const LevelCoefficients& next, int k_next,
                       Eigen::Index atoms, double dt);

// sup |Ptilde - Sigma| where Ptilde solves the equation built from the candidate's
// undetermined coefficients. Per-atom candidates need the filtration they were built on.
double fixed_point_residual(const ProblemInstance& p, const RiccatiSolution& candidate, const TimeGrid& grid,
                            const Filtration* f = nullptr);

// Candidate shifted by shift * I at every sample.
RiccatiSolution shifted(const RiccatiSolution& sol, double shift);

// "k,t,Sigma_11..,Lambda_11.." (deterministic) or with a leading path column (per atom).
void write_sigma_csv(std::ostream& out, const RiccatiSolution& sol, const TimeGrid& grid, const Filtration* f,
                     Eigen::Index max_scenarios);

nlohmann::json to_json(const EpsLimitResult& r);

} // namespace blq
