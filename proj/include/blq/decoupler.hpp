#pragma once

#include "blq/bsde.hpp"
#include "blq/riccati.hpp"

#include <nlohmann/json.hpp>

#include <ostream>

namespace blq {

// phi on levels 0..K, beta on levels 0..K-1.
struct AuxiliaryBackward {
    Process phi;
    Process beta;
    double max_phi = 0.0;     // largest |entry| seen; the equation has unbounded coefficients
    double max_beta = 0.0;
    double max_lambda = 0.0;
};

// Adjoint process X on levels 0..K.
struct ForwardSolution {
    Process X;
    double max_abs = 0.0;
};

struct OptimalTriple {
    BackwardSolution state;  // Y*, Z*
    Process X;
    ControlProcess u;
};

// Backward induction for the auxiliary equation, phi(T) = -xi. One step, with
// f = (I + dt Sigma_{k+1} Q_{k+1})^{-1} phi_{k+1}, fhat = E_k f, beta_k = -E_k[(f - fhat) dW]/dt:
//   phi_k = E fhat + dt (C - E Lambda N) H beta_k,   H = (I + Shat N)^{-1}
// Throws BlowupError when |phi| exceeds 1e6.
AuxiliaryBackward solve_auxiliary_bsde(const ProblemInstance& p, const Filtration& f, const RiccatiSolution& sigma,
                                       const Field& xi);
AuxiliaryBackward solve_auxiliary_bsde(const ProblemInstance& p, const CoefficientTable& table, const Filtration& f,
                                       const RiccatiSolution& sigma, const Field& xi);

// Explicit forward pass from X_0 = -(I + G Sigma_0)^{-1} G phi_0:
//   Xm      = E^T X_k + dW (N Z_k - C^T X_k),   Z_k = H [(Shat C^T + Lambda E^T) X_k + beta_k]
//   X_{k+1} = Xm + dt Q_{k+1} Y_{k+1},          Y_{k+1} = -(I + dt Sigma Q)^{-1} (Sigma Xm + phi)
// Throws BlowupError when sup |X| > 1e6.
ForwardSolution solve_forward_sde(const ProblemInstance& p, const Filtration& f, const RiccatiSolution& sigma,
                                  const AuxiliaryBackward& aux);
ForwardSolution solve_forward_sde(const ProblemInstance& p, const CoefficientTable& table, const Filtration& f,
                                  const RiccatiSolution& sigma, const AuxiliaryBackward& aux);

// Y* = -Sigma X - phi, Z* = H [(Shat C^T + Lambda E^T) X + beta], u* = R^{-1} B^T X, pointwise.
OptimalTriple reconstruct_triple(const ProblemInstance& p, const Filtration& f, const RiccatiSolution& sigma,
                                 const AuxiliaryBackward& aux, const ForwardSolution& X);
OptimalTriple reconstruct_triple(const ProblemInstance& p, const CoefficientTable& table, const Filtration& f,
                                 const RiccatiSolution& sigma, const AuxiliaryBackward& aux,
                                 const ForwardSolution& X);

struct ResidualReport {
    double backward_rms = 0.0;  // one-step defects of the state equation
    double forward_rms = 0.0;   // one-step defects of the adjoint equation
    double terminal_rms = 0.0;  // |Y(T) - xi|
    double initial_rms = 0.0;   // |X(t0) - G Y(t0)|
    double decoupling_max = 0.0;
};

// Euler-form one-step defects of the coupled system, summed over steps per scenario and
// aggregated as root-mean-square over scenarios.
ResidualReport fbsde_residuals(const ProblemInstance& p, const Filtration& f, const OptimalTriple& triple,
                               const Field& xi);
ResidualReport fbsde_residuals(const ProblemInstance& p, const CoefficientTable& table, const Filtration& f,
                               const OptimalTriple& triple, const Field& xi);

// max |Y + Sigma X + phi| and max |Z - H[(Shat C^T + Lambda E^T) X + beta]|.
double decoupling_residual(const ProblemInstance& p, const Filtration& f, const RiccatiSolution& sigma,
                           const AuxiliaryBackward& aux, const OptimalTriple& triple);
double decoupling_residual(const ProblemInstance& p, const CoefficientTable& table, const Filtration& f,
                           const RiccatiSolution& sigma, const AuxiliaryBackward& aux, const OptimalTriple& triple);

nlohmann::json to_json(const ResidualReport& r);

// "path,k,t,u_1..u_m"
void write_control_csv(std::ostream& out, const Filtration& f, const ControlProcess& u, Eigen::Index max_scenarios);
// "path,k,t,Y_i..,Z_i..,X_i..,u_j.."; Z and u are empty on the terminal row.
void write_triple_csv(std::ostream& out, const Filtration& f, const OptimalTriple& triple,
                      Eigen::Index max_scenarios);

} // namespace blq
