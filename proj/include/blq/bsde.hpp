#pragma once

#include "blq/filtration.hpp"
#include "blq/levels.hpp"
#include "blq/problem.hpp"

#include <ostream>

namespace blq {

// u on levels 0..K-1, one m-vector per atom.
struct ControlProcess {
    Process u;
};

// Y on levels 0..K, Z on levels 0..K-1.
struct BackwardSolution {
    Process Y;
    Process Z;
};

ControlProcess zero_control(const Filtration& f, int m);

// <a, b> = sum_k dt * mean_k <a_k, b_k> over levels 0..K-1.
double control_inner(const Filtration& f, const ControlProcess& a, const ControlProcess& b);
double control_norm(const Filtration& f, const ControlProcess& a);
// a + alpha * b
ControlProcess control_axpy(const ControlProcess& a, double alpha, const ControlProcess& b);

// Backward induction for dY = (AY + Bu + CZ) ds + Z dW, Y(T) = xi:
//   Z_k = E_k[(Y_{k+1} - E_k Y_{k+1}) dW_k] / dt
//   Y_k = (I + dt A_k)^{-1} E_k Y_{k+1} - dt (B_k u_k + C_k Z_k)
BackwardSolution solve_state_bsde(const ProblemInstance& p, const Filtration& f, const ControlProcess& u,
                                  const Field& xi);
// Same, reusing coefficients evaluated once for repeated solves.
BackwardSolution solve_state_bsde(const CoefficientTable& coef, const Filtration& f, const ControlProcess& u,
                                  const Field& xi);

// E[sup_k |Y_k|^2 + sum_k |Z_k|^2 dt] / E[|xi|^2 + sum_k |u_k|^2 dt]; 0 for the zero solution.
double audit_apriori_estimate(const Filtration& f, const BackwardSolution& sol, const ControlProcess& u,
                              const Field& xi);

// "path,k,t,Y_1..Y_n,Z_1..Z_n"; Z columns are empty on the terminal row.
void write_backward_csv(std::ostream& out, const Filtration& f, const BackwardSolution& sol,
                        Eigen::Index max_scenarios);

} // namespace blq
