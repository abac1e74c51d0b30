#pragma once

#include "blq/decoupler.hpp"
#include "blq/riccati.hpp"

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace blq {

enum class Route { automatic, ode, eps, markov };
enum class FiltrationKind { regression, lattice };

Route parse_route(const std::string& name);
std::string route_name(Route r);
FiltrationKind parse_filtration(const std::string& name);
std::string filtration_name(FiltrationKind f);

struct SolveConfig {
    int steps = 100;
    int paths = 10000;
    std::uint64_t seed = 1;
    int degree = 4;
    bool rational_feature = true;  // adds 1 / (1 + w^2) to the monomials
    Route route = Route::automatic;
    FiltrationKind filtration = FiltrationKind::regression;
    // Sequence used by the eps route; its last member is the returned limit.
    std::vector<double> eps{1e-2, 1e-4, 1e-6, 1e-8};
};

// ode for coefficients without w-dependence, markov otherwise; explicit choices are checked.
Route resolve_route(const ProblemInstance& p, Route requested);

std::shared_ptr<const Filtration> make_filtration(const ProblemInstance& p, const SolveConfig& cfg);

struct RiccatiOutcome {
    RiccatiSolution sigma;
    std::optional<EpsLimitResult> eps;
};

RiccatiOutcome solve_riccati(const ProblemInstance& p, const Filtration& f, Route route,
                             const std::vector<double>& eps, const CoefficientTable* table = nullptr);

struct SolveOutcome {
    std::shared_ptr<const Filtration> filtration;
    std::shared_ptr<const CoefficientTable> table;  // coefficients at every atom, shared by all passes
    Route route = Route::automatic;
    RiccatiOutcome riccati;
    Field xi;
    AuxiliaryBackward aux;
    ForwardSolution forward;
    OptimalTriple triple;
    double decoupling = 0.0;
};

// Riccati, auxiliary equation, forward pass and reconstruction on one filtration.
SolveOutcome run_solve(const ProblemInstance& p, const SolveConfig& cfg);
SolveOutcome run_solve(const ProblemInstance& p, std::shared_ptr<const Filtration> f, Route route,
                       const std::vector<double>& eps);

// Fixed-point certification threshold for a route: 1e-6 for the deterministic routes,
// 5e-2 for per-atom solutions.
double fixed_point_tolerance(const RiccatiSolution& sigma);

} // namespace blq
