#include "blq/pipeline.hpp"

#include "blq/errors.hpp"

namespace blq {

Route parse_route(const std::string& name) {
    if (name == "auto") return Route::automatic;
    if (name == "ode") return Route::ode;
    if (name == "eps") return Route::eps;
    if (name == "markov") return Route::markov;
    throw ValidationError("unknown route '" + name + "' (expected auto, ode, eps or markov)");
}

std::string route_name(Route r) {
    switch (r) {
    case Route::automatic: return "auto";
    case Route::ode: return "ode";
    case Route::eps: return "eps";
    case Route::markov: return "markov";
    }
    return "auto";
}

FiltrationKind parse_filtration(const std::string& name) {
    if (name == "regression") return FiltrationKind::regression;
    if (name == "lattice") return FiltrationKind::lattice;
    throw ValidationError("unknown filtration '" + name + "' (expected regression or lattice)");
}

std::string filtration_name(FiltrationKind f) { return f == FiltrationKind::lattice ? "lattice" : "regression"; }

Route resolve_route(const ProblemInstance& p, Route requested) {
    if (requested == Route::automatic) return p.is_deterministic() ? Route::ode : Route::markov;
    if (requested == Route::ode && !p.is_deterministic())
        throw ValidationError("route ode needs coefficients without w-dependence");
    return requested;
}

std::shared_ptr<const Filtration> make_filtration(const ProblemInstance& p, const SolveConfig& cfg) {
    if (cfg.steps < 1) throw ValidationError("steps must be positive");
    const TimeGrid grid(p.t0, p.T, cfg.steps);
    if (cfg.filtration == FiltrationKind::lattice) return std::make_shared<LatticeFiltration>(grid);
    if (cfg.paths < 1) throw ValidationError("paths must be positive");
    if (cfg.degree < 0) throw ValidationError("degree must be non-negative");
    auto paths = std::make_shared<const PathEnsemble>(generate_paths(grid, cfg.paths, cfg.seed));
    return std::make_shared<RegressionFiltration>(std::move(paths), RegressionBasis{cfg.degree, cfg.rational_feature});
}

RiccatiOutcome solve_riccati(const ProblemInstance& p, const Filtration& f, Route route,
                             const std::vector<double>& eps, const CoefficientTable* table) {
    RiccatiOutcome out;
    switch (resolve_route(p, route)) {
    case Route::ode:
        out.sigma = solve_riccati_deterministic(p, f.grid());
        break;
    case Route::eps: {
        const Filtration* per_atom = p.is_deterministic() ? nullptr : &f;
        out.eps = eps_limit_sigma(p, f.grid(), eps, per_atom, false);
        out.sigma = out.eps->limit;
        break;
    }
    default:
        out.sigma = table ? solve_riccati_markovian(*table, f, p.n) : solve_riccati_markovian(p, f);
        break;
    }
    return out;
}

SolveOutcome run_solve(const ProblemInstance& p, const SolveConfig& cfg) {
    return run_solve(p, make_filtration(p, cfg), cfg.route, cfg.eps);
}

SolveOutcome run_solve(const ProblemInstance& p, std::shared_ptr<const Filtration> f, Route route,
                       const std::vector<double>& eps) {
    SolveOutcome out;
    out.filtration = std::move(f);
    const Filtration& filt = *out.filtration;
    out.route = resolve_route(p, route);
    out.table = std::make_shared<const CoefficientTable>(p, filt);
    const CoefficientTable& table = *out.table;
    out.riccati = solve_riccati(p, filt, out.route, eps, &table);
    out.xi = terminal_field(p, filt);
    out.aux = solve_auxiliary_bsde(p, table, filt, out.riccati.sigma, out.xi);
    out.forward = solve_forward_sde(p, table, filt, out.riccati.sigma, out.aux);
    out.triple = reconstruct_triple(p, table, filt, out.riccati.sigma, out.aux, out.forward);
    out.decoupling = decoupling_residual(p, table, filt, out.riccati.sigma, out.aux, out.triple);
    return out;
}

double fixed_point_tolerance(const RiccatiSolution& sigma) { return sigma.per_atom ? 5e-2 : 1e-6; }

} // namespace blq
