#include "blq/verify.hpp"

#include "blq/errors.hpp"
#include "blq/io.hpp"
#include "blq/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace blq {

namespace {

double scenario_stderr(const Eigen::VectorXd& v) {
    const Eigen::Index S = v.size();
    if (S < 2) return 0.0;
    const double mean = v.mean();
    const double var = (v.array() - mean).square().sum() / static_cast<double>(S - 1);
    return std::sqrt(var / static_cast<double>(S));
}

void add_per_scenario(const Filtration& f, int k, const Eigen::VectorXd& per_atom, Eigen::VectorXd& total) {
    for (Eigen::Index s = 0; s < total.size(); ++s) total(s) += per_atom(f.atom_of(k, s));
}

double level_inner(const Field& a, const Field& b) {
    return a.cwiseProduct(b).sum() / static_cast<double>(a.rows());
}

// L2 norm of R u - B^T X over the control grid.
double stationarity_norm(const DiscreteOperatorBundle& bundle, const ControlProcess& u, const Process& X) {
    const Filtration& f = bundle.filtration();
    double total = 0.0;
    for (int k = 0; k < f.steps(); ++k) {
        const LevelCoefficients& coef = bundle.table().level(k);
        const Field& uk = u.u[static_cast<std::size_t>(k)];
        const Field& xk = X[static_cast<std::size_t>(k)];
        double level = 0.0;
        for (Eigen::Index a = 0; a < uk.rows(); ++a) {
            const AtomCoefficients c = coef[a];
            level += (c.c.R * row_as_vec(uk, a) - c.c.B.transpose() * row_as_vec(xk, a)).squaredNorm();
        }
        total += f.dt() * level / static_cast<double>(uk.rows());
    }
    return std::sqrt(total);
}

} // namespace

DiscreteOperatorBundle::DiscreteOperatorBundle(const ProblemInstance& p, const Filtration& f)
    : DiscreteOperatorBundle(p, f, std::make_shared<const CoefficientTable>(p, f)) {}

DiscreteOperatorBundle::DiscreteOperatorBundle(const ProblemInstance& p, const Filtration& f,
                                               std::shared_ptr<const CoefficientTable> table)
    : p_(p), f_(f), table_(std::move(table)), xi_(terminal_field(p, f)) {
    zero_terminal_ = Field::Zero(xi_.rows(), xi_.cols());
    for (int k = 0; k < f.steps(); ++k) dimension_ += static_cast<std::int64_t>(f.atoms(k)) * p.m;
}

BackwardSolution DiscreteOperatorBundle::state(const ControlProcess& u, const Field& terminal) const {
    return solve_state_bsde(*table_, f_, u, terminal);
}

ControlProcess DiscreteOperatorBundle::adjoint(const Process& seedY, const Process& seedZ) const {
    const int K = f_.steps();
    const int n = p_.n;
    const int m = p_.m;
    const double dt = f_.dt();
    ControlProcess g;
    g.u.resize(static_cast<std::size_t>(K));
    Field lambda = seedY.front();
    for (int k = 0; k < K; ++k) {
        const LevelCoefficients& coef = table_->level(k);
        const Field& sz = seedZ[static_cast<std::size_t>(k)];
        Field gmean(lambda.rows(), n), gz(lambda.rows(), n), gu(lambda.rows(), m);
        parallel_for(lambda.rows(), [&](std::int64_t a) {
            const AtomCoefficients c = coef[a];
            const Vec l = row_as_vec(lambda, a);
            store_row(gmean, a, c.E.transpose() * l);
            store_row(gu, a, -dt * (c.c.B.transpose() * l));
            store_row(gz, a, row_as_vec(sz, a) - dt * (c.c.C.transpose() * l));
        });
        g.u[static_cast<std::size_t>(k)] = std::move(gu);
        if (k + 1 == K) break;
        Field b = f_.condexp_adjoint(k, gz);
        b /= dt;
        b = scale_rows(b, f_.increment(k));
        const Field back = f_.condexp_adjoint(k, gmean - f_.lift_adjoint(k, b));
        lambda = seedY[static_cast<std::size_t>(k + 1)] + back + b;
    }
    return g;
}

void DiscreteOperatorBundle::cost_seeds(const BackwardSolution& s, Process& seedY, Process& seedZ) const {
    const int K = f_.steps();
    const double dt = f_.dt();
    const Mat G = p_.terminal_weight();
    seedY.assign(static_cast<std::size_t>(K), Field());
    seedZ.assign(static_cast<std::size_t>(K), Field());
    for (int k = 0; k < K; ++k) {
        const LevelCoefficients& coef = table_->level(k);
        const Field& Y = s.Y[static_cast<std::size_t>(k)];
        const Field& Z = s.Z[static_cast<std::size_t>(k)];
        Field gy(Y.rows(), Y.cols()), gz(Z.rows(), Z.cols());
        parallel_for(Y.rows(), [&](std::int64_t a) {
            const AtomCoefficients c = coef[a];
            store_row(gy, a, k == 0 ? Vec(G * row_as_vec(Y, a)) : Vec(dt * (c.c.Q * row_as_vec(Y, a))));
            store_row(gz, a, dt * (c.c.N * row_as_vec(Z, a)));
        });
        seedY[static_cast<std::size_t>(k)] = std::move(gy);
        seedZ[static_cast<std::size_t>(k)] = std::move(gz);
    }
}

ControlProcess DiscreteOperatorBundle::with_control_weight(ControlProcess g, const ControlProcess& u,
                                                           bool add_weight) const {
    const double dt = f_.dt();
    for (int k = 0; k < f_.steps(); ++k) {
        Field& gk = g.u[static_cast<std::size_t>(k)];
        gk /= dt;
        if (!add_weight) continue;
        const LevelCoefficients& coef = table_->level(k);
        const Field& uk = u.u[static_cast<std::size_t>(k)];
        parallel_for(gk.rows(), [&](std::int64_t a) {
            store_row(gk, a, row_as_vec(gk, a) + coef[a].c.R * row_as_vec(uk, a));
        });
    }
    return g;
}

ControlProcess DiscreteOperatorBundle::hessian(const ControlProcess& u) const {
    Process seedY, seedZ;
    cost_seeds(state(u, zero_terminal_), seedY, seedZ);
    return with_control_weight(adjoint(seedY, seedZ), u, true);
}

ControlProcess DiscreteOperatorBundle::linear_term() const {
    const ControlProcess zero = zero_control(f_, p_.m);
    Process seedY, seedZ;
    cost_seeds(state(zero, xi_), seedY, seedZ);
    return with_control_weight(adjoint(seedY, seedZ), zero, false);
}

Process DiscreteOperatorBundle::adjoint_state(const BackwardSolution& s) const {
    const int K = f_.steps();
    const int n = p_.n;
    const double dt = f_.dt();
    const Mat G = p_.terminal_weight();
    Process X(static_cast<std::size_t>(K + 1));
    Field x0(s.Y.front().rows(), n);
    for (Eigen::Index a = 0; a < x0.rows(); ++a) store_row(x0, a, G * row_as_vec(s.Y.front(), a));
    X[0] = std::move(x0);
    for (int k = 0; k < K; ++k) {
        const LevelCoefficients& coef = table_->level(k);
        const Field& x = X[static_cast<std::size_t>(k)];
        const Field& z = s.Z[static_cast<std::size_t>(k)];
        Field drift(x.rows(), n), noise(x.rows(), n);
        parallel_for(x.rows(), [&](std::int64_t a) {
            const AtomCoefficients c = coef[a];
            const Vec xv = row_as_vec(x, a);
            store_row(drift, a, c.E.transpose() * xv);
            store_row(noise, a, c.c.N * row_as_vec(z, a) - c.c.C.transpose() * xv);
        });
        Field next = f_.lift(k, drift) + scale_rows(f_.lift(k, noise), f_.increment(k));
        const LevelCoefficients& ncoef = table_->level(k + 1);
        const Field& y = s.Y[static_cast<std::size_t>(k + 1)];
        parallel_for(next.rows(), [&](std::int64_t b) {
            store_row(next, b, row_as_vec(next, b) + dt * (ncoef[b].c.Q * row_as_vec(y, b)));
        });
        X[static_cast<std::size_t>(k + 1)] = std::move(next);
    }
    return X;
}

ControlProcess DiscreteOperatorBundle::random_control(std::uint64_t seed) const {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    ControlProcess u = zero_control(f_, p_.m);
    for (auto& level : u.u)
        for (Eigen::Index i = 0; i < level.rows(); ++i)
            for (Eigen::Index j = 0; j < level.cols(); ++j) level(i, j) = normal(rng);
    return u;
}

double DiscreteOperatorBundle::adjoint_test(std::uint64_t seed) const {
    const int K = f_.steps();
    const ControlProcess u = random_control(seed);
    const BackwardSolution s = state(u, zero_terminal_);
    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    std::normal_distribution<double> normal(0.0, 1.0);
    Process vY(static_cast<std::size_t>(K)), vZ(static_cast<std::size_t>(K));
    double lhs = 0.0, vnorm = 0.0, unorm = 0.0;
    for (int k = 0; k < K; ++k) {
        const auto level = static_cast<std::size_t>(k);
        vY[level] = Field::NullaryExpr(f_.atoms(k), p_.n, [&]() { return normal(rng); });
        vZ[level] = Field::NullaryExpr(f_.atoms(k), p_.n, [&]() { return normal(rng); });
        lhs += level_inner(s.Y[level], vY[level]) + level_inner(s.Z[level], vZ[level]);
        vnorm += level_inner(vY[level], vY[level]) + level_inner(vZ[level], vZ[level]);
        unorm += level_inner(u.u[level], u.u[level]);
    }
    const ControlProcess g = adjoint(vY, vZ);
    double rhs = 0.0;
    for (int k = 0; k < K; ++k) rhs += level_inner(g.u[static_cast<std::size_t>(k)], u.u[static_cast<std::size_t>(k)]);
    return std::abs(lhs - rhs) / std::sqrt(unorm * vnorm);
}

double DiscreteOperatorBundle::coercivity_ratio(std::uint64_t seed, int samples) const {
    double worst = std::numeric_limits<double>::infinity();
    for (int i = 0; i < samples; ++i) {
        const ControlProcess u = random_control(seed + static_cast<std::uint64_t>(i));
        const double uu = control_inner(f_, u, u);
        worst = std::min(worst, control_inner(f_, hessian(u), u) / uu);
    }
    return worst;
}

CostBreakdown DiscreteOperatorBundle::cost(const ControlProcess& u) const {
    const int K = f_.steps();
    const double dt = f_.dt();
    const BackwardSolution s = state(u);
    const Mat G = p_.terminal_weight();
    CostBreakdown c;
    c.per_scenario = Eigen::VectorXd::Zero(f_.scenarios());
    auto level_terms = [&](int k, double& part, auto&& term) {
        const LevelCoefficients& coef = table_->level(k);
        Eigen::VectorXd per_atom(f_.atoms(k));
        parallel_for(per_atom.size(), [&](std::int64_t a) { per_atom(a) = term(coef[a], a); });
        part += per_atom.mean();
        add_per_scenario(f_, k, per_atom, c.per_scenario);
    };
    level_terms(0, c.terminal_part, [&](const AtomCoefficients&, Eigen::Index a) {
        const Vec y = row_as_vec(s.Y.front(), a);
        return y.dot(G * y);
    });
    for (int k = 1; k <= K; ++k)
        level_terms(k, c.q_part, [&](const AtomCoefficients& ac, Eigen::Index a) {
            const Vec y = row_as_vec(s.Y[static_cast<std::size_t>(k)], a);
            return dt * y.dot(ac.c.Q * y);
        });
    for (int k = 0; k < K; ++k) {
        level_terms(k, c.n_part, [&](const AtomCoefficients& ac, Eigen::Index a) {
            const Vec z = row_as_vec(s.Z[static_cast<std::size_t>(k)], a);
            return dt * z.dot(ac.c.N * z);
        });
        level_terms(k, c.r_part, [&](const AtomCoefficients& ac, Eigen::Index a) {
            const Vec v = row_as_vec(u.u[static_cast<std::size_t>(k)], a);
            return dt * v.dot(ac.c.R * v);
        });
    }
    c.total = c.terminal_part + c.q_part + c.n_part + c.r_part;
    c.standard_error = scenario_stderr(c.per_scenario);
    return c;
}

CostBreakdown evaluate_cost(const DiscreteOperatorBundle& bundle, const ControlProcess& u) {
    return bundle.cost(u);
}

QuadraticFit quadratic_expansion_check(const DiscreteOperatorBundle& bundle, const ControlProcess& u,
                                       const ControlProcess& direction, double step) {
    if (!(step > 0.0)) throw ValidationError("expansion step must be positive");
    const CostBreakdown minus = bundle.cost(control_axpy(u, -step, direction));
    const CostBreakdown centre = bundle.cost(u);
    const CostBreakdown plus = bundle.cost(control_axpy(u, step, direction));
    QuadraticFit fit;
    fit.constant = centre.total;
    fit.linear = (plus.total - minus.total) / (2.0 * step);
    fit.quadratic = (plus.total + minus.total - 2.0 * centre.total) / (2.0 * step * step);
    const Eigen::VectorXd slopes = (plus.per_scenario - minus.per_scenario) / (2.0 * step);
    fit.linear_stderr = scenario_stderr(slopes);
    return fit;
}

OracleResult oracle_minimize(const DiscreteOperatorBundle& bundle, int max_iters, double tol) {
    const Filtration& f = bundle.filtration();
    const ControlProcess b = bundle.linear_term();
    const double bnorm = control_norm(f, b);
    OracleResult res;
    res.u = zero_control(f, bundle.problem().m);
    ControlProcess r = control_axpy(zero_control(f, bundle.problem().m), -1.0, b);
    ControlProcess dir = r;
    double rr = control_inner(f, r, r);
    const double stop = std::max(tol * bnorm, 1e-14);
    while (std::sqrt(rr) > stop) {
        if (res.iterations >= max_iters)
            throw NoConvergenceError("conjugate gradient did not converge in " + std::to_string(max_iters) +
                                         " iterations",
                                     std::sqrt(rr));
        const ControlProcess Hd = bundle.hessian(dir);
        const double curvature = control_inner(f, dir, Hd);
        if (!(curvature > 0.0)) throw NoConvergenceError("non-positive curvature in conjugate gradient", std::sqrt(rr));
        const double alpha = rr / curvature;
        res.u = control_axpy(res.u, alpha, dir);
        r = control_axpy(r, -alpha, Hd);
        const double rr_next = control_inner(f, r, r);
        dir = control_axpy(r, rr_next / rr, dir);
        rr = rr_next;
        ++res.iterations;
    }
    res.residual = std::sqrt(rr);
    res.cost = bundle.cost(res.u).total;
    return res;
}

VerificationReport verify_optimality(const DiscreteOperatorBundle& bundle, const OptimalTriple& triple,
                                     const VerifyTolerances& tol) {
    const ProblemInstance& p = bundle.problem();
    const Filtration& f = bundle.filtration();
    VerificationReport r;

    r.stationarity_residual = stationarity_norm(bundle, triple.u, triple.X);
    r.stationarity_resolved = stationarity_norm(bundle, triple.u, bundle.adjoint_state(bundle.state(triple.u)));
    r.stationarity_ok = r.stationarity_residual <= tol.stationarity_construction &&
                        r.stationarity_resolved <= tol.stationarity_resolved;

    r.cost = bundle.cost(triple.u);
    r.value = r.cost.total;
    r.value_stderr = r.cost.standard_error;

    r.expansion_linear_ok = true;
    r.quadratic_expansion_min_convexity = std::numeric_limits<double>::infinity();
    double worst_margin = -std::numeric_limits<double>::infinity();
    for (int i = 0; i < tol.directions; ++i) {
        const ControlProcess d = bundle.random_control(tol.seed * 1000003ULL + static_cast<std::uint64_t>(i));
        const QuadraticFit fit = quadratic_expansion_check(bundle, triple.u, d, tol.step);
        const double bound = tol.expansion_sigmas * fit.linear_stderr +
                             tol.expansion_floor * (1.0 + std::abs(fit.quadratic) + std::abs(fit.constant));
        const double margin = std::abs(fit.linear) - bound;
        if (margin > 0.0) r.expansion_linear_ok = false;
        if (margin > worst_margin) {
            worst_margin = margin;
            r.quadratic_expansion_linear_coeff = std::abs(fit.linear);
            r.quadratic_expansion_linear_stderr = fit.linear_stderr;
        }
        const double dd = control_inner(f, d, d);
        r.quadratic_expansion_min_convexity =
            std::min(r.quadratic_expansion_min_convexity, fit.quadratic / (p.delta * dd));
    }
    r.expansion_ok = r.expansion_linear_ok && r.quadratic_expansion_min_convexity >= 1.0 - 1e-9;

    r.adjoint_consistency = bundle.adjoint_test(tol.seed + 17);
    r.adjoint_ok = r.adjoint_consistency <= tol.adjoint;
    r.coercivity_ratio = bundle.coercivity_ratio(tol.seed + 29, 3);
    r.coercivity_ok = r.coercivity_ratio >= p.delta * (1.0 - 1e-9);

    if (tol.run_oracle) {
        try {
            const OracleResult o = oracle_minimize(bundle, tol.oracle_max_iters, tol.oracle_tol);
            const double norm = control_norm(f, o.u);
            r.oracle_control_norm = norm;
            r.oracle_control_distance = control_norm(f, control_axpy(triple.u, -1.0, o.u));
            r.cost_gap = r.value - o.cost;
            r.oracle_iterations = o.iterations;
            r.oracle_ok = *r.oracle_control_distance <= tol.oracle_relative * (norm + 1e-6) &&
                          *r.cost_gap <= tol.oracle_cost_gap;
        } catch (const NoConvergenceError&) {
            r.oracle_ok = false;
        }
    }

    r.residuals = fbsde_residuals(p, bundle.table(), f, triple, bundle.xi());
    r.residuals_ok = r.residuals.backward_rms <= tol.residual_rms && r.residuals.forward_rms <= tol.residual_rms &&
                     r.residuals.terminal_rms <= tol.residual_rms && r.residuals.initial_rms <= tol.residual_rms;
    r.fixed_point_tolerance = tol.fixed_point;
    return r;
}

nlohmann::json to_json(const CostBreakdown& c) {
    return {{"total", c.total},
            {"terminal_part", c.terminal_part},
            {"q_part", c.q_part},
            {"n_part", c.n_part},
            {"r_part", c.r_part},
            {"stderr", c.standard_error}};
}

nlohmann::json to_json(const VerificationReport& r) {
    auto optional = [](const auto& v) -> nlohmann::json { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    return {{"stationarity_residual", r.stationarity_residual},
            {"stationarity_resolved", r.stationarity_resolved},
            {"quadratic_expansion_linear_coeff", r.quadratic_expansion_linear_coeff},
            {"quadratic_expansion_linear_stderr", r.quadratic_expansion_linear_stderr},
            {"quadratic_expansion_min_convexity", r.quadratic_expansion_min_convexity},
            {"oracle_control_distance", optional(r.oracle_control_distance)},
            {"oracle_control_norm", optional(r.oracle_control_norm)},
            {"cost_gap", optional(r.cost_gap)},
            {"oracle_iterations", optional(r.oracle_iterations)},
            {"adjoint_consistency", r.adjoint_consistency},
            {"coercivity_ratio", r.coercivity_ratio},
            {"value", r.value},
            {"value_stderr", r.value_stderr},
            {"cost", to_json(r.cost)},
            {"residuals", to_json(r.residuals)},
            {"fixed_point_residual", optional(r.fixed_point_residual)},
            {"fixed_point_tolerance", r.fixed_point_tolerance},
            {"pass",
             {{"stationarity", r.stationarity_ok},
              {"quadratic_expansion", r.expansion_ok},
              {"oracle", r.oracle_ok},
              {"fbsde_residuals", r.residuals_ok},
              {"fixed_point", r.fixed_point_ok},
              {"adjoint_consistency", r.adjoint_ok},
              {"coercivity", r.coercivity_ok},
              {"all", r.all_ok()}}}};
}

} // namespace blq
