#include "blq/decoupler.hpp"

#include "blq/errors.hpp"
#include "blq/io.hpp"
#include "blq/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace blq {

namespace {

constexpr double kBlowup = 1e6;
constexpr double kMaxCondition = 1e12;

// Factors of one backward step shared by the auxiliary, forward and reconstruction passes.
struct StepFactors {
    Field contracted;  // (I + dt Sigma Q)^{-1} Sigma at level k+1
    Field mean;        // its conditional expectation at level k
    bool single = false;

    Mat contracted_at(Eigen::Index atom, int n) const { return row_as_mat(contracted, single ? 0 : atom, n, n); }
    Mat mean_at(Eigen::Index atom, int n) const { return symmetrized(row_as_mat(mean, single ? 0 : atom, n, n)); }
};

StepFactors step_factors(const RiccatiSolution& sol, const LevelCoefficients& next, const Filtration& f, int k) {
    StepFactors s;
    s.contracted = contracted_sigma(sol, next, k + 1, f.atoms(k + 1), f.dt());
    s.single = s.contracted.rows() == 1 && f.atoms(k + 1) != 1;
    s.mean = s.single ? s.contracted : f.condexp(k, s.contracted);
    return s;
}

// (I + dt Sigma_{k+1} Q_{k+1})^{-1} phi_{k+1} at every atom of level k+1.
Field contracted_phi(const RiccatiSolution& sol, const LevelCoefficients& next, int k_next, const Field& phi,
                     double dt) {
    const int n = sol.n;
    Field out(phi.rows(), n);
    parallel_for(phi.rows(), [&](std::int64_t b) {
        const Mat M = Mat::Identity(n, n) + dt * sol.sigma_at(k_next, b) * next[b].c.Q;
        store_row(out, b, M.partialPivLu().solve(row_as_vec(phi, b)));
    });
    return out;
}

Mat gain(const Mat& Shat, const Mat& N) {
    return guarded_inverse(Mat::Identity(Shat.rows(), Shat.cols()) + Shat * N, kMaxCondition, "I + Sigma N");
}

// Z = H [(Shat C^T + Lambda E^T) X + beta]
Vec decoupled_z(const AtomCoefficients& c, const Mat& Shat, const Mat& Lambda, const Vec& X, const Vec& beta) {
    return gain(Shat, c.c.N) * ((Shat * c.c.C.transpose() + Lambda * c.E.transpose()) * X + beta);
}

double max_abs(const Field& f) { return f.size() ? f.cwiseAbs().maxCoeff() : 0.0; }

void check_finite_bound(const Field& f, const char* what) {
    if (!f.allFinite() || max_abs(f) > kBlowup)
        throw BlowupError(std::string(what) + " exceeded " + format_number(kBlowup));
}

void check_shapes(const Filtration& f, const RiccatiSolution& sigma) {
    if (sigma.steps() != f.steps()) throw ValidationError("Riccati solution and filtration differ in step count");
}

// Per-scenario sums of level fields, reduced to a root-mean-square.
class ScenarioAccumulator {
public:
    explicit ScenarioAccumulator(const Filtration& f) : f_(f), total_(Eigen::VectorXd::Zero(f.scenarios())) {}
    void add(int k, const Eigen::VectorXd& per_atom) {
        for (Eigen::Index s = 0; s < total_.size(); ++s) total_(s) += per_atom(f_.atom_of(k, s));
    }
    double rms() const { return std::sqrt(total_.mean()); }

private:
    const Filtration& f_;
    Eigen::VectorXd total_;
};

} // namespace

AuxiliaryBackward solve_auxiliary_bsde(const ProblemInstance& p, const Filtration& f, const RiccatiSolution& sigma,
                                       const Field& xi) {
    return solve_auxiliary_bsde(p, CoefficientTable(p, f), f, sigma, xi);
}

AuxiliaryBackward solve_auxiliary_bsde(const ProblemInstance& p, const CoefficientTable& table, const Filtration& f,
                                       const RiccatiSolution& sigma, const Field& xi) {
    check_shapes(f, sigma);
    const int K = f.steps();
    const int n = p.n;
    const double dt = f.dt();
    AuxiliaryBackward aux;
    aux.phi.resize(static_cast<std::size_t>(K + 1));
    aux.beta.resize(static_cast<std::size_t>(K));
    aux.phi[static_cast<std::size_t>(K)] = -xi;
    aux.max_phi = max_abs(xi);
    for (int k = K - 1; k >= 0; --k) {
        const LevelCoefficients& coef = table.level(k);
        const LevelCoefficients& next_coef = table.level(k + 1);
        const StepFactors sf = step_factors(sigma, next_coef, f, k);
        const Field fc = contracted_phi(sigma, next_coef, k + 1, aux.phi[static_cast<std::size_t>(k + 1)], dt);
        const Field fmean = f.condexp(k, fc);
        Field beta = f.increment_regression(k, fc, fmean);
        beta *= -1.0;
        Field phi(f.atoms(k), n);
        parallel_for(phi.rows(), [&](std::int64_t a) {
            const AtomCoefficients c = coef[a];
            const Mat H = gain(sf.mean_at(a, n), c.c.N);
            const Mat L = sigma.lambda_at(k, a);
            const Vec v = c.E * row_as_vec(fmean, a) + dt * (c.c.C - c.E * L * c.c.N) * H * row_as_vec(beta, a);
            store_row(phi, a, v);
        });
        check_finite_bound(phi, "auxiliary solution phi");
        aux.max_phi = std::max(aux.max_phi, max_abs(phi));
        aux.max_beta = std::max(aux.max_beta, max_abs(beta));
        aux.phi[static_cast<std::size_t>(k)] = std::move(phi);
        aux.beta[static_cast<std::size_t>(k)] = std::move(beta);
    }
    aux.max_lambda = sigma.max_lambda;
    return aux;
}

ForwardSolution solve_forward_sde(const ProblemInstance& p, const Filtration& f, const RiccatiSolution& sigma,
                                  const AuxiliaryBackward& aux) {
    return solve_forward_sde(p, CoefficientTable(p, f), f, sigma, aux);
}

ForwardSolution solve_forward_sde(const ProblemInstance& p, const CoefficientTable& table, const Filtration& f,
                                  const RiccatiSolution& sigma, const AuxiliaryBackward& aux) {
    check_shapes(f, sigma);
    const int K = f.steps();
    const int n = p.n;
    const double dt = f.dt();
    const Mat G = p.terminal_weight();
    ForwardSolution out;
    out.X.resize(static_cast<std::size_t>(K + 1));
    Field X0(f.atoms(0), n);
    for (Eigen::Index a = 0; a < X0.rows(); ++a) {
        const Mat M = Mat::Identity(n, n) + G * sigma.sigma_at(0, a);
        store_row(X0, a, -(M.partialPivLu().solve(G * row_as_vec(aux.phi.front(), a))));
    }
    out.X[0] = std::move(X0);
    for (int k = 0; k < K; ++k) {
        const LevelCoefficients& coef = table.level(k);
        const LevelCoefficients& next_coef = table.level(k + 1);
        const StepFactors sf = step_factors(sigma, next_coef, f, k);
        const Field fc = contracted_phi(sigma, next_coef, k + 1, aux.phi[static_cast<std::size_t>(k + 1)], dt);
        const Field& X = out.X[static_cast<std::size_t>(k)];
        Field drift(X.rows(), n), noise(X.rows(), n);
        parallel_for(X.rows(), [&](std::int64_t a) {
            const AtomCoefficients c = coef[a];
            const Vec x = row_as_vec(X, a);
            const Vec z = decoupled_z(c, sf.mean_at(a, n), sigma.lambda_at(k, a), x,
                                      row_as_vec(aux.beta[static_cast<std::size_t>(k)], a));
            store_row(drift, a, c.E.transpose() * x);
            store_row(noise, a, c.c.N * z - c.c.C.transpose() * x);
        });
        Field Xm = f.lift(k, drift) + scale_rows(f.lift(k, noise), f.increment(k));
        Field next(Xm.rows(), n);
        parallel_for(Xm.rows(), [&](std::int64_t b) {
            const Vec xm = row_as_vec(Xm, b);
            const Vec y = -(sf.contracted_at(b, n) * xm) - row_as_vec(fc, b);
            store_row(next, b, xm + dt * next_coef[b].c.Q * y);
        });
        check_finite_bound(next, "forward solution X");
        out.max_abs = std::max(out.max_abs, max_abs(next));
        out.X[static_cast<std::size_t>(k + 1)] = std::move(next);
    }
    out.max_abs = std::max(out.max_abs, max_abs(out.X.front()));
    return out;
}

OptimalTriple reconstruct_triple(const ProblemInstance& p, const Filtration& f, const RiccatiSolution& sigma,
                                 const AuxiliaryBackward& aux, const ForwardSolution& X) {
    return reconstruct_triple(p, CoefficientTable(p, f), f, sigma, aux, X);
}

OptimalTriple reconstruct_triple(const ProblemInstance& p, const CoefficientTable& table, const Filtration& f,
                                 const RiccatiSolution& sigma, const AuxiliaryBackward& aux,
                                 const ForwardSolution& X) {
    check_shapes(f, sigma);
    const int K = f.steps();
    const int n = p.n;
    const int m = p.m;
    OptimalTriple t;
    t.X = X.X;
    t.state.Y.resize(static_cast<std::size_t>(K + 1));
    t.state.Z.resize(static_cast<std::size_t>(K));
    t.u.u.resize(static_cast<std::size_t>(K));
    for (int k = 0; k <= K; ++k) {
        const Field& x = X.X[static_cast<std::size_t>(k)];
        const Field& phi = aux.phi[static_cast<std::size_t>(k)];
        Field y(x.rows(), n);
        parallel_for(x.rows(), [&](std::int64_t a) {
            store_row(y, a, -(sigma.sigma_at(k, a) * row_as_vec(x, a)) - row_as_vec(phi, a));
        });
        t.state.Y[static_cast<std::size_t>(k)] = std::move(y);
        if (k == K) break;
        const LevelCoefficients& coef = table.level(k);
        const StepFactors sf = step_factors(sigma, table.level(k + 1), f, k);
        Field z(x.rows(), n), u(x.rows(), m);
        parallel_for(x.rows(), [&](std::int64_t a) {
            const AtomCoefficients c = coef[a];
            const Vec xv = row_as_vec(x, a);
            store_row(z, a, decoupled_z(c, sf.mean_at(a, n), sigma.lambda_at(k, a), xv,
                                        row_as_vec(aux.beta[static_cast<std::size_t>(k)], a)));
            store_row(u, a, c.Rinv * c.c.B.transpose() * xv);
        });
        t.state.Z[static_cast<std::size_t>(k)] = std::move(z);
        t.u.u[static_cast<std::size_t>(k)] = std::move(u);
    }
    return t;
}

double decoupling_residual(const ProblemInstance& p, const Filtration& f, const RiccatiSolution& sigma,
                           const AuxiliaryBackward& aux, const OptimalTriple& triple) {
    return decoupling_residual(p, CoefficientTable(p, f), f, sigma, aux, triple);
}

double decoupling_residual(const ProblemInstance& p, const CoefficientTable& table, const Filtration& f,
                           const RiccatiSolution& sigma, const AuxiliaryBackward& aux, const OptimalTriple& triple) {
    const int K = f.steps();
    const int n = p.n;
    double worst = 0.0;
    for (int k = 0; k <= K; ++k) {
        const Field& x = triple.X[static_cast<std::size_t>(k)];
        const Field& y = triple.state.Y[static_cast<std::size_t>(k)];
        for (Eigen::Index a = 0; a < x.rows(); ++a) {
            // Same expression as the reconstruction, so an untouched triple gives exactly 0.
            const Vec expected = -(sigma.sigma_at(k, a) * row_as_vec(x, a)) -
                                 row_as_vec(aux.phi[static_cast<std::size_t>(k)], a);
            worst = std::max(worst, (row_as_vec(y, a) - expected).cwiseAbs().maxCoeff());
        }
        if (k == K) break;
        const LevelCoefficients& coef = table.level(k);
        const StepFactors sf = step_factors(sigma, table.level(k + 1), f, k);
        const Field& z = triple.state.Z[static_cast<std::size_t>(k)];
        for (Eigen::Index a = 0; a < x.rows(); ++a) {
            const Vec expected = decoupled_z(coef[a], sf.mean_at(a, n), sigma.lambda_at(k, a), row_as_vec(x, a),
                                             row_as_vec(aux.beta[static_cast<std::size_t>(k)], a));
            worst = std::max(worst, (row_as_vec(z, a) - expected).cwiseAbs().maxCoeff());
        }
    }
    return worst;
}

ResidualReport fbsde_residuals(const ProblemInstance& p, const Filtration& f, const OptimalTriple& triple,
                               const Field& xi) {
    return fbsde_residuals(p, CoefficientTable(p, f), f, triple, xi);
}

ResidualReport fbsde_residuals(const ProblemInstance& p, const CoefficientTable& table, const Filtration& f,
                               const OptimalTriple& triple, const Field& xi) {
    const int K = f.steps();
    const int n = p.n;
    const double dt = f.dt();
    ScenarioAccumulator backward(f), forward(f);
    for (int k = 0; k < K; ++k) {
        const LevelCoefficients& coef = table.level(k);
        const Field& Y = triple.state.Y[static_cast<std::size_t>(k)];
        const Field& Z = triple.state.Z[static_cast<std::size_t>(k)];
        const Field& X = triple.X[static_cast<std::size_t>(k)];
        const Field& u = triple.u.u[static_cast<std::size_t>(k)];
        Field ystep(Y.rows(), n), ynoise = Z, xstep(Y.rows(), n), xnoise(Y.rows(), n);
        parallel_for(Y.rows(), [&](std::int64_t a) {
            const AtomCoefficients c = coef[a];
            const Vec y = row_as_vec(Y, a), z = row_as_vec(Z, a), x = row_as_vec(X, a);
            store_row(ystep, a, y + dt * (c.c.A * y + c.c.B * row_as_vec(u, a) + c.c.C * z));
            store_row(xstep, a, x + dt * (-c.c.A.transpose() * x + c.c.Q * y));
            store_row(xnoise, a, -c.c.C.transpose() * x + c.c.N * z);
        });
        const Eigen::VectorXd& dw = f.increment(k);
        const Field dy = triple.state.Y[static_cast<std::size_t>(k + 1)] - f.lift(k, ystep) -
                         scale_rows(f.lift(k, ynoise), dw);
        const Field dx = triple.X[static_cast<std::size_t>(k + 1)] - f.lift(k, xstep) -
                         scale_rows(f.lift(k, xnoise), dw);
        backward.add(k + 1, dy.rowwise().squaredNorm());
        forward.add(k + 1, dx.rowwise().squaredNorm());
    }
    ResidualReport r;
    r.backward_rms = backward.rms();
    r.forward_rms = forward.rms();
    r.terminal_rms = std::sqrt((triple.state.Y.back() - xi).rowwise().squaredNorm().mean());
    const Mat G = p.terminal_weight();
    const Field& X0 = triple.X.front();
    const Field& Y0 = triple.state.Y.front();
    double initial = 0.0;
    for (Eigen::Index a = 0; a < X0.rows(); ++a)
        initial += (row_as_vec(X0, a) - G * row_as_vec(Y0, a)).squaredNorm();
    r.initial_rms = std::sqrt(initial / static_cast<double>(X0.rows()));
    return r;
}

nlohmann::json to_json(const ResidualReport& r) {
    return {{"backward_rms", r.backward_rms},
            {"forward_rms", r.forward_rms},
            {"terminal_rms", r.terminal_rms},
            {"initial_rms", r.initial_rms},
            {"decoupling_max", r.decoupling_max}};
}

void write_control_csv(std::ostream& out, const Filtration& f, const ControlProcess& u, Eigen::Index max_scenarios) {
    const int K = f.steps();
    const Eigen::Index m = u.u.front().cols();
    out << "path,k,t";
    for (Eigen::Index j = 1; j <= m; ++j) out << ",u_" << j;
    out << '\n';
    const Eigen::Index S = std::min(max_scenarios, f.scenarios());
    for (Eigen::Index s = 0; s < S; ++s)
        for (int k = 0; k < K; ++k) {
            const Eigen::Index a = f.atom_of(k, s);
            out << s << ',' << k << ',' << format_number(f.grid().time(k));
            for (Eigen::Index j = 0; j < m; ++j) out << ',' << format_number(u.u[static_cast<std::size_t>(k)](a, j));
            out << '\n';
        }
}

void write_triple_csv(std::ostream& out, const Filtration& f, const OptimalTriple& triple,
                      Eigen::Index max_scenarios) {
    const int K = f.steps();
    const Eigen::Index n = triple.X.front().cols();
    const Eigen::Index m = triple.u.u.front().cols();
    out << "path,k,t";
    for (const char* name : {"Y", "Z", "X"})
        for (Eigen::Index i = 1; i <= n; ++i) out << ',' << name << '_' << i;
    for (Eigen::Index j = 1; j <= m; ++j) out << ",u_" << j;
    out << '\n';
    auto cells = [&out](const Field* field, Eigen::Index a, Eigen::Index width) {
        for (Eigen::Index i = 0; i < width; ++i) {
            out << ',';
            if (field) out << format_number((*field)(a, i));
        }
    };
    const Eigen::Index S = std::min(max_scenarios, f.scenarios());
    for (Eigen::Index s = 0; s < S; ++s)
        for (int k = 0; k <= K; ++k) {
            const auto level = static_cast<std::size_t>(k);
            const Eigen::Index a = f.atom_of(k, s);
            out << s << ',' << k << ',' << format_number(f.grid().time(k));
            cells(&triple.state.Y[level], a, n);
            cells(k < K ? &triple.state.Z[level] : nullptr, a, n);
            cells(&triple.X[level], a, n);
            cells(k < K ? &triple.u.u[level] : nullptr, a, m);
            out << '\n';
        }
}

} // namespace blq
