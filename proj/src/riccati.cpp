#include "blq/riccati.hpp"

#include "blq/errors.hpp"
#include "blq/io.hpp"
#include "blq/parallel.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <string>

namespace blq {

namespace {

constexpr double kBlowup = 1e6;
constexpr double kMaxCondition = 1e12;
// Substep control for the forward equation: h * stiffness stays below this.
constexpr double kOdeStiffnessStep = 1e-3;
constexpr double kRegressionStiffnessStep = 2e-2;
constexpr double kForwardFloor = 1e-10;

Mat identity(Eigen::Index n) { return Mat::Identity(n, n); }

void check_blowup(const Mat& m, double limit, const char* what) {
    if (!m.allFinite() || m.cwiseAbs().maxCoeff() > limit)
        throw BlowupError(std::string(what) + " exceeded " + format_number(limit) + " (assumptions violated?)");
}

// Deterministic coefficients with a cache for time-independent problems.
class TimeCoefficients {
public:
    TimeCoefficients(const ProblemInstance& p, double dt) : p_(p), dt_(dt) {
        constant_ = !(p.A.depends_on_s() || p.B.depends_on_s() || p.C.depends_on_s() || p.Q.depends_on_s() ||
                      p.N.depends_on_s() || p.R.depends_on_s());
        if (constant_) cached_ = atom_coefficients(p, p.t0, 0.0, dt);
    }
    AtomCoefficients at(double s) const { return constant_ ? cached_ : atom_coefficients(p_, s, 0.0, dt_); }

private:
    const ProblemInstance& p_;
    double dt_;
    bool constant_;
    AtomCoefficients cached_;
};

Mat sigma_drift(const AtomCoefficients& a, const Mat& S) {
    const Coefficients& c = a.c;
    const Mat M = identity(S.rows()) + S * c.N;
    if (!(condition_number(M) <= kMaxCondition)) throw InversionError("I + Sigma N is ill-conditioned");
    const Mat X = M.partialPivLu().solve(S);
    return symmetrized(S * c.A.transpose() + c.A * S + S * c.Q * S - a.BRinvBt - c.C * X * c.C.transpose());
}

// dP/ds for the forward equation with a frozen martingale part Pi.
Mat forward_drift(const AtomCoefficients& a, const Mat& P, const Mat& Pi) {
    const Coefficients& c = a.c;
    const Mat L = P * c.C + Pi;
    const Mat X = (c.N + P).ldlt().solve(L.transpose());
    return symmetrized(-(P * c.A + c.A.transpose() * P + c.Q - P * a.BRinvBt * P - L * X));
}

double forward_stiffness(const AtomCoefficients& a, const Mat& P, const Mat& Pi, double n_floor) {
    const double coupling = a.c.C.norm() + Pi.norm() / n_floor;
    return 2.0 * a.c.A.norm() + 2.0 * P.norm() * a.BRinvBt.norm() + 4.0 * coupling * coupling + 1e-12;
}

// Integrates dP/ds = g(s, P) backward over [s - span, s] with RK4 substeps.
template <typename Drift, typename Stiffness>
Mat integrate_backward(Mat P, double s, double span, double step_bound, Drift&& drift, Stiffness&& stiffness,
                       long* count) {
    const double rho = stiffness(P);
    const long sub = std::max(1L, static_cast<long>(std::ceil(span * rho / step_bound)));
    const double h = span / static_cast<double>(sub);
    for (long i = 0; i < sub; ++i) {
        const double t = s - i * h;
        const Mat k1 = drift(t, P);
        const Mat k2 = drift(t - 0.5 * h, P - 0.5 * h * k1);
        const Mat k3 = drift(t - 0.5 * h, P - 0.5 * h * k2);
        const Mat k4 = drift(t - h, P - h * k3);
        P = symmetrized(P - h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
    }
    if (count) *count += sub;
    return P;
}

double min_eig_N(const ProblemInstance& p) { return std::max(p.delta, 1e-12); }

Field matrix_field(Eigen::Index rows, const Mat& value) {
    Field f(rows, value.size());
    for (Eigen::Index r = 0; r < rows; ++r) store_row(f, r, value);
    return f;
}

// Cubic Lagrange interpolation of a deterministic solution at fractional level x.
Mat interpolate_sigma(const RiccatiSolution& sol, double x) {
    const int K = sol.steps();
    const int n = sol.n;
    if (K < 3) {
        const int lo = std::clamp(static_cast<int>(std::floor(x)), 0, K - 1);
        const double t = x - lo;
        return (1.0 - t) * sol.sigma_at(lo, 0) + t * sol.sigma_at(lo + 1, 0);
    }
    int first = static_cast<int>(std::floor(x)) - 1;
    first = std::clamp(first, 0, K - 3);
    Mat out = Mat::Zero(n, n);
    for (int i = 0; i < 4; ++i) {
        double weight = 1.0;
        for (int j = 0; j < 4; ++j)
            if (j != i) weight *= (x - (first + j)) / static_cast<double>(i - j);
        out += weight * sol.sigma_at(first + i, 0);
    }
    return out;
}

Mat tilde_drift(const UndeterminedCoefficients& u, const Mat& P, const Mat& Pi) {
    const Mat L = u.tilde_S.transpose() + Pi;
    const Mat X = (u.tilde_R + P).ldlt().solve(L.transpose());
    return symmetrized(-(P * u.tilde_A + u.tilde_A.transpose() * P + u.tilde_Q - L * X));
}

RiccatiSolution markov_backward(const CoefficientTable& table, const Filtration& f, int n, const Mat& terminal);

} // namespace

Mat RiccatiSolution::sigma_at(int k, Eigen::Index atom) const {
    const Field& f = sigma[static_cast<std::size_t>(k)];
    return row_as_mat(f, per_atom ? atom : 0, n, n);
}

Mat RiccatiSolution::lambda_at(int k, Eigen::Index atom) const {
    const Field& f = lambda[static_cast<std::size_t>(k)];
    return row_as_mat(f, per_atom ? atom : 0, n, n);
}

UndeterminedCoefficients undetermined_coefficients(const AtomCoefficients& a, const Mat& sigma) {
    const Coefficients& c = a.c;
    const Eigen::Index n = sigma.rows();
    const Mat Ninv = guarded_inverse(c.N, kMaxCondition, "N");
    const Mat H = guarded_inverse(identity(n) + sigma * c.N, kMaxCondition, "I + Sigma N");
    UndeterminedCoefficients u;
    u.tilde_A = -c.A.transpose() - c.Q * sigma;
    u.tilde_Q = symmetrized(a.BRinvBt + sigma * c.Q * sigma + c.C * H * sigma * c.C.transpose() +
                            c.C * H * Ninv * c.C.transpose());
    u.tilde_S = Ninv * c.C.transpose();
    u.tilde_R = symmetrized(Ninv);
    u.tilde_G = Mat::Zero(n, n);
    return u;
}

RiccatiSolution solve_riccati_deterministic(const ProblemInstance& p, const TimeGrid& grid) {
    if (!p.is_deterministic()) throw ValidationError("the ODE route needs coefficients without w-dependence");
    const int K = grid.steps();
    const double dt = grid.dt();
    const TimeCoefficients coef(p, dt);
    RiccatiSolution sol;
    sol.n = p.n;
    sol.route = "ode";
    sol.sigma.assign(static_cast<std::size_t>(K + 1), Field());
    sol.lambda.assign(static_cast<std::size_t>(K + 1), Field::Zero(1, p.n * p.n));
    Mat S = Mat::Zero(p.n, p.n);
    sol.sigma[static_cast<std::size_t>(K)] = matrix_field(1, S);
    auto f = [&](double s, const Mat& X) { return sigma_drift(coef.at(s), X); };
    for (int k = K - 1; k >= 0; --k) {
        const double t = grid.time(k + 1);
        const Mat k1 = f(t, S);
        const Mat k2 = f(t - 0.5 * dt, S - 0.5 * dt * k1);
        const Mat k3 = f(t - 0.5 * dt, S - 0.5 * dt * k2);
        const Mat k4 = f(t - dt, S - dt * k3);
        S = symmetrized(S - dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
        check_blowup(S, kBlowup, "Sigma");
        sol.sigma[static_cast<std::size_t>(k)] = matrix_field(1, S);
    }
    return sol;
}

ForwardRiccatiSolution solve_forward_riccati_eps(const ProblemInstance& p, const TimeGrid& grid, double epsilon) {
    if (!(epsilon > 0.0)) throw ValidationError("epsilon must be positive");
    if (!p.is_deterministic()) throw ValidationError("the ODE route needs coefficients without w-dependence");
    const int K = grid.steps();
    const double dt = grid.dt();
    const TimeCoefficients coef(p, dt);
    const double n_floor = min_eig_N(p);
    const double limit = kBlowup * std::max(1.0, 1.0 / epsilon);
    ForwardRiccatiSolution sol;
    sol.n = p.n;
    sol.epsilon = epsilon;
    sol.P.assign(static_cast<std::size_t>(K + 1), Field());
    sol.Pi.assign(static_cast<std::size_t>(K + 1), Field::Zero(1, p.n * p.n));
    Mat P = identity(p.n) / epsilon;
    sol.P[static_cast<std::size_t>(K)] = matrix_field(1, P);
    sol.min_eigenvalue = min_eigenvalue(P);
    const Mat zero = Mat::Zero(p.n, p.n);
    for (int k = K - 1; k >= 0; --k) {
        P = integrate_backward(
            P, grid.time(k + 1), dt, kOdeStiffnessStep,
            [&](double s, const Mat& X) { return forward_drift(coef.at(s), X, zero); },
            [&](const Mat& X) { return forward_stiffness(coef.at(grid.time(k + 1)), X, zero, n_floor); },
            &sol.substeps);
        P = psd_floor(P, kForwardFloor);
        check_blowup(P, limit, "P_eps");
        sol.min_eigenvalue = std::min(sol.min_eigenvalue, min_eigenvalue(P));
        sol.P[static_cast<std::size_t>(k)] = matrix_field(1, P);
    }
    return sol;
}

ForwardRiccatiSolution solve_forward_riccati_eps(const ProblemInstance& p, const Filtration& f, double epsilon) {
    if (!(epsilon > 0.0)) throw ValidationError("epsilon must be positive");
    // Integrating P_eps atom by atom with a frozen regression estimate of Pi loses positivity
    // as soon as the estimate is noisy. The inverse Sigma_eps = P_eps^{-1} obeys the same
    // discrete recursion as Sigma with terminal value eps I, which stays well conditioned.
    const int n = p.n;
    const RiccatiSolution s = markov_backward(CoefficientTable(p, f), f, n, epsilon * identity(n));
    const double limit = kBlowup * std::max(1.0, 1.0 / epsilon);
    ForwardRiccatiSolution sol;
    sol.n = n;
    sol.per_atom = true;
    sol.epsilon = epsilon;
    sol.P.resize(s.sigma.size());
    sol.Pi.resize(s.sigma.size());
    double min_eig = 1.0 / epsilon;
    for (std::size_t k = 0; k < s.sigma.size(); ++k) {
        const Field& sig = s.sigma[k];
        Field P(sig.rows(), sig.cols()), Pi(sig.rows(), sig.cols());
        std::vector<double> mins(static_cast<std::size_t>(sig.rows()));
        parallel_for(sig.rows(), [&](std::int64_t a) {
            const Mat Pa = symmetrized(guarded_inverse(row_as_mat(sig, a, n, n), kMaxCondition, "Sigma_eps"));
            check_blowup(Pa, limit, "P_eps");
            store_row(P, a, Pa);
            store_row(Pi, a, symmetrized(-Pa * row_as_mat(s.lambda[k], a, n, n) * Pa));
            mins[static_cast<std::size_t>(a)] = min_eigenvalue(Pa);
        });
        min_eig = std::min(min_eig, *std::min_element(mins.begin(), mins.end()));
        sol.P[k] = std::move(P);
        sol.Pi[k] = std::move(Pi);
    }
    sol.min_eigenvalue = min_eig;
    return sol;
}

namespace {

RiccatiSolution sigma_from_forward(const ForwardRiccatiSolution& fw) {
    RiccatiSolution sol;
    sol.n = fw.n;
    sol.per_atom = fw.per_atom;
    sol.route = "eps";
    const std::size_t levels = fw.P.size();
    sol.sigma.resize(levels);
    sol.lambda.resize(levels);
    for (std::size_t k = 0; k < levels; ++k) {
        const Field& P = fw.P[k];
        const Field& Pi = fw.Pi[k];
        Field s(P.rows(), P.cols()), l(P.rows(), P.cols());
        parallel_for(P.rows(), [&](std::int64_t a) {
            const Mat Pinv = symmetrized(row_as_mat(P, a, fw.n, fw.n).inverse());
            store_row(s, a, Pinv);
            store_row(l, a, symmetrized(Pinv * row_as_mat(Pi, a, fw.n, fw.n) * Pinv));
        });
        sol.max_lambda = std::max(sol.max_lambda, l.size() ? l.cwiseAbs().maxCoeff() : 0.0);
        sol.sigma[k] = std::move(s);
        sol.lambda[k] = std::move(l);
    }
    return sol;
}

} // namespace

EpsLimitResult eps_limit_sigma(const ProblemInstance& p, const TimeGrid& grid, std::span<const double> eps,
                               const Filtration* f, bool strict, double convergence_tolerance) {
    if (eps.size() < 2) throw ValidationError("the eps sequence needs at least two values");
    for (std::size_t i = 0; i < eps.size(); ++i) {
        if (!(eps[i] > 0.0)) throw ValidationError("eps values must be positive");
        if (i > 0 && !(eps[i] < eps[i - 1])) throw ValidationError("eps values must be strictly decreasing");
    }
    const bool random = !p.is_deterministic();
    if (random && f == nullptr) throw ValidationError("random coefficients need a filtration");
    EpsLimitResult res;
    res.eps.assign(eps.begin(), eps.end());
    for (double e : eps) {
        const ForwardRiccatiSolution fw = random ? solve_forward_riccati_eps(p, *f, e)
                                                 : solve_forward_riccati_eps(p, grid, e);
        res.members.push_back(sigma_from_forward(fw));
        const Field& s0 = res.members.back().sigma.front();
        Mat avg = Mat::Zero(p.n, p.n);
        for (Eigen::Index a = 0; a < s0.rows(); ++a) avg += row_as_mat(s0, a, p.n, p.n);
        avg /= static_cast<double>(s0.rows());
        Eigen::SelfAdjointEigenSolver<Mat> eig(symmetrized(avg), Eigen::EigenvaluesOnly);
        res.sigma_start.push_back(eig.eigenvalues().maxCoeff());
    }
    const int K = grid.steps();
    for (std::size_t i = 0; i + 1 < res.members.size(); ++i) {
        double diff = 0.0, gap = std::numeric_limits<double>::infinity();
        for (int k = 0; k <= K; ++k) {
            const Field& a = res.members[i].sigma[static_cast<std::size_t>(k)];
            const Field& b = res.members[i + 1].sigma[static_cast<std::size_t>(k)];
            for (Eigen::Index r = 0; r < a.rows(); ++r) {
                const Mat d = row_as_mat(a, r, p.n, p.n) - row_as_mat(b, r, p.n, p.n);
                diff = std::max(diff, spectral_norm_symmetric(d));
                gap = std::min(gap, min_eigenvalue(d));
            }
        }
        res.differences.push_back(diff);
        res.min_order_gap.push_back(gap);
        res.monotone.push_back(gap >= -kMonotoneTolerance);
        if (strict && gap < -kMonotoneTolerance)
            throw NonmonotoneError("Sigma_eps is not ordered between eps=" + format_number(eps[i]) +
                                   " and eps=" + format_number(eps[i + 1]) + " (gap " + format_number(gap) + ")");
    }
    const double last = res.differences.back();
    if (res.differences.size() >= 2 && res.differences[res.differences.size() - 2] > 0.0) {
        const double ratio = last / res.differences[res.differences.size() - 2];
        res.tail_estimate = ratio < 1.0 ? last * ratio / (1.0 - ratio) : std::numeric_limits<double>::infinity();
    } else {
        res.tail_estimate = last == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    }
    res.converged = res.tail_estimate <= convergence_tolerance;
    res.limit = res.members.back();
    res.limit.sigma.back().setZero();
    res.limit.lambda.back().setZero();
    return res;
}

Field contracted_sigma(const RiccatiSolution& sol, const LevelCoefficients& next, int k_next, Eigen::Index atoms,
                       double dt) {
    const int n = sol.n;
    const bool single = !sol.per_atom && next.uniform();
    const Eigen::Index rows = single ? 1 : atoms;
    Field out(rows, n * n);
    parallel_for(rows, [&](std::int64_t a) {
        const Mat S = sol.sigma_at(k_next, a);
        const Mat Q = next[a].c.Q;
        const Mat M = identity(n) + dt * S * Q;
        store_row(out, a, symmetrized(M.partialPivLu().solve(S)));
    });
    return out;
}

RiccatiSolution solve_riccati_markovian(const ProblemInstance& p, const Filtration& f) {
    return solve_riccati_markovian(CoefficientTable(p, f), f, p.n);
}

RiccatiSolution solve_riccati_markovian(const CoefficientTable& table, const Filtration& f, int n) {
    return markov_backward(table, f, n, Mat::Zero(n, n));
}

namespace {

RiccatiSolution markov_backward(const CoefficientTable& table, const Filtration& f, int n, const Mat& terminal) {
    const int K = f.steps();
    const double dt = f.dt();
    RiccatiSolution sol;
    sol.n = n;
    sol.per_atom = true;
    sol.route = "markov";
    sol.sigma.assign(static_cast<std::size_t>(K + 1), Field());
    sol.lambda.assign(static_cast<std::size_t>(K + 1), Field());
    sol.sigma[static_cast<std::size_t>(K)] = matrix_field(f.atoms(K), terminal);
    sol.lambda[static_cast<std::size_t>(K)] = Field::Zero(f.atoms(K), n * n);
    std::atomic<long> projections{0}, clamps{0};
    for (int k = K - 1; k >= 0; --k) {
        const LevelCoefficients& coef = table.level(k);
        const Field S = contracted_sigma(sol, table.level(k + 1), k + 1, f.atoms(k + 1), dt);
        const Field Shat = f.condexp(k, S);
        Field lam = f.increment_regression(k, S, Shat);
        lam *= -1.0;
        Field out(f.atoms(k), n * n);
        parallel_for(out.rows(), [&](std::int64_t a) {
            const AtomCoefficients c = coef[a];
            bool floored = false, clamped = false;
            const Mat Sh = psd_floor(row_as_mat(Shat, a, n, n), 0.0, &floored);
            // An exact one-step conditional law keeps Shat -+ sqrt(dt) Lambda PSD; regression
            // noise in the tails does not, and would drive Sigma negative.
            const Mat L = clamp_spread(Sh, symmetrized(row_as_mat(lam, a, n, n)), std::sqrt(dt), &clamped);
            if (floored || clamped) ++clamps;
            store_row(lam, a, L);
            const Mat H = guarded_inverse(identity(n) + Sh * c.c.N, kMaxCondition, "I + Sigma N");
            const Mat& E = c.E;
            const Mat& C = c.c.C;
            const Mat EL = E * L;
            Mat next = E * Sh * E.transpose() +
                       dt * (c.BRinvBt + C * H * Sh * C.transpose() + EL * H.transpose() * C.transpose() +
                             C * H * EL.transpose() - EL * c.c.N * H * EL.transpose());
            bool projected = false;
            next = psd_floor(next, 0.0, &projected);
            if (projected) ++projections;
            check_blowup(next, kBlowup, "Sigma");
            store_row(out, a, next);
        });
        sol.max_lambda = std::max(sol.max_lambda, lam.cwiseAbs().maxCoeff());
        sol.sigma[static_cast<std::size_t>(k)] = std::move(out);
        sol.lambda[static_cast<std::size_t>(k)] = std::move(lam);
    }
    sol.projections = projections;
    sol.clamps = clamps;
    return sol;
}

} // namespace

double fixed_point_residual(const ProblemInstance& p, const RiccatiSolution& candidate, const TimeGrid& grid,
                            const Filtration* f) {
    const int K = grid.steps();
    if (candidate.steps() != K) throw ValidationError("candidate and grid differ in step count");
    const int n = p.n;
    const double dt = grid.dt();
    if (!candidate.per_atom) {
        if (!p.is_deterministic()) throw ValidationError("deterministic candidate for a random problem");
        const TimeCoefficients coef(p, dt);
        auto drift = [&](double x, const Mat& P) {
            const double s = grid.t0() + x * dt;
            return tilde_drift(undetermined_coefficients(coef.at(s), interpolate_sigma(candidate, x)), P,
                               Mat::Zero(n, n));
        };
        Mat P = Mat::Zero(n, n);
        double residual = spectral_norm_symmetric(P - candidate.sigma_at(K, 0));
        for (int k = K - 1; k >= 0; --k) {
            const double x = k + 1.0;
            const Mat k1 = drift(x, P);
            const Mat k2 = drift(x - 0.5, P - 0.5 * dt * k1);
            const Mat k3 = drift(x - 0.5, P - 0.5 * dt * k2);
            const Mat k4 = drift(x - 1.0, P - dt * k3);
            P = symmetrized(P - dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4));
            check_blowup(P, kBlowup, "tilde P");
            residual = std::max(residual, spectral_norm_symmetric(P - candidate.sigma_at(k, 0)));
        }
        return residual;
    }
    if (f == nullptr) throw ValidationError("per-atom candidates need their filtration");
    Field P = Field::Zero(f->atoms(K), n * n);
    double residual = 0.0;
    for (Eigen::Index a = 0; a < P.rows(); ++a)
        residual = std::max(residual, spectral_norm_symmetric(candidate.sigma_at(K, a)));
    for (int k = K - 1; k >= 0; --k) {
        const LevelCoefficients coef(p, *f, k);
        const Field mean = f->condexp(k, P);
        const Field pi = f->increment_regression(k, P, mean);
        Field out(f->atoms(k), n * n);
        std::vector<double> worst(static_cast<std::size_t>(out.rows()));
        parallel_for(out.rows(), [&](std::int64_t a) {
            const Mat Sig = candidate.sigma_at(k, a);
            const UndeterminedCoefficients u = undetermined_coefficients(coef[a], Sig);
            const Mat Ph = symmetrized(row_as_mat(mean, a, n, n));
            const Mat Pi = symmetrized(row_as_mat(pi, a, n, n));
            Mat next = psd_floor(Ph - dt * tilde_drift(u, Ph, Pi), 0.0);
            check_blowup(next, kBlowup, "tilde P");
            store_row(out, a, next);
            worst[static_cast<std::size_t>(a)] = spectral_norm_symmetric(next - Sig);
        });
        residual = std::max(residual, *std::max_element(worst.begin(), worst.end()));
        P = std::move(out);
    }
    return residual;
}

RiccatiSolution shifted(const RiccatiSolution& sol, double shift) {
    RiccatiSolution out = sol;
    const Mat I = identity(sol.n);
    for (auto& level : out.sigma)
        for (Eigen::Index a = 0; a < level.rows(); ++a) store_row(level, a, row_as_mat(level, a, sol.n, sol.n) + shift * I);
    return out;
}

void write_sigma_csv(std::ostream& out, const RiccatiSolution& sol, const TimeGrid& grid, const Filtration* f,
                     Eigen::Index max_scenarios) {
    const int n = sol.n;
    const int K = sol.steps();
    if (sol.per_atom) out << "path,";
    out << "k,t";
    for (const char* name : {"Sigma", "Lambda"})
        for (int i = 1; i <= n; ++i)
            for (int j = 1; j <= n; ++j) out << ',' << name << '_' << i << j;
    out << '\n';
    auto row = [&](int k, Eigen::Index atom) {
        out << k << ',' << format_number(grid.time(k));
        const Mat S = sol.sigma_at(k, atom);
        const Mat L = sol.lambda_at(k, atom);
        for (const Mat* m : {&S, &L})
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) out << ',' << format_number((*m)(i, j));
        out << '\n';
    };
    if (!sol.per_atom) {
        for (int k = 0; k <= K; ++k) row(k, 0);
        return;
    }
    if (f == nullptr) throw ValidationError("per-atom solutions need their filtration to be written");
    const Eigen::Index S = std::min(max_scenarios, f->scenarios());
    for (Eigen::Index s = 0; s < S; ++s)
        for (int k = 0; k <= K; ++k) {
            out << s << ',';
            row(k, f->atom_of(k, s));
        }
}

nlohmann::json to_json(const EpsLimitResult& r) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < r.eps.size(); ++i) {
        nlohmann::json row{{"eps", r.eps[i]}, {"sigma_t0_max_eig", r.sigma_start[i]}};
        if (i + 1 < r.eps.size()) {
            row["sup_difference_to_next"] = r.differences[i];
            row["min_order_gap_to_next"] = r.min_order_gap[i];
            row["monotone_to_next"] = static_cast<bool>(r.monotone[i]);
        }
        rows.push_back(std::move(row));
    }
    const bool all_monotone = std::all_of(r.monotone.begin(), r.monotone.end(), [](bool b) { return b; });
    return {{"table", rows},
            {"all_monotone", all_monotone},
            {"tail_estimate", r.tail_estimate},
            {"converged", r.converged}};
}

} // namespace blq
