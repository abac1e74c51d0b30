#include "blq/bsde.hpp"

#include "blq/errors.hpp"
#include "blq/io.hpp"
#include "blq/levels.hpp"
#include "blq/parallel.hpp"

#include <algorithm>
#include <cmath>

namespace blq {

ControlProcess zero_control(const Filtration& f, int m) {
    ControlProcess c;
    c.u.reserve(static_cast<std::size_t>(f.steps()));
    for (int k = 0; k < f.steps(); ++k) c.u.push_back(Field::Zero(f.atoms(k), m));
    return c;
}

double control_inner(const Filtration& f, const ControlProcess& a, const ControlProcess& b) {
    double s = 0.0;
    for (int k = 0; k < f.steps(); ++k) {
        const auto& x = a.u[static_cast<std::size_t>(k)];
        const auto& y = b.u[static_cast<std::size_t>(k)];
        s += x.cwiseProduct(y).sum() / static_cast<double>(x.rows());
    }
    return s * f.dt();
}

double control_norm(const Filtration& f, const ControlProcess& a) { return std::sqrt(control_inner(f, a, a)); }

ControlProcess control_axpy(const ControlProcess& a, double alpha, const ControlProcess& b) {
    ControlProcess out = a;
    for (std::size_t k = 0; k < out.u.size(); ++k) out.u[k] += alpha * b.u[k];
    return out;
}

BackwardSolution solve_state_bsde(const ProblemInstance& p, const Filtration& f, const ControlProcess& u,
                                  const Field& xi) {
    return solve_state_bsde(CoefficientTable(p, f), f, u, xi);
}

BackwardSolution solve_state_bsde(const CoefficientTable& table, const Filtration& f, const ControlProcess& u,
                                  const Field& xi) {
    const int K = f.steps();
    if (static_cast<int>(u.u.size()) != K) throw ValidationError("control is not defined on the grid");
    if (!xi.allFinite()) throw ValidationError("terminal values must be finite");
    const double dt = f.dt();
    BackwardSolution sol;
    sol.Y.resize(static_cast<std::size_t>(K + 1));
    sol.Z.resize(static_cast<std::size_t>(K));
    sol.Y[static_cast<std::size_t>(K)] = xi;
    for (int k = K - 1; k >= 0; --k) {
        const Field& next = sol.Y[static_cast<std::size_t>(k + 1)];
        const Field mean = f.condexp(k, next);
        Field z = f.increment_regression(k, next, mean);
        const LevelCoefficients& coef = table.level(k);
        const Field& uk = u.u[static_cast<std::size_t>(k)];
        Field y(f.atoms(k), xi.cols());
        parallel_for(y.rows(), [&](std::int64_t a) {
            const AtomCoefficients c = coef[a];
            const Vec yv = c.E * row_as_vec(mean, a) - dt * (c.c.B * row_as_vec(uk, a) + c.c.C * row_as_vec(z, a));
            store_row(y, a, yv);
        });
        sol.Y[static_cast<std::size_t>(k)] = std::move(y);
        sol.Z[static_cast<std::size_t>(k)] = std::move(z);
    }
    return sol;
}

double audit_apriori_estimate(const Filtration& f, const BackwardSolution& sol, const ControlProcess& u,
                              const Field& xi) {
    const int K = f.steps();
    const Eigen::Index S = f.scenarios();
    const double dt = f.dt();
    double num = 0.0, den = 0.0;
    for (Eigen::Index s = 0; s < S; ++s) {
        double sup = 0.0, zsum = 0.0, usum = 0.0;
        for (int k = 0; k <= K; ++k) {
            const Eigen::Index a = f.atom_of(k, s);
            sup = std::max(sup, sol.Y[static_cast<std::size_t>(k)].row(a).squaredNorm());
            if (k < K) {
                zsum += sol.Z[static_cast<std::size_t>(k)].row(a).squaredNorm() * dt;
                usum += u.u[static_cast<std::size_t>(k)].row(a).squaredNorm() * dt;
            }
        }
        num += sup + zsum;
        den += xi.row(f.atom_of(K, s)).squaredNorm() + usum;
    }
    num /= static_cast<double>(S);
    den /= static_cast<double>(S);
    if (den == 0.0) {
        if (num <= 1e-14) return 0.0;
        throw DegenerateInputError("a priori audit: zero data but nonzero solution");
    }
    return num / den;
}

void write_backward_csv(std::ostream& out, const Filtration& f, const BackwardSolution& sol,
                        Eigen::Index max_scenarios) {
    const int K = f.steps();
    const Eigen::Index n = sol.Y.front().cols();
    out << "path,k,t";
    for (Eigen::Index i = 1; i <= n; ++i) out << ",Y_" << i;
    for (Eigen::Index i = 1; i <= n; ++i) out << ",Z_" << i;
    out << '\n';
    const Eigen::Index S = std::min(max_scenarios, f.scenarios());
    for (Eigen::Index s = 0; s < S; ++s)
        for (int k = 0; k <= K; ++k) {
            const Eigen::Index a = f.atom_of(k, s);
            out << s << ',' << k << ',' << format_number(f.grid().time(k));
            for (Eigen::Index i = 0; i < n; ++i) out << ',' << format_number(sol.Y[static_cast<std::size_t>(k)](a, i));
            for (Eigen::Index i = 0; i < n; ++i) {
                out << ',';
                if (k < K) out << format_number(sol.Z[static_cast<std::size_t>(k)](a, i));
            }
            out << '\n';
        }
}

} // namespace blq
