#include "blq/levels.hpp"

#include "blq/errors.hpp"
#include "blq/parallel.hpp"

#include <cmath>

namespace blq {

AtomCoefficients atom_coefficients(const ProblemInstance& p, double s, double w, double dt) {
    AtomCoefficients a;
    a.c = p.coefficients(s, w);
    a.E = propagation_inverse(a.c.A, dt);
    a.Rinv = guarded_inverse(a.c.R, 1e12, "R");
    a.BRinvBt = symmetrized(a.c.B * a.Rinv * a.c.B.transpose());
    return a;
}

namespace {

Eigen::Index row_width(int n, int m) { return 6 * n * n + n * m + 2 * m * m; }

void pack(Field& table, Eigen::Index row, const AtomCoefficients& a) {
    double* out = table.row(row).data();
    auto put = [&out](const Mat& x) {
        Eigen::Map<Eigen::MatrixXd>(out, x.rows(), x.cols()) = x;
        out += x.size();
    };
    put(a.c.A);
    put(a.c.B);
    put(a.c.C);
    put(a.c.Q);
    put(a.c.N);
    put(a.c.R);
    put(a.E);
    put(a.Rinv);
    put(a.BRinvBt);
}

} // namespace

LevelCoefficients::LevelCoefficients(const ProblemInstance& p, const Filtration& f, int k) : n_(p.n), m_(p.m) {
    const double s = f.grid().time(k);
    const Eigen::Index width = row_width(n_, m_);
    if (p.is_deterministic()) {
        table_.resize(1, width);
        pack(table_, 0, atom_coefficients(p, s, 0.0, f.dt()));
        return;
    }
    const Eigen::VectorXd& w = f.w(k);
    table_.resize(w.size(), width);
    parallel_for(w.size(), [&](std::int64_t a) { pack(table_, a, atom_coefficients(p, s, w(a), f.dt())); });
}

AtomCoefficients LevelCoefficients::operator[](Eigen::Index atom) const {
    const double* in = table_.row(uniform() ? 0 : atom).data();
    auto take = [&in](int r, int c) {
        Mat x = Eigen::Map<const Eigen::MatrixXd>(in, r, c);
        in += r * c;
        return x;
    };
    AtomCoefficients a;
    a.c.A = take(n_, n_);
    a.c.B = take(n_, m_);
    a.c.C = take(n_, n_);
    a.c.Q = take(n_, n_);
    a.c.N = take(n_, n_);
    a.c.R = take(m_, m_);
    a.E = take(n_, n_);
    a.Rinv = take(m_, m_);
    a.BRinvBt = take(n_, n_);
    return a;
}

CoefficientTable::CoefficientTable(const ProblemInstance& p, const Filtration& f) {
    levels_.reserve(static_cast<std::size_t>(f.steps() + 1));
    for (int k = 0; k <= f.steps(); ++k) levels_.emplace_back(p, f, k);
}

Field terminal_field(const ProblemInstance& p, const Filtration& f) {
    const int K = f.steps();
    const Eigen::VectorXd& w = f.w(K);
    Field xi(w.size(), p.n);
    if (!p.xi.depends_on_w()) {
        const Eigen::VectorXd v = p.terminal_state(0.0);
        xi.rowwise() = v.transpose();
        return xi;
    }
    parallel_for(w.size(), [&](std::int64_t a) { store_row(xi, a, p.terminal_state(w(a))); });
    return xi;
}

Mat propagation_inverse(const Mat& A, double dt) {
    const Mat M = Mat::Identity(A.rows(), A.cols()) + dt * A;
    Eigen::PartialPivLU<Mat> lu(M);
    if (!(lu.rcond() > 1e-14)) throw LinearSolveError("I + dt*A is singular; reduce the step size");
    return lu.inverse();
}

} // namespace blq
