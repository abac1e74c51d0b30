#include "blq/grid.hpp"

#include "blq/errors.hpp"
#include "blq/parallel.hpp"

#include <cmath>
#include <random>
#include <string>

namespace blq {

TimeGrid::TimeGrid(double t0, double T, int steps) : t0_(t0), T_(T), steps_(steps), dt_(0.0) {
    if (steps < 1) throw ValidationError("time grid needs at least one step");
    if (!(T > t0)) throw ValidationError("time grid needs T > t0");
    dt_ = (T - t0) / steps;
}

std::uint64_t path_seed(std::uint64_t seed, std::uint64_t path_index) noexcept {
    // splitmix64 finalizer applied to a mix of the run seed and the path counter
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(seed) ^ (path_index * 0xd1b54a32d192ed03ULL + 1));
}

PathEnsemble generate_paths(const TimeGrid& grid, int paths, std::uint64_t seed, std::int64_t budget) {
    if (paths < 1) throw ValidationError("path count must be positive");
    const std::int64_t cells = static_cast<std::int64_t>(paths) * (grid.steps() + 1);
    if (cells > budget)
        throw CapacityError("path ensemble needs " + std::to_string(cells) + " values, budget is " +
                            std::to_string(budget));
    PathEnsemble e{grid, paths, seed, Eigen::MatrixXd::Zero(paths, grid.steps() + 1)};
    const double sd = std::sqrt(grid.dt());
    parallel_for(paths, [&](std::int64_t i) {
        std::mt19937_64 rng(path_seed(seed, static_cast<std::uint64_t>(i)));
        std::normal_distribution<double> normal(0.0, sd);
        for (int k = 0; k < grid.steps(); ++k) e.W(i, k + 1) = e.W(i, k) + normal(rng);
    });
    return e;
}

void write_paths_csv(std::ostream& out, const PathEnsemble& ensemble) {
    out << "path,k,t,W\n";
    char buf[64];
    for (int i = 0; i < ensemble.paths; ++i)
        for (int k = 0; k <= ensemble.grid.steps(); ++k) {
            std::snprintf(buf, sizeof buf, "%.17g,%.17g", ensemble.grid.time(k), ensemble.W(i, k));
            out << i << ',' << k << ',' << buf << '\n';
        }
}

namespace {

constexpr double kMaxDesignCondition = 1e12;

struct Design {
    Eigen::MatrixXd phi;     // normalized columns
    Eigen::VectorXd scale;   // raw coefficient = normalized coefficient * scale
    std::vector<int> slots;  // position of each active column in the raw basis
};

Design build_design(const Eigen::VectorXd& w, const RegressionBasis& basis, bool with_rational) {
    const Eigen::Index M = w.size();
    const double rms = std::sqrt(w.squaredNorm() / static_cast<double>(M));
    const int cols = basis.degree + 1 + (with_rational ? 1 : 0);
    Design d{Eigen::MatrixXd(M, cols), Eigen::VectorXd(cols), {}};
    const Eigen::VectorXd z = w / rms;
    Eigen::VectorXd power = Eigen::VectorXd::Ones(M);
    for (int j = 0; j <= basis.degree; ++j) {
        const double c = std::sqrt(power.squaredNorm() / static_cast<double>(M));
        d.phi.col(j) = power / c;
        d.scale(j) = 1.0 / (c * std::pow(rms, j));
        d.slots.push_back(j);
        power = power.cwiseProduct(z);
    }
    if (with_rational) {
        const Eigen::VectorXd r = (1.0 + w.array().square()).inverse().matrix();
        const double c = std::sqrt(r.squaredNorm() / static_cast<double>(M));
        d.phi.col(cols - 1) = r / c;
        d.scale(cols - 1) = 1.0 / c;
        d.slots.push_back(basis.degree + 1);
    }
    return d;
}

} // namespace

Projector::Projector(const Eigen::VectorXd& w, const RegressionBasis& basis) : basis_(basis) {
    if (basis.degree < 0) throw ValidationError("regression degree must be non-negative");
    const Eigen::Index M = w.size();
    const int full = basis.size();
    if (M <= full)
        throw SingularDesignError("regression needs more samples (" + std::to_string(M) + ") than basis functions (" +
                                  std::to_string(full) + ")");
    to_raw_ = Eigen::MatrixXd::Zero(full, 1);
    const bool constant_sample = (w.array() == w(0)).all();
    if (constant_sample) {
        q_ = Eigen::MatrixXd::Ones(M, 1);
        to_raw_(0, 0) = 1.0;
        condition_ = 1.0;
        return;
    }
    for (bool with_rational : {basis.rational, false}) {
        Design d = build_design(w, basis, with_rational);
        const Eigen::MatrixXd gram = d.phi.transpose() * d.phi / static_cast<double>(M);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
        const double lo = eig.eigenvalues().minCoeff();
        const double hi = eig.eigenvalues().maxCoeff();
        condition_ = lo > 0.0 ? hi / lo : std::numeric_limits<double>::infinity();
        if (!(condition_ <= kMaxDesignCondition)) {
            if (with_rational) continue;  // rational feature indistinguishable on this sample
            throw SingularDesignError("regression design condition number " + std::to_string(condition_) +
                                      " exceeds 1e12");
        }
        // Orthonormalize the design itself rather than factoring the Gram matrix, which would
        // square its condition number.
        const double root_m = std::sqrt(static_cast<double>(M));
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(d.phi / root_m);
        const Eigen::Index cols = d.phi.cols();
        const Eigen::MatrixXd upper = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
        q_ = root_m * (qr.householderQ() * Eigen::MatrixXd::Identity(M, cols));
        // raw = diag(scale) * R^{-1} * (q^T v / M)
        const Eigen::MatrixXd upper_inv =
            upper.triangularView<Eigen::Upper>().solve(Eigen::MatrixXd::Identity(cols, cols));
        to_raw_ = Eigen::MatrixXd::Zero(full, static_cast<Eigen::Index>(d.slots.size()));
        for (std::size_t a = 0; a < d.slots.size(); ++a)
            to_raw_.row(d.slots[a]) = d.scale(static_cast<Eigen::Index>(a)) * upper_inv.row(static_cast<Eigen::Index>(a));
        return;
    }
}

Eigen::MatrixXd Projector::project(const Eigen::Ref<const Eigen::MatrixXd>& values) const {
    const Eigen::MatrixXd inner = q_.transpose() * values / static_cast<double>(q_.rows());
    return q_ * inner;
}

Eigen::MatrixXd Projector::coefficients(const Eigen::Ref<const Eigen::MatrixXd>& values) const {
    const Eigen::MatrixXd inner = q_.transpose() * values / static_cast<double>(q_.rows());
    return to_raw_ * inner;
}

RegressionFit regress_conditional(const Eigen::Ref<const Eigen::MatrixXd>& values, const Eigen::VectorXd& w,
                                  const RegressionBasis& basis) {
    if (values.rows() != w.size()) throw ValidationError("regression values and samples differ in length");
    Projector proj(w, basis);
    return {proj.coefficients(values), proj.project(values)};
}

} // namespace blq
