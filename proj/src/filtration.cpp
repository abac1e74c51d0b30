#include "blq/filtration.hpp"

#include "blq/errors.hpp"
#include "blq/parallel.hpp"

#include <bit>
#include <cmath>
#include <string>

namespace blq {

Field Filtration::increment_regression(int k, const Field& next, const Field& next_mean) const {
    Field centred = next - lift(k, next_mean);
    centred = scale_rows(centred, increment(k));
    Field z = condexp(k, centred);
    z /= dt();
    return z;
}

RegressionFiltration::RegressionFiltration(std::shared_ptr<const PathEnsemble> paths, const RegressionBasis& basis)
    : Filtration(paths->grid), paths_(std::move(paths)), basis_(basis) {
    const int K = steps();
    w_.reserve(static_cast<std::size_t>(K + 1));
    dw_.reserve(static_cast<std::size_t>(K));
    projectors_.reserve(static_cast<std::size_t>(K));
    for (int k = 0; k <= K; ++k) w_.emplace_back(paths_->W.col(k));
    for (int k = 0; k < K; ++k) {
        dw_.emplace_back(paths_->W.col(k + 1) - paths_->W.col(k));
        projectors_.emplace_back(w_[static_cast<std::size_t>(k)], basis_);
    }
}

Field RegressionFiltration::condexp(int k, const Field& next) const {
    return projectors_[static_cast<std::size_t>(k)].project(next);
}

LatticeFiltration::LatticeFiltration(const TimeGrid& grid) : Filtration(grid) {
    const int K = grid.steps();
    if (K > kMaxSteps)
        throw CapacityError("lattice filtration supports at most " + std::to_string(kMaxSteps) + " steps, got " +
                            std::to_string(K));
    const double h = std::sqrt(grid.dt());
    for (int k = 0; k <= K; ++k) {
        const Eigen::Index size = Eigen::Index{1} << k;
        Eigen::VectorXd w(size);
        for (Eigen::Index i = 0; i < size; ++i)
            w(i) = h * (2.0 * std::popcount(static_cast<std::uint64_t>(i)) - k);
        w_.push_back(std::move(w));
        if (k < K) {
            Eigen::VectorXd dw(2 * size);
            for (Eigen::Index i = 0; i < 2 * size; ++i) dw(i) = (i & 1) ? h : -h;
            dw_.push_back(std::move(dw));
        }
    }
}

Field LatticeFiltration::condexp(int k, const Field& next) const {
    const Eigen::Index size = atoms(k);
    Field out(size, next.cols());
    parallel_for(size, [&](std::int64_t j) {
        out.row(j) = 0.5 * (next.row(2 * j) + next.row(2 * j + 1));
    });
    return out;
}

Field LatticeFiltration::lift(int k, const Field& current) const {
    const Eigen::Index size = atoms(k + 1);
    Field out(size, current.cols());
    parallel_for(size, [&](std::int64_t i) { out.row(i) = current.row(i >> 1); });
    return out;
}

Field constant_field(Eigen::Index atoms, const Eigen::VectorXd& value) {
    Field f(atoms, value.size());
    f.rowwise() = value.transpose();
    return f;
}

Eigen::VectorXd level_mean(const Field& f) {
    return f.colwise().mean().transpose();
}

Field scale_rows(const Field& f, const Eigen::VectorXd& v) {
    return v.asDiagonal() * f;
}

} // namespace blq
