#pragma once

#include "blq/grid.hpp"
#include "blq/linalg.hpp"

#include <memory>
#include <vector>

namespace blq {

// Discrete information structure on a time grid. Level k carries atoms(k) equally weighted
// atoms (Monte Carlo paths or tree nodes); processes are stored as one Field per level.
//
// Adjoints are taken with respect to the level inner products <f, g>_k = mean_a f_a . g_a.
class Filtration {
public:
    virtual ~Filtration() = default;

    const TimeGrid& grid() const noexcept { return grid_; }
    int steps() const noexcept { return grid_.steps(); }
    double dt() const noexcept { return grid_.dt(); }

    virtual Eigen::Index atoms(int k) const = 0;
    // Brownian value at each atom of level k.
    virtual const Eigen::VectorXd& w(int k) const = 0;
    // Increment W(t_{k+1}) - W(t_k) at each atom of level k + 1.
    virtual const Eigen::VectorXd& increment(int k) const = 0;

    // E[next | level k]: level k+1 field to level k field.
    virtual Field condexp(int k, const Field& next) const = 0;
    virtual Field condexp_adjoint(int k, const Field& current) const = 0;
    // Embeds a level-k field into level k+1 (each atom copies its parent).
    virtual Field lift(int k, const Field& current) const = 0;
    virtual Field lift_adjoint(int k, const Field& next) const = 0;

    // Scenario view used for per-path statistics and dumps.
    virtual Eigen::Index scenarios() const { return atoms(steps()); }
    virtual Eigen::Index atom_of(int k, Eigen::Index scenario) const = 0;
    // True when conditional expectations are computed exactly (no regression error).
    virtual bool exact() const noexcept = 0;

    // Martingale-increment estimator E[(next - E[next]) dW | level k] / dt.
    Field increment_regression(int k, const Field& next, const Field& next_mean) const;

protected:
    explicit Filtration(const TimeGrid& grid) : grid_(grid) {}

private:
    TimeGrid grid_;
};

// Monte Carlo paths with least-squares regression on W(t_k).
class RegressionFiltration final : public Filtration {
public:
    RegressionFiltration(std::shared_ptr<const PathEnsemble> paths, const RegressionBasis& basis);

    Eigen::Index atoms(int) const override { return paths_->paths; }
    const Eigen::VectorXd& w(int k) const override { return w_[static_cast<std::size_t>(k)]; }
    const Eigen::VectorXd& increment(int k) const override { return dw_[static_cast<std::size_t>(k)]; }
    Field condexp(int k, const Field& next) const override;
    Field condexp_adjoint(int k, const Field& current) const override { return condexp(k, current); }
    Field lift(int, const Field& current) const override { return current; }
    Field lift_adjoint(int, const Field& next) const override { return next; }
    Eigen::Index atom_of(int, Eigen::Index scenario) const override { return scenario; }
    bool exact() const noexcept override { return false; }

    const PathEnsemble& paths() const noexcept { return *paths_; }
    const RegressionBasis& basis() const noexcept { return basis_; }
    const Projector& projector(int k) const { return projectors_[static_cast<std::size_t>(k)]; }

private:
    std::shared_ptr<const PathEnsemble> paths_;
    RegressionBasis basis_;
    std::vector<Eigen::VectorXd> w_;
    std::vector<Eigen::VectorXd> dw_;
    std::vector<Projector> projectors_;
};

// Full binary tree of +-sqrt(dt) increments; conditional expectations are exact averages
// over the two children. Level k has 2^k nodes; node j has children 2j (down) and 2j+1 (up).
class LatticeFiltration final : public Filtration {
public:
    static constexpr int kMaxSteps = 22;

    explicit LatticeFiltration(const TimeGrid& grid);

    Eigen::Index atoms(int k) const override { return Eigen::Index{1} << k; }
    const Eigen::VectorXd& w(int k) const override { return w_[static_cast<std::size_t>(k)]; }
    const Eigen::VectorXd& increment(int k) const override { return dw_[static_cast<std::size_t>(k)]; }
    Field condexp(int k, const Field& next) const override;
    Field condexp_adjoint(int k, const Field& current) const override { return lift(k, current); }
    Field lift(int k, const Field& current) const override;
    Field lift_adjoint(int k, const Field& next) const override { return condexp(k, next); }
    Eigen::Index atom_of(int k, Eigen::Index scenario) const override { return scenario >> (steps() - k); }
    bool exact() const noexcept override { return true; }

private:
    std::vector<Eigen::VectorXd> w_;
    std::vector<Eigen::VectorXd> dw_;
};

// Level-wise helpers shared by the solvers.
Field constant_field(Eigen::Index atoms, const Eigen::VectorXd& value);
// Column means over atoms.
Eigen::VectorXd level_mean(const Field& f);
// Scales row a of f by v(a).
Field scale_rows(const Field& f, const Eigen::VectorXd& v);

} // namespace blq
