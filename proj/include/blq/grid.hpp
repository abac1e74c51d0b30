#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <ostream>

namespace blq {

class TimeGrid {
public:
    TimeGrid(double t0, double T, int steps);

    double t0() const noexcept { return t0_; }
    double T() const noexcept { return T_; }
    int steps() const noexcept { return steps_; }
    double dt() const noexcept { return dt_; }
    double time(int k) const noexcept { return k == steps_ ? T_ : t0_ + k * dt_; }

private:
    double t0_, T_;
    int steps_;
    double dt_;
};

// Default cap on stored Brownian values (M * (K + 1)); about 1 GiB of doubles.
inline constexpr std::int64_t kDefaultPathBudget = std::int64_t{1} << 27;

struct PathEnsemble {
    TimeGrid grid;
    int paths;
    std::uint64_t seed;
    Eigen::MatrixXd W;  // paths x (steps + 1), W(:, 0) = 0
};

// Child seed for one path; results do not depend on evaluation order.
std::uint64_t path_seed(std::uint64_t seed, std::uint64_t path_index) noexcept;

// Throws CapacityError when paths * (steps + 1) exceeds the budget.
PathEnsemble generate_paths(const TimeGrid& grid, int paths, std::uint64_t seed,
                            std::int64_t budget = kDefaultPathBudget);

void write_paths_csv(std::ostream& out, const PathEnsemble& ensemble);

struct RegressionBasis {
    int degree = 4;
    bool rational = false;  // adds 1 / (1 + w^2)

    int size() const noexcept { return degree + 1 + (rational ? 1 : 0); }
};

// Least-squares projection onto span(basis(w)) for a fixed sample of w.
// The design is built on w / rms(w) so high degrees stay well conditioned; when every
// sample is identical only the constant survives.
class Projector {
public:
    Projector(const Eigen::VectorXd& w, const RegressionBasis& basis);

    Eigen::MatrixXd project(const Eigen::Ref<const Eigen::MatrixXd>& values) const;
    // Coefficients on the raw basis 1, w, ..., w^d [, 1/(1+w^2)]; one column per value column.
    Eigen::MatrixXd coefficients(const Eigen::Ref<const Eigen::MatrixXd>& values) const;

    int samples() const noexcept { return static_cast<int>(q_.rows()); }
    int active_functions() const noexcept { return static_cast<int>(q_.cols()); }
    double design_condition() const noexcept { return condition_; }

private:
    RegressionBasis basis_;
    Eigen::MatrixXd q_;           // orthonormal columns under the sample mean inner product
    Eigen::MatrixXd to_raw_;      // maps projections q^T v / M to raw coefficients
    double condition_ = 1.0;
};

struct RegressionFit {
    Eigen::MatrixXd coefficients;
    Eigen::MatrixXd fitted;
};

// Throws SingularDesignError if the normal matrix has condition number above 1e12 or
// there are not more samples than basis functions.
RegressionFit regress_conditional(const Eigen::Ref<const Eigen::MatrixXd>& values, const Eigen::VectorXd& w,
                                  const RegressionBasis& basis);

} // namespace blq
