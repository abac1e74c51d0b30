#pragma once

#include "blq/filtration.hpp"
#include "blq/problem.hpp"

#include <vector>

namespace blq {

// Coefficients at one atom together with the factors every scheme reuses.
struct AtomCoefficients {
    Coefficients c;
    Mat E;       // (I + dt A)^{-1}
    Mat Rinv;    // R^{-1}
    Mat BRinvBt; // B R^{-1} B^T
};

AtomCoefficients atom_coefficients(const ProblemInstance& p, double s, double w, double dt);

// Coefficients evaluated at every atom of one level, stored compactly; a single shared
// row when the problem has no w-dependence.
class LevelCoefficients {
public:
    LevelCoefficients(const ProblemInstance& p, const Filtration& f, int k);

    AtomCoefficients operator[](Eigen::Index atom) const;
    bool uniform() const noexcept { return table_.rows() == 1; }

private:
    int n_, m_;
    Field table_;  // per row: A, B, C, Q, N, R, E, Rinv, BRinvBt flattened
};

// All levels of a problem on a filtration; build once and share between repeated solves.
class CoefficientTable {
public:
    CoefficientTable(const ProblemInstance& p, const Filtration& f);
    const LevelCoefficients& level(int k) const { return levels_[static_cast<std::size_t>(k)]; }

private:
    std::vector<LevelCoefficients> levels_;
};

// Terminal state at every atom of the last level.
Field terminal_field(const ProblemInstance& p, const Filtration& f);

// (I + dt A)^{-1}; throws LinearSolveError when I + dt A is singular.
Mat propagation_inverse(const Mat& A, double dt);

} // namespace blq
