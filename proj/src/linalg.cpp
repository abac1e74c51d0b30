#include "blq/linalg.hpp"

#include "blq/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace blq {

Mat psd_floor(const Mat& m, double floor, bool* projected) {
    Eigen::SelfAdjointEigenSolver<Mat> eig(symmetrized(m));
    if (projected) *projected = false;
    if (eig.eigenvalues().minCoeff() >= floor) return symmetrized(m);
    if (projected) *projected = true;
    Vec lam = eig.eigenvalues().cwiseMax(floor);
    Mat v = eig.eigenvectors();
    return symmetrized(v * lam.asDiagonal() * v.transpose());
}

Mat clamp_spread(const Mat& center, const Mat& spread, double scale, bool* clamped) {
    if (clamped) *clamped = false;
    Eigen::SelfAdjointEigenSolver<Mat> eig(symmetrized(center));
    const Vec d = eig.eigenvalues();
    const Mat& v = eig.eigenvectors();
    const double cutoff = 1e-14 * std::max(1.0, d.cwiseAbs().maxCoeff());
    const Mat rotated = v.transpose() * symmetrized(spread) * v;
    Mat whitened = Mat::Zero(d.size(), d.size());
    bool outside = false;
    for (Eigen::Index i = 0; i < d.size(); ++i)
        for (Eigen::Index j = 0; j < d.size(); ++j) {
            if (d(i) <= cutoff || d(j) <= cutoff) {
                outside = outside || std::abs(rotated(i, j)) * scale > cutoff;
                continue;
            }
            whitened(i, j) = scale * rotated(i, j) / std::sqrt(d(i) * d(j));
        }
    const double radius = spectral_norm_symmetric(whitened);
    if (radius <= 1.0 + 1e-12 && !outside) return spread;
    if (clamped) *clamped = true;
    Mat kept = Mat::Zero(d.size(), d.size());
    const double shrink = radius > 1.0 ? 1.0 / radius : 1.0;
    for (Eigen::Index i = 0; i < d.size(); ++i)
        for (Eigen::Index j = 0; j < d.size(); ++j)
            if (d(i) > cutoff && d(j) > cutoff) kept(i, j) = shrink * rotated(i, j);
    return symmetrized(v * kept * v.transpose());
}

double min_eigenvalue(const Mat& symmetric) {
    if (symmetric.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Mat> eig(symmetrized(symmetric), Eigen::EigenvaluesOnly);
    return eig.eigenvalues().minCoeff();
}

double spectral_norm_symmetric(const Mat& symmetric) {
    if (symmetric.size() == 0) return 0.0;
    Eigen::SelfAdjointEigenSolver<Mat> eig(symmetrized(symmetric), Eigen::EigenvaluesOnly);
    return eig.eigenvalues().cwiseAbs().maxCoeff();
}

double condition_number(const Mat& m) {
    if (m.size() == 0) return 1.0;
    if (m.size() == 1) return m(0, 0) != 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    Eigen::JacobiSVD<Mat> svd(m);
    const auto& s = svd.singularValues();
    const double smin = s(s.size() - 1);
    if (!(smin > 0.0)) return std::numeric_limits<double>::infinity();
    return s(0) / smin;
}

Mat guarded_inverse(const Mat& m, double max_cond, const char* what) {
    if (!m.allFinite()) throw InversionError(std::string(what) + ": non-finite matrix");
    const double cond = condition_number(m);
    if (!(cond <= max_cond))
        throw InversionError(std::string(what) + ": condition number " + std::to_string(cond) +
                             " exceeds limit");
    if (m.size() == 1) return Mat::Constant(1, 1, 1.0 / m(0, 0));
    return m.partialPivLu().inverse();
}

} // namespace blq
