#pragma once

#include <Eigen/Dense>

#include <vector>

namespace blq {

// Largest supported state/control dimension; small matrices live on the stack.
inline constexpr int kMaxDim = 6;

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;
using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;

// Values of one process at one time level: one row per atom (path or tree node),
// matrices flattened column-major into a row.
using Field = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
// One Field per time level.
using Process = std::vector<Field>;

inline Mat row_as_mat(const Field& f, Eigen::Index row, Eigen::Index rows, Eigen::Index cols) {
    return Eigen::Map<const Eigen::MatrixXd>(f.row(row).data(), rows, cols);
}

inline Vec row_as_vec(const Field& f, Eigen::Index row) {
    return Eigen::Map<const Eigen::VectorXd>(f.row(row).data(), f.cols());
}

template <typename Derived>
void store_row(Field& f, Eigen::Index row, const Eigen::MatrixBase<Derived>& m) {
    Eigen::Map<Eigen::MatrixXd>(f.row(row).data(), m.rows(), m.cols()) = m;
}

inline Mat symmetrized(const Mat& m) { return 0.5 * (m + m.transpose()); }

// Symmetric eigenvalue floor; returns the input unchanged when already above it.
Mat psd_floor(const Mat& m, double floor, bool* projected = nullptr);

// Scales the symmetric spread so that center +- scale * spread stays PSD, dropping the parts
// of the spread outside the range of the center. The input is returned untouched when it
// already satisfies the bound.
Mat clamp_spread(const Mat& center, const Mat& spread, double scale, bool* clamped = nullptr);

double min_eigenvalue(const Mat& symmetric);
double spectral_norm_symmetric(const Mat& symmetric);
// Ratio of extreme singular values (infinity for singular input).
double condition_number(const Mat& m);

// Inverse with a conditioning guard; throws InversionError above max_cond.
Mat guarded_inverse(const Mat& m, double max_cond, const char* what);

} // namespace blq
