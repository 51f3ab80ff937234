#pragma once

#include <Eigen/Dense>

#include <utility>

namespace ldb {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Extreme eigenvalues of a symmetric matrix.
struct EigenExtremes {
    double min = 0.0;
    double max = 0.0;
};

// Symmetric eigenvalues in ascending order (tridiagonalization + QR).
[[nodiscard]] Vector symmetric_eigenvalues(const Matrix& s);
[[nodiscard]] EigenExtremes symmetric_extremes(const Matrix& s);
[[nodiscard]] double min_eigenvalue(const Matrix& s);

// Determinant of a symmetric PSD matrix as the product of its clipped
// eigenvalues; never negative.
[[nodiscard]] double psd_determinant(const Matrix& s);

// sqrt(<M^{-1} x, x>) for SPD M.
[[nodiscard]] double inverse_norm(const Matrix& m, const Vector& x);

// Symmetric square root of an SPD matrix.
[[nodiscard]] Matrix spd_sqrt(const Matrix& m);

// Largest lambda with a v = lambda b v, b SPD.
[[nodiscard]] double max_generalized_eigenvalue(const Matrix& a, const Matrix& b);

// Least-norm solution w of sigma w = v, i.e. sigma^*(sigma sigma^*)^{-1} v.
// Assumes sigma sigma^* is invertible.
[[nodiscard]] Vector least_norm_solution(const Matrix& sigma, const Vector& v);

[[nodiscard]] inline bool is_symmetric(const Matrix& s, double tol = 1e-10) {
    return s.rows() == s.cols() &&
           (s - s.transpose()).cwiseAbs().maxCoeff() <= tol * (1.0 + s.cwiseAbs().maxCoeff());
}

}  // namespace ldb
