#include "ldb/linalg.hpp"

#include "ldb/error.hpp"

#include <algorithm>

namespace ldb {

Vector symmetric_eigenvalues(const Matrix& s) {
    if (s.rows() != s.cols()) {
        throw DimensionError("symmetric_eigenvalues: matrix is not square");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> solver(s, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) {
        throw Error("symmetric_eigenvalues: eigen solver did not converge");
    }
    return solver.eigenvalues();
}

EigenExtremes symmetric_extremes(const Matrix& s) {
    const Vector ev = symmetric_eigenvalues(s);
    return {ev(0), ev(ev.size() - 1)};
}

double min_eigenvalue(const Matrix& s) {
    return symmetric_eigenvalues(s)(0);
}

double psd_determinant(const Matrix& s) {
    const Vector ev = symmetric_eigenvalues(s);
    double det = 1.0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        det *= std::max(ev(i), 0.0);
    }
    return det;
}

double inverse_norm(const Matrix& m, const Vector& x) {
    Eigen::LLT<Matrix> llt(m);
    if (llt.info() != Eigen::Success) {
        throw PreconditionError("inverse_norm: matrix is not positive definite");
    }
    // |L^{-1} x|^2 = <M^{-1} x, x>
    const Vector y = llt.matrixL().solve(x);
    return y.norm();
}

Matrix spd_sqrt(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(m);
    if (solver.info() != Eigen::Success) {
        throw Error("spd_sqrt: eigen solver did not converge");
    }
    return solver.operatorSqrt();
}

double max_generalized_eigenvalue(const Matrix& a, const Matrix& b) {
    Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> solver(a, b, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) {
        throw PreconditionError("max_generalized_eigenvalue: second matrix is not positive definite");
    }
    return solver.eigenvalues().maxCoeff();
}

Vector least_norm_solution(const Matrix& sigma, const Vector& v) {
    const Matrix ss = sigma * sigma.transpose();
    Eigen::LDLT<Matrix> ldlt(ss);
    return sigma.transpose() * ldlt.solve(v);
}

}  // namespace ldb
