#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>

#include <Eigen/Dense>

#include "fwdreg/errors.hpp"

namespace fwdreg {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// A matrix counts as full rank iff its 2-norm condition number is below this.
inline constexpr double kRankConditionLimit = 1e10;

// Induced 2-norm. Uses the Gram matrix of the smaller side, so wide or tall
// operators (e.g. 3 x 2000) stay cheap.
inline double spectral_norm(const Matrix& a) {
    if (a.size() == 0)
        return 0.0;
    const Matrix gram = a.rows() <= a.cols() ? Matrix(a * a.transpose()) : Matrix(a.transpose() * a);
    Eigen::SelfAdjointEigenSolver<Matrix> es(gram, Eigen::EigenvaluesOnly);
    return std::sqrt(std::max(0.0, es.eigenvalues().maxCoeff()));
}

inline double condition_number(const Matrix& a) {
    if (a.size() == 0)
        return 1.0;
    Eigen::JacobiSVD<Matrix> svd(a);
    const auto& sv = svd.singularValues();
    const double smallest = sv(sv.size() - 1);
    if (!(smallest > 0.0))
        return std::numeric_limits<double>::infinity();
    return sv(0) / smallest;
}

inline bool is_full_rank(const Matrix& a, double limit = kRankConditionLimit) {
    return a.rows() == a.cols() && condition_number(a) < limit;
}

inline Matrix symmetric_part(const Matrix& a) { return 0.5 * (a + a.transpose()); }

inline double min_eigenvalue_symmetric(const Matrix& a) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetric_part(a), Eigen::EigenvaluesOnly);
    return es.eigenvalues().minCoeff();
}

inline double max_eigenvalue_symmetric(const Matrix& a) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(symmetric_part(a), Eigen::EigenvaluesOnly);
    return es.eigenvalues().maxCoeff();
}

// Spectral abscissa: largest real part over the spectrum.
inline double spectral_abscissa(const Matrix& a) {
    Eigen::EigenSolver<Matrix> es(a, false);
    return es.eigenvalues().real().maxCoeff();
}

inline bool all_finite(const Matrix& a) { return a.allFinite(); }

// Solves A^T X + X A = -Q for X (Bartels-Stewart on the complex Schur form).
// Requires that no two eigenvalues of A sum to zero; always true for Hurwitz A.
inline Matrix solve_lyapunov(const Matrix& a, const Matrix& q) {
    using Complex = std::complex<double>;
    using CMatrix = Eigen::MatrixXcd;
    const Eigen::Index n = a.rows();
    Eigen::ComplexSchur<Matrix> schur(a);
    const CMatrix& t = schur.matrixT();
    const CMatrix& u = schur.matrixU();
    // With A = U T U^H the equation becomes T^H Y + Y T = -U^H Q U, Y = U^H X U.
    const CMatrix c = u.adjoint() * q.cast<Complex>() * u;
    CMatrix y = CMatrix::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            Complex rhs = -c(i, j);
            for (Eigen::Index k = 0; k < i; ++k)
                rhs -= std::conj(t(k, i)) * y(k, j);
            for (Eigen::Index k = 0; k < j; ++k)
                rhs -= y(i, k) * t(k, j);
            const Complex denom = std::conj(t(i, i)) + t(j, j);
            if (std::abs(denom) == 0.0)
                throw NumericalError("Lyapunov equation is singular (eigenvalues sum to zero)");
            y(i, j) = rhs / denom;
        }
    }
    const Matrix x = (u * y * u.adjoint()).real();
    return symmetric_part(x);
}

// Tridiagonal matrix with constant storage per diagonal band.
struct Tridiagonal {
    Vector lower; // size n-1, entry (i+1, i)
    Vector diag;  // size n
    Vector upper; // size n-1, entry (i, i+1)

    Eigen::Index size() const { return diag.size(); }

    Vector apply(const Vector& x) const {
        const Eigen::Index n = size();
        Vector y = diag.cwiseProduct(x);
        for (Eigen::Index i = 0; i + 1 < n; ++i) {
            y(i) += upper(i) * x(i + 1);
            y(i + 1) += lower(i) * x(i);
        }
        return y;
    }

    // Thomas algorithm; stable for the diagonally dominant systems used here.
    Vector solve(const Vector& rhs) const {
        const Eigen::Index n = size();
        Vector c(n), d(n);
        double beta = diag(0);
        if (beta == 0.0)
            throw NumericalError("tridiagonal solve: zero pivot");
        d(0) = rhs(0) / beta;
        for (Eigen::Index i = 1; i < n; ++i) {
            c(i - 1) = upper(i - 1) / beta;
            beta = diag(i) - lower(i - 1) * c(i - 1);
            if (beta == 0.0)
                throw NumericalError("tridiagonal solve: zero pivot");
            d(i) = (rhs(i) - lower(i - 1) * d(i - 1)) / beta;
        }
        for (Eigen::Index i = n - 2; i >= 0; --i)
            d(i) -= c(i) * d(i + 1);
        return d;
    }

    Matrix solve(const Matrix& rhs) const {
        Matrix out(rhs.rows(), rhs.cols());
        for (Eigen::Index j = 0; j < rhs.cols(); ++j)
            out.col(j) = solve(Vector(rhs.col(j)));
        return out;
    }

    Matrix dense() const {
        const Eigen::Index n = size();
        Matrix m = Matrix::Zero(n, n);
        for (Eigen::Index i = 0; i < n; ++i) {
            m(i, i) = diag(i);
            if (i + 1 < n) {
                m(i, i + 1) = upper(i);
                m(i + 1, i) = lower(i);
            }
        }
        return m;
    }
};

// Composite trapezoid weights on a uniform grid with the given node count.
inline Vector trapezoid_weights(Eigen::Index nodes, double spacing) {
    Vector w = Vector::Constant(nodes, spacing);
    if (nodes > 0) {
        w(0) *= 0.5;
        w(nodes - 1) *= 0.5;
    }
    return w;
}

} // namespace fwdreg
