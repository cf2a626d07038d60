#pragma once

#include <vector>

#include "fwdreg/linalg.hpp"
#include "fwdreg/model.hpp"

namespace fwdreg {

inline constexpr int kDefaultOdeSteps = 1000;

enum class SolutionKind { Phi, Psi };

/// Matrix-valued solution of a linear spatial ODE on [0, 1], sampled at every
/// integration step. samples.front() is the identity.
struct FundamentalSolution {
    SolutionKind kind = SolutionKind::Phi;
    std::vector<Matrix> samples;
    Matrix at_one;
    double sup_norm = 0.0; // max spectral norm over the samples

    int steps() const { return static_cast<int>(samples.size()) - 1; }

    // Linear interpolation between integration steps.
    Matrix at(double s) const {
        const int last = steps();
        const double x = std::clamp(s, 0.0, 1.0) * last;
        const int k = std::clamp(static_cast<int>(std::floor(x)), 0, last - 1);
        const double t = x - k;
        if (t == 0.0)
            return samples[k];
        return (1.0 - t) * samples[k] + t * samples[k + 1];
    }
};

namespace detail {

inline Vector inverse_speeds(const HyperbolicSystem& sys, double s) {
    const Vector lam = sys.lambda0.value(s);
    for (Eigen::Index i = 0; i < lam.size(); ++i)
        if (lam(i) == 0.0 || !std::isfinite(lam(i)))
            throw CoefficientError("Lambda0 is singular at s = " + std::to_string(s));
    return lam.cwiseInverse();
}

// Steady-state propagator: Lambda0 Phi_s + Lambda1 Phi = 0.
inline Matrix phi_rhs(const HyperbolicSystem& sys, double s, const Matrix& x) {
    const Matrix l1 = unflatten_square(sys.lambda1.value(s), sys.n);
    return -(inverse_speeds(sys, s).asDiagonal() * (l1 * x));
}

// Adjoint propagator acting from the left: Psi_s = Psi (Lambda1 - Lambda0_s) Lambda0^{-1}.
inline Matrix psi_rhs(const HyperbolicSystem& sys, double s, const Matrix& x) {
    const Matrix l1 = unflatten_square(sys.lambda1.value(s), sys.n);
    const Matrix dl0 = sys.lambda0.derivative(s).asDiagonal();
    return x * (l1 - dl0) * inverse_speeds(sys, s).asDiagonal();
}

template <typename Rhs>
FundamentalSolution integrate_rk4(SolutionKind kind, const Matrix& initial, double s0, double s1,
                                  int steps, Rhs&& rhs) {
    if (steps < 1)
        throw ConfigError("integration needs at least one step");
    FundamentalSolution out;
    out.kind = kind;
    out.samples.reserve(steps + 1);
    out.samples.push_back(initial);
    const double h = (s1 - s0) / steps;
    Matrix x = initial;
    for (int k = 0; k < steps; ++k) {
        const double s = s0 + k * h;
        // Clamp the last stage so rounding never leaves the coefficient domain.
        const double s_mid = std::min(s + 0.5 * h, 1.0);
        const double s_end = k + 1 == steps ? s1 : std::min(s + h, 1.0);
        const Matrix k1 = rhs(s, x);
        const Matrix k2 = rhs(s_mid, x + 0.5 * h * k1);
        const Matrix k3 = rhs(s_mid, x + 0.5 * h * k2);
        const Matrix k4 = rhs(s_end, x + h * k3);
        x += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        if (!x.allFinite())
            throw NumericalError("fundamental solution diverged");
        out.samples.push_back(x);
    }
    out.at_one = x;
    for (const auto& sample : out.samples)
        out.sup_norm = std::max(out.sup_norm, spectral_norm(sample));
    return out;
}

} // namespace detail

/// Phi on [s0, s1] starting from `initial` at s0.
inline FundamentalSolution propagate_phi(const HyperbolicSystem& sys, double s0, double s1, int steps,
                                         const Matrix& initial) {
    return detail::integrate_rk4(SolutionKind::Phi, initial, s0, s1, steps,
                                 [&sys](double s, const Matrix& x) { return detail::phi_rhs(sys, s, x); });
}

inline FundamentalSolution propagate_psi(const HyperbolicSystem& sys, double s0, double s1, int steps,
                                         const Matrix& initial) {
    return detail::integrate_rk4(SolutionKind::Psi, initial, s0, s1, steps,
                                 [&sys](double s, const Matrix& x) { return detail::psi_rhs(sys, s, x); });
}

/// Steady-state propagator Phi(s), Phi(0) = I: every equilibrium profile is
/// Phi(s) phi(0). Classical RK4 with fixed step 1/steps.
inline FundamentalSolution integrate_phi(const HyperbolicSystem& sys, int steps = kDefaultOdeSteps) {
    if (steps < 10)
        throw ConfigError("integrate_phi needs steps >= 10");
    return propagate_phi(sys, 0.0, 1.0, steps, Matrix::Identity(sys.n, sys.n));
}

/// Psi(s), Psi(0) = I, the row propagator that annihilates the interior terms
/// of the forwarding map. sup_norm is the bound used in the gain formula.
inline FundamentalSolution integrate_psi(const HyperbolicSystem& sys, int steps = kDefaultOdeSteps) {
    if (steps < 10)
        throw ConfigError("integrate_psi needs steps >= 10");
    return propagate_psi(sys, 0.0, 1.0, steps, Matrix::Identity(sys.n, sys.n));
}

struct BlockSplit {
    Matrix phi_plus;  // [[Phi11, Phi12], [0, I]]
    Matrix phi_minus; // [[I, 0], [Phi21, Phi22]]
    Matrix k_plus;    // [[I, 0], [K21, K22]]
    Matrix k_minus;   // [[K11, K12], [0, I]]
};

inline BlockSplit split_blocks(const HyperbolicSystem& sys, const Matrix& phi_at_one) {
    const int l = sys.ell;
    const int r = sys.n - sys.ell;
    BlockSplit out;
    out.phi_plus = Matrix::Zero(sys.n, sys.n);
    out.phi_plus.topRows(l) = phi_at_one.topRows(l);
    out.phi_plus.bottomRightCorner(r, r).setIdentity();

    out.phi_minus = Matrix::Zero(sys.n, sys.n);
    out.phi_minus.topLeftCorner(l, l).setIdentity();
    out.phi_minus.bottomRows(r) = phi_at_one.bottomRows(r);

    out.k_plus = Matrix::Zero(sys.n, sys.n);
    out.k_plus.topLeftCorner(l, l).setIdentity();
    out.k_plus.bottomRows(r) = sys.K.bottomRows(r);

    out.k_minus = Matrix::Zero(sys.n, sys.n);
    out.k_minus.topRows(l) = sys.K.topRows(l);
    out.k_minus.bottomRightCorner(r, r).setIdentity();
    return out;
}

} // namespace fwdreg
