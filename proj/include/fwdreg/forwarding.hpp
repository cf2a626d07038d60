#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <tuple>
#include <utility>

#include "fwdreg/errors.hpp"
#include "fwdreg/linalg.hpp"
#include "fwdreg/model.hpp"

namespace fwdreg {

struct LyapunovSolution {
    Matrix P;
    double mu = 1.0;          // A^T P + P A <= -mu |.|^2, always 1 here
    double mu_weighted = 0.0; // A^T P + P A <= -mu_weighted P, equal to mu / lambda_max(P)
    double residual = 0.0;    // |A^T P + P A + I| (spectral)
};

inline void require_hurwitz(const Matrix& a) {
    if (a.rows() == 0 || a.rows() != a.cols())
        throw ConfigError("A must be square and non-empty");
    if (!a.allFinite())
        throw NumericalError("A has non-finite entries");
    const double abscissa = spectral_abscissa(a);
    if (abscissa >= -1e-12) {
        std::ostringstream msg;
        msg << "A is not Hurwitz (spectral abscissa " << abscissa << ")";
        throw AssumptionError("hurwitz", msg.str());
    }
}

/// Solves A^T P + P A = -I for a Hurwitz A.
inline LyapunovSolution lyapunov_P(const Matrix& a) {
    require_hurwitz(a);
    LyapunovSolution out;
    const Matrix identity = Matrix::Identity(a.rows(), a.cols());
    out.P = solve_lyapunov(a, identity);
    out.mu = 1.0;
    out.mu_weighted = 1.0 / max_eigenvalue_symmetric(out.P);
    out.residual = spectral_norm(a.transpose() * out.P + out.P * a + identity);
    return out;
}

/// Scalar tuning of the forwarding functional V(phi) + p |z - M phi|^2.
///
/// With b = 1/|M|^2 and a = theta p / alpha the dissipation splits as
///   -(mu - 2 ki |M| sqrt(alpha) / sqrt(theta)) |phi|^2 - ki sqrt(alpha) (1 - theta) / (|M| sqrt(theta)) |z|^2,
/// so any theta in ((ki/ki_star)^2, 1) certifies a positive rate. theta is
/// chosen where the two rates coincide.
struct ForwardingGains {
    double ki_star = 0.0; // mu / (2 |M| sqrt(alpha))
    double ki = 0.0;
    double theta = 1.0;
    double p = 0.0;
    double a = 0.0;
    double b = 0.0;
    double mu_e = 0.0;
    bool within_bound = false;
};

inline double forwarding_gain_bound(double mu, double norm_M, double alpha) {
    return mu / (2.0 * norm_M * std::sqrt(alpha));
}

inline ForwardingGains forwarding_gains(double mu, double norm_M, double alpha, double ki) {
    if (!(mu > 0.0) || !(norm_M > 0.0) || !(alpha > 0.0))
        throw ConfigError("forwarding gains need mu, |M| and alpha positive");
    ForwardingGains g;
    g.ki = ki;
    g.ki_star = forwarding_gain_bound(mu, norm_M, alpha);
    g.b = 1.0 / (norm_M * norm_M);
    const double s = std::sqrt(alpha);
    auto state_rate = [&](double th) { return mu - 2.0 * ki * norm_M * s / std::sqrt(th); };
    auto integrator_rate = [&](double th) { return ki * s * (1.0 - th) / (norm_M * std::sqrt(th)); };

    g.within_bound = ki > 0.0 && ki < g.ki_star;
    if (g.within_bound) {
        double lo = (ki / g.ki_star) * (ki / g.ki_star);
        double hi = 1.0;
        for (int it = 0; it < 200 && hi - lo > 1e-16; ++it) {
            const double mid = 0.5 * (lo + hi);
            if (state_rate(mid) < integrator_rate(mid))
                lo = mid;
            else
                hi = mid;
        }
        g.theta = 0.5 * (lo + hi);
    }
    g.p = s / (norm_M * std::sqrt(g.theta));
    g.a = g.theta * g.p / alpha;
    g.mu_e = std::min(state_rate(g.theta), integrator_rate(g.theta));
    return g;
}

struct ForwardingDesign {
    Matrix P;
    double mu = 0.0;
    Matrix M;  // C A^{-1}
    Matrix Ki; // (C A^{-1} B)^{-1}
    double alpha = 0.0;
    double norm_M = 0.0;
    double cond_CAinvB = 0.0;
    ForwardingGains gains;
    Matrix Pe;

    double ki_star() const { return gains.ki_star; }
    double p() const { return gains.p; }
    double mu_e() const { return gains.mu_e; }
};

/// [[P + p M^T M, -p M^T], [-p M, p I]]
inline Matrix extended_weight(const Matrix& P, const Matrix& M, double p) {
    const Eigen::Index n = P.rows();
    const Eigen::Index m = M.rows();
    Matrix pe(n + m, n + m);
    pe.topLeftCorner(n, n) = P + p * M.transpose() * M;
    pe.topRightCorner(n, m) = -p * M.transpose();
    pe.bottomLeftCorner(m, n) = -p * M;
    pe.bottomRightCorner(m, m) = p * Matrix::Identity(m, m);
    return symmetric_part(pe);
}

/// M = C A^{-1} (by a transposed solve), Ki = (M B)^{-1}.
inline std::pair<Matrix, Matrix> steady_state_maps(const Matrix& A, const Matrix& B, const Matrix& C,
                                                   double* cond_out = nullptr) {
    const Matrix M = Matrix(A.transpose().partialPivLu().solve(C.transpose())).transpose();
    const Matrix g = M * B;
    const double cond = condition_number(g);
    if (cond_out)
        *cond_out = cond;
    if (!(cond < kRankConditionLimit)) {
        std::ostringstream msg;
        msg << "C A^-1 B is singular (condition number " << cond << ")";
        throw AssumptionError("rank_condition", msg.str(), cond);
    }
    return {M, g.inverse()};
}

/// Forwarding design for phi' = A phi + B u, y = C phi with a given Lyapunov
/// matrix P (A^T P + P A <= -mu I). The operating gain defaults to 0.9 ki_star.
inline ForwardingDesign forwarding_design(const Matrix& A, const Matrix& B, const Matrix& C, const Matrix& P,
                                          double mu, std::optional<double> ki = std::nullopt) {
    const AbstractLinearSystem sys{A, B, C};
    if (const auto v = validate_abstract(sys); !v.empty()) {
        if (v.front().invariant == "hurwitz")
            throw AssumptionError("hurwitz", v.front().detail);
        throw ConfigError(v.front().invariant + ": " + v.front().detail);
    }
    if (P.rows() != A.rows() || P.cols() != A.cols())
        throw ConfigError("P must be N x N");
    if (!(mu > 0.0))
        throw ConfigError("mu must be positive");

    ForwardingDesign d;
    d.P = P;
    d.mu = mu;
    std::tie(d.M, d.Ki) = steady_state_maps(A, B, C, &d.cond_CAinvB);
    const double pbk = spectral_norm(P * B * d.Ki);
    d.alpha = pbk * pbk;
    d.norm_M = spectral_norm(d.M);
    const double star = forwarding_gain_bound(mu, d.norm_M, d.alpha);
    d.gains = forwarding_gains(mu, d.norm_M, d.alpha, ki.value_or(0.9 * star));
    d.Pe = extended_weight(P, d.M, d.gains.p);
    return d;
}

/// [[A, ki B Ki], [C, 0]]
inline Matrix extended_operator(const Matrix& A, const Matrix& B, const Matrix& C, const Matrix& Ki, double ki) {
    const Eigen::Index n = A.rows();
    const Eigen::Index m = C.rows();
    Matrix ae = Matrix::Zero(n + m, n + m);
    ae.topLeftCorner(n, n) = A;
    ae.topRightCorner(n, m) = ki * B * Ki;
    ae.bottomLeftCorner(m, n) = C;
    return ae;
}

struct DissipationReport {
    double min_eig_Pe = 0.0;
    double max_eig_dissipation = 0.0; // lambda_max(Ae^T Pe + Pe Ae)
    double scale = 1.0;
    bool pe_positive = false;
    bool strictly_dissipative = false;
    bool pass = false;
};

/// Checks Pe > 0 and Ae^T Pe + Pe Ae < 0 for the closed loop at gain ki.
inline DissipationReport verify_forwarding_inequality(const ForwardingDesign& d, const Matrix& A, const Matrix& B,
                                                      const Matrix& C, double ki) {
    DissipationReport r;
    const Matrix ae = extended_operator(A, B, C, d.Ki, ki);
    const Matrix lhs = ae.transpose() * d.Pe + d.Pe * ae;
    r.min_eig_Pe = min_eigenvalue_symmetric(d.Pe);
    r.max_eig_dissipation = max_eigenvalue_symmetric(lhs);
    r.scale = std::max(1.0, spectral_norm(d.Pe) * spectral_norm(ae));
    r.pe_positive = r.min_eig_Pe > 0.0;
    r.strictly_dissipative = r.max_eig_dissipation < -1e-10 * r.scale;
    r.pass = r.pe_positive && r.strictly_dissipative;
    return r;
}

/// nu / (|C A^{-1}| k^2 |B (C A^{-1} B)^{-1}|) from semigroup constants |e^{At}| <= k e^{-nu t}.
inline double semigroup_gain_bound(double norm_CAinv, double norm_BKi, double k_sg, double nu_sg) {
    if (!(k_sg > 0.0) || !(nu_sg > 0.0))
        throw ConfigError("semigroup constants must be positive");
    return nu_sg / (norm_CAinv * k_sg * k_sg * norm_BKi);
}

inline double semigroup_gain_bound(const Matrix& A, const Matrix& B, const Matrix& C, double k_sg, double nu_sg) {
    const auto [M, Ki] = steady_state_maps(A, B, C);
    return semigroup_gain_bound(spectral_norm(M), spectral_norm(B * Ki), k_sg, nu_sg);
}

} // namespace fwdreg
