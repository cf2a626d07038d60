#pragma once

#include <cmath>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "fwdreg/errors.hpp"
#include "fwdreg/fundamental.hpp"
#include "fwdreg/linalg.hpp"
#include "fwdreg/model.hpp"

namespace fwdreg {

// ---------------------------------------------------------------------------
// Rank conditions
// ---------------------------------------------------------------------------

struct RankReport {
    Matrix t1;       // m x m steady-state input-to-output map
    Matrix t2;       // m x m forwarding input map
    Matrix m_matrix; // m x n
    Matrix inner1;   // Phi-(1) - K Phi+(1)
    Matrix inner2;   // Psi(1) Lambda0(1) K+ - Lambda0(0) K-
    double cond_inner1 = std::numeric_limits<double>::infinity();
    double cond_inner2 = std::numeric_limits<double>::infinity();
    double cond_t1 = std::numeric_limits<double>::infinity();
    double cond_t2 = std::numeric_limits<double>::infinity();
    bool passes_rank1 = false;
    bool passes_rank2 = false;
};

namespace detail {

inline Matrix lambda0_at(const HyperbolicSystem& sys, double s) {
    return sys.lambda0.value(s).asDiagonal();
}

// [B1; 0] and [0; B2]: the input rows entering at s = 0 and at s = 1.
inline Matrix input_at_left(const HyperbolicSystem& sys) {
    Matrix out = Matrix::Zero(sys.n, sys.m);
    out.topRows(sys.ell) = sys.B.topRows(sys.ell);
    return out;
}

inline Matrix input_at_right(const HyperbolicSystem& sys) {
    Matrix out = Matrix::Zero(sys.n, sys.m);
    out.bottomRows(sys.n - sys.ell) = sys.B.bottomRows(sys.n - sys.ell);
    return out;
}

inline void require_full_rank(const Matrix& a, const std::string& assumption, const std::string& name) {
    const double cond = condition_number(a);
    if (!(cond < kRankConditionLimit)) {
        std::ostringstream msg;
        msg << assumption << ": " << name << " is singular (condition number " << cond << ")";
        throw AssumptionError(assumption, msg.str(), cond);
    }
}

} // namespace detail

/// Maps [phi+(1); phi-(0)]-free steady states: T1 = (L1 Phi-(1) + L2 Phi+(1)) (Phi-(1) - K Phi+(1))^{-1} B.
inline Matrix compute_T1(const HyperbolicSystem& sys, const BlockSplit& blocks) {
    const Matrix inner = blocks.phi_minus - sys.K * blocks.phi_plus;
    detail::require_full_rank(inner, "rank_condition_1", "Phi-(1) - K Phi+(1)");
    const Matrix t1 = (sys.L1 * blocks.phi_minus + sys.L2 * blocks.phi_plus) * inner.partialPivLu().solve(sys.B);
    detail::require_full_rank(t1, "rank_condition_1", "T1");
    return t1;
}

struct ForwardingMap {
    Matrix M;  // m x n
    Matrix T2; // m x m
};

namespace detail {

inline Matrix forwarding_inner(const HyperbolicSystem& sys, const Matrix& psi_at_one) {
    const BlockSplit blocks = split_blocks(sys, Matrix::Identity(sys.n, sys.n));
    return psi_at_one * lambda0_at(sys, 1.0) * blocks.k_plus - lambda0_at(sys, 0.0) * blocks.k_minus;
}

inline ForwardingMap forwarding_map(const HyperbolicSystem& sys, const Matrix& psi_at_one, const Matrix& inner) {
    ForwardingMap out;
    // M (-inner) = L1 K + L2
    const Matrix rhs = (sys.L1 * sys.K + sys.L2).transpose();
    out.M = Matrix((-inner).transpose().partialPivLu().solve(rhs)).transpose();
    out.T2 = -sys.L1 * sys.B + out.M * (lambda0_at(sys, 0.0) * input_at_left(sys) -
                                        psi_at_one * lambda0_at(sys, 1.0) * input_at_right(sys));
    return out;
}

} // namespace detail

/// M = (L1 K + L2) (Lambda0(0) K- - Psi(1) Lambda0(1) K+)^{-1} and
/// T2 = -L1 B + M (Lambda0(0) [B1; 0] - Psi(1) Lambda0(1) [0; B2]).
inline ForwardingMap compute_M_and_T2(const HyperbolicSystem& sys, const Matrix& psi_at_one) {
    const Matrix inner = detail::forwarding_inner(sys, psi_at_one);
    detail::require_full_rank(inner, "rank_condition_2", "Psi(1) Lambda0(1) K+ - Lambda0(0) K-");
    ForwardingMap out = detail::forwarding_map(sys, psi_at_one, inner);
    detail::require_full_rank(out.T2, "rank_condition_2", "T2");
    return out;
}

/// Non-throwing evaluation of both rank conditions.
inline RankReport rank_report(const HyperbolicSystem& sys, const FundamentalSolution& phi,
                              const FundamentalSolution& psi) {
    RankReport r;
    const BlockSplit blocks = split_blocks(sys, phi.at_one);
    r.inner1 = blocks.phi_minus - sys.K * blocks.phi_plus;
    r.cond_inner1 = condition_number(r.inner1);
    if (r.cond_inner1 < kRankConditionLimit) {
        r.t1 = (sys.L1 * blocks.phi_minus + sys.L2 * blocks.phi_plus) * r.inner1.partialPivLu().solve(sys.B);
        r.cond_t1 = condition_number(r.t1);
    }
    r.passes_rank1 = r.cond_inner1 < kRankConditionLimit && r.cond_t1 < kRankConditionLimit;

    r.inner2 = detail::forwarding_inner(sys, psi.at_one);
    r.cond_inner2 = condition_number(r.inner2);
    if (r.cond_inner2 < kRankConditionLimit) {
        const ForwardingMap fm = detail::forwarding_map(sys, psi.at_one, r.inner2);
        r.m_matrix = fm.M;
        r.t2 = fm.T2;
        r.cond_t2 = condition_number(r.t2);
    }
    r.passes_rank2 = r.cond_inner2 < kRankConditionLimit && r.cond_t2 < kRankConditionLimit;
    return r;
}

// ---------------------------------------------------------------------------
// Input-to-state Lyapunov certificate
// ---------------------------------------------------------------------------

struct IssSearchConfig {
    std::vector<double> mu_grid;
    std::vector<double> p_grid;
    double tolerance = 1e-9;
    int sweeps = 3;

    static IssSearchConfig defaults() {
        IssSearchConfig c;
        for (int k = 1; k <= 60; ++k)
            c.mu_grid.push_back(0.05 * k);
        for (int k = 0; k < 9; ++k)
            c.p_grid.push_back(std::pow(10.0, -2.0 + 0.5 * k));
        return c;
    }

    static IssSearchConfig at_mu(double mu) {
        IssSearchConfig c = defaults();
        c.mu_grid = {mu};
        return c;
    }
};

struct IssCertificate {
    LyapunovWeight weight;
    double c = 0.0;        // input gain of dV/dt <= -mu V + c |u|^2
    Matrix S;              // n x n boundary dissipation
    Matrix Q;              // n x m
    Matrix R;              // m x m
    double interior_margin = -std::numeric_limits<double>::infinity(); // -max_s lambda_max(residual)
    double block_margin = -std::numeric_limits<double>::infinity();    // -lambda_max([[-S, Q], [Q^T, R - cI]])
    bool valid = false;
};

/// Evaluates one member (mu, p) of the weight family against the interior
/// inequality at every grid node, the boundary inequality and the ISS block.
inline IssCertificate evaluate_weight(const HyperbolicSystem& sys, double mu, const Vector& p,
                                      double tolerance = 1e-9) {
    IssCertificate cert;
    cert.weight = make_weight(sys, mu, p);
    const LyapunovWeight& w = cert.weight;
    const int g = sys.grid_points();

    // (P Lambda0)_s - P Lambda1 - Lambda1^T P + mu P <= 0 at each node.
    double worst = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < g; ++k) {
        const Vector pk = w.samples.row(k).transpose();
        const Matrix l1 = unflatten_square(sys.lambda1.sample(k), sys.n);
        Matrix residual = -(pk.asDiagonal() * l1);
        residual += residual.transpose().eval();
        residual.diagonal() += w.flux_derivative.row(k).transpose() + mu * pk;
        worst = std::max(worst, max_eigenvalue_symmetric(residual) / w.P_upper);
    }
    cert.interior_margin = -worst;

    const BlockSplit blocks = split_blocks(sys, Matrix::Identity(sys.n, sys.n));
    const Matrix flux_right = Matrix(w.samples.row(g - 1).transpose().asDiagonal()) * detail::lambda0_at(sys, 1.0);
    const Matrix flux_left = Matrix(w.samples.row(0).transpose().asDiagonal()) * detail::lambda0_at(sys, 0.0);
    const Matrix in_left = detail::input_at_left(sys);
    const Matrix in_right = detail::input_at_right(sys);

    // phi(1) = K+ xi + [0; B2] u, phi(0) = K- xi + [B1; 0] u, xi = [phi+(1); phi-(0)].
    cert.S = symmetric_part(blocks.k_plus.transpose() * flux_right * blocks.k_plus -
                            blocks.k_minus.transpose() * flux_left * blocks.k_minus);
    cert.Q = -blocks.k_plus.transpose() * flux_right * in_right + blocks.k_minus.transpose() * flux_left * in_left;
    cert.R = symmetric_part(-in_right.transpose() * flux_right * in_right + in_left.transpose() * flux_left * in_left);
    cert.weight.S_margin = min_eigenvalue_symmetric(cert.S);

    if (cert.weight.S_margin > 0.0) {
        const Matrix schur = cert.R + cert.Q.transpose() * cert.S.ldlt().solve(cert.Q);
        cert.c = std::max(0.0, max_eigenvalue_symmetric(schur));
        Matrix block(sys.n + sys.m, sys.n + sys.m);
        block << -cert.S, cert.Q, cert.Q.transpose(), cert.R - cert.c * Matrix::Identity(sys.m, sys.m);
        cert.block_margin = -max_eigenvalue_symmetric(block);
    }

    const double scale = std::max(1.0, w.P_upper);
    cert.valid = std::isfinite(cert.interior_margin) && cert.interior_margin >= -tolerance &&
                 cert.weight.S_margin > tolerance * scale && cert.block_margin >= -tolerance * scale &&
                 w.P_lower > 0.0 && std::isfinite(w.P_upper);
    return cert;
}

namespace detail {

// Scale-free feasibility score used to steer the coordinate search.
inline double feasibility_score(const IssCertificate& c) {
    const double s = c.weight.S_margin / std::max(c.weight.P_upper, 1e-300);
    return std::min(c.interior_margin, s);
}

// mu * P_lower / c: the part of the gain bound that depends on the weight.
inline double gain_score(const IssCertificate& c) {
    if (!c.valid)
        return -std::numeric_limits<double>::infinity();
    if (c.c <= 0.0)
        return std::numeric_limits<double>::infinity();
    return c.weight.mu * c.weight.P_lower / c.c;
}

enum class SearchObjective { Feasibility, Gain };

inline bool better(const IssCertificate& a, const IssCertificate& b, SearchObjective obj) {
    if (a.valid != b.valid)
        return a.valid;
    if (a.valid && obj == SearchObjective::Gain)
        return gain_score(a) > gain_score(b);
    return feasibility_score(a) > feasibility_score(b);
}

// Coordinate-wise search over p_i in the grid, seeded at p_i = 1.
inline IssCertificate search_weights(const HyperbolicSystem& sys, double mu, const IssSearchConfig& cfg,
                                     SearchObjective obj) {
    Vector p = Vector::Ones(sys.n);
    IssCertificate best = evaluate_weight(sys, mu, p, cfg.tolerance);
    for (int sweep = 0; sweep < cfg.sweeps; ++sweep) {
        bool improved = false;
        for (int i = 0; i < sys.n; ++i) {
            for (double candidate : cfg.p_grid) {
                if (candidate == p(i))
                    continue;
                Vector trial = p;
                trial(i) = candidate;
                IssCertificate c = evaluate_weight(sys, mu, trial, cfg.tolerance);
                if (better(c, best, obj)) {
                    best = std::move(c);
                    p = trial;
                    improved = true;
                }
            }
        }
        if (!improved)
            break;
    }
    return best;
}

} // namespace detail

/// First feasible weight of the family in grid order (mu ascending as configured).
inline IssCertificate certify_iss(const HyperbolicSystem& sys,
                                  const IssSearchConfig& cfg = IssSearchConfig::defaults()) {
    double best_margin = -std::numeric_limits<double>::infinity();
    for (double mu : cfg.mu_grid) {
        IssCertificate c = detail::search_weights(sys, mu, cfg, detail::SearchObjective::Feasibility);
        if (c.valid)
            return c;
        best_margin = std::max(best_margin, detail::feasibility_score(c));
    }
    std::ostringstream msg;
    msg << "no feasible Lyapunov weight in the search family (best margin " << best_margin << ")";
    throw CertificationError(msg.str(), best_margin);
}

/// Feasible weight maximizing mu * P_lower / c over the whole grid.
inline IssCertificate certify_iss_max_gain(const HyperbolicSystem& sys,
                                           const IssSearchConfig& cfg = IssSearchConfig::defaults()) {
    std::optional<IssCertificate> best;
    double best_margin = -std::numeric_limits<double>::infinity();
    for (double mu : cfg.mu_grid) {
        IssCertificate c = detail::search_weights(sys, mu, cfg, detail::SearchObjective::Gain);
        best_margin = std::max(best_margin, detail::feasibility_score(c));
        if (c.valid && (!best || detail::gain_score(c) > detail::gain_score(*best)))
            best = std::move(c);
    }
    if (!best) {
        std::ostringstream msg;
        msg << "no feasible Lyapunov weight in the search family (best margin " << best_margin << ")";
        throw CertificationError(msg.str(), best_margin);
    }
    return *best;
}

// ---------------------------------------------------------------------------
// Gain certificate
// ---------------------------------------------------------------------------

enum class WeightSelection { FirstFeasible, MaximizeGain };

struct DesignOptions {
    IssSearchConfig iss = IssSearchConfig::defaults();
    WeightSelection selection = WeightSelection::MaximizeGain;
    int ode_steps = kDefaultOdeSteps;
    double gain_fraction = 0.9;   // operating ki = gain_fraction * ki_star
    double weight_fraction = 0.9; // forwarding weight p = weight_fraction * p_max
    std::optional<double> ki;     // explicit operating gain
};

struct GainCertificate {
    Matrix Ki;
    double ki_star = 0.0;
    double ki = 0.0;
    double p_max = 0.0;
    double p = 0.0;
    double mu_e = 0.0;
    double psi_bar = 0.0;
    double norm_M = 0.0;
    double norm_Ki = 0.0;
    bool within_bound = false;
    RankReport rank;
    IssCertificate iss;
};

/// sqrt(mu P_lower / c) / (|M| Psi_bar |Ki|).
inline double gain_bound(double mu, double P_lower, double c, double norm_M, double psi_bar, double norm_Ki) {
    return std::sqrt(mu * P_lower / c) / (norm_M * psi_bar * norm_Ki);
}

/// mu P_lower / (ki |M|^2 Psi_bar^2).
inline double forwarding_weight_bound(double mu, double P_lower, double ki, double norm_M, double psi_bar) {
    return mu * P_lower / (ki * norm_M * norm_M * psi_bar * psi_bar);
}

/// Decay rate of V_e guaranteed at (ki, p):
/// dV_e/dt <= -a1 V - a2 |z|^2 with a1 = mu - p ki G, a2 = p ki - c ki^2 |Ki|^2, G = |M|^2 Psi_bar^2 / P_lower,
/// and V_e <= (1 + 2 p G) V + 2 p |z|^2.
inline double forwarding_decay_rate(double mu, double P_lower, double c, double norm_M, double psi_bar,
                                    double norm_Ki, double ki, double p) {
    const double g = norm_M * norm_M * psi_bar * psi_bar / P_lower;
    const double a1 = mu - p * ki * g;
    const double a2 = p * ki - c * ki * ki * norm_Ki * norm_Ki;
    return std::min(a1 / (1.0 + 2.0 * p * g), a2 / (2.0 * p));
}

/// Full design: rank conditions, ISS certificate, Ki = T2^{-1} and the gain bound.
inline GainCertificate design(const HyperbolicSystem& sys, const DesignOptions& opt = {}) {
    if (const auto v = validate_hyperbolic(sys); !v.empty())
        throw ConfigError("invalid hyperbolic system: " + v.front().invariant + ": " + v.front().detail);

    const FundamentalSolution phi = integrate_phi(sys, opt.ode_steps);
    const FundamentalSolution psi = integrate_psi(sys, opt.ode_steps);
    const BlockSplit blocks = split_blocks(sys, phi.at_one);

    GainCertificate out;
    compute_T1(sys, blocks);
    const ForwardingMap fm = compute_M_and_T2(sys, psi.at_one);
    out.rank = rank_report(sys, phi, psi);

    out.iss = opt.selection == WeightSelection::MaximizeGain ? certify_iss_max_gain(sys, opt.iss)
                                                             : certify_iss(sys, opt.iss);

    out.Ki = fm.T2.inverse();
    out.psi_bar = psi.sup_norm;
    out.norm_M = spectral_norm(fm.M);
    out.norm_Ki = spectral_norm(out.Ki);
    if (!(out.norm_M > 0.0))
        throw AssumptionError("forwarding_map", "forwarding matrix M vanishes; the gain bound is unbounded");
    if (!(out.iss.c > 0.0))
        throw NumericalError("ISS input constant c is zero");

    const double mu = out.iss.weight.mu;
    const double p_lower = out.iss.weight.P_lower;
    out.ki_star = gain_bound(mu, p_lower, out.iss.c, out.norm_M, out.psi_bar, out.norm_Ki);
    out.ki = opt.ki.value_or(opt.gain_fraction * out.ki_star);
    if (!(out.ki > 0.0))
        throw ConfigError("operating gain must be positive");
    out.within_bound = out.ki < out.ki_star;
    out.p_max = forwarding_weight_bound(mu, p_lower, out.ki, out.norm_M, out.psi_bar);
    out.p = opt.weight_fraction * out.p_max;
    out.mu_e = forwarding_decay_rate(mu, p_lower, out.iss.c, out.norm_M, out.psi_bar, out.norm_Ki, out.ki, out.p);

    if (!std::isfinite(out.ki_star) || !out.Ki.allFinite() || !std::isfinite(out.mu_e))
        throw NumericalError("non-finite quantity in gain certificate");
    return out;
}

/// True iff T2 Ki + Ki^T T2^T is positive definite.
inline bool check_Ki_candidate(const Matrix& t2, const Matrix& ki) {
    if (t2.rows() != ki.rows() || t2.cols() != ki.cols())
        throw ConfigError("T2 and Ki must have the same shape");
    const Matrix s = t2 * ki;
    return min_eigenvalue_symmetric(s + s.transpose()) > 0.0;
}

} // namespace fwdreg
