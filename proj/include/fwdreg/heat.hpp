#pragma once

#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <vector>

#include "fwdreg/errors.hpp"
#include "fwdreg/forwarding.hpp"
#include "fwdreg/linalg.hpp"
#include "fwdreg/trajectory.hpp"

namespace fwdreg {

/// Bar of length 10 heated on three intervals and measured at three points,
/// phi_t = phi_xx + B u + w with Dirichlet ends, discretized by centered
/// differences on `cells` uniform intervals (interior nodes only).
///
/// Discrete norms carry the grid weight h, so |phi|^2 = h sum phi_j^2
/// approximates the L2(0, 10) norm.
struct HeatProblem {
    double L = 10.0;
    int cells = 0;
    double h = 0.0;
    std::array<std::array<double, 2>, 3> actuators{{{1.5, 2.5}, {4.5, 5.5}, {6.5, 7.5}}};
    std::array<double, 3> sensors{3.0, 6.0, 8.0};
    std::array<int, 3> sensor_index{}; // into the interior node vector
    Vector y_ref = Vector::Zero(3);
    Tridiagonal A; // interior Dirichlet Laplacian
    Matrix B;      // interior x 3, cell-fraction indicator samples
    Matrix C;      // 3 x interior, node selection

    int interior() const { return cells - 1; }
    double node(int j) const { return (j + 1) * h; }
};

/// Fraction of the control cell [x - h/2, x + h/2] covered by [a, b].
inline double cell_fraction(double x, double h, double a, double b) {
    const double lo = std::max(x - 0.5 * h, a);
    const double hi = std::min(x + 0.5 * h, b);
    return std::max(0.0, hi - lo) / h;
}

inline HeatProblem make_heat_problem(int cells = 2000) {
    if (cells < 10 || cells % 10 != 0)
        throw ConfigError("heat grid needs a positive multiple of 10 cells so sensors sit on nodes");
    HeatProblem hp;
    hp.cells = cells;
    hp.h = hp.L / cells;
    hp.y_ref << 1.0, 3.0, 2.0;
    const int n = hp.interior();
    const double inv_h2 = 1.0 / (hp.h * hp.h);
    hp.A.diag = Vector::Constant(n, -2.0 * inv_h2);
    hp.A.lower = Vector::Constant(n - 1, inv_h2);
    hp.A.upper = Vector::Constant(n - 1, inv_h2);

    hp.B = Matrix::Zero(n, 3);
    for (int k = 0; k < 3; ++k)
        for (int j = 0; j < n; ++j)
            hp.B(j, k) = cell_fraction(hp.node(j), hp.h, hp.actuators[k][0], hp.actuators[k][1]);

    hp.C = Matrix::Zero(3, n);
    for (int k = 0; k < 3; ++k) {
        const int idx = static_cast<int>(std::lround(hp.sensors[k] / hp.h)) - 1;
        hp.sensor_index[k] = idx;
        hp.C(k, idx) = 1.0;
    }
    return hp;
}

/// Dirichlet Green's function of d^2/dx^2 on (0, L).
inline double heat_green(double x, double xi, double L = 10.0) {
    return x <= xi ? -x * (L - xi) / L : -xi * (L - x) / L;
}

/// C A^{-1} B of the continuous bar, by exact integration of the Green's function.
inline Matrix exact_CAinvB(const HeatProblem& hp = HeatProblem{}) {
    const double L = hp.L;
    Matrix out(3, 3);
    for (int k = 0; k < 3; ++k) {
        const double x = hp.sensors[k];
        for (int j = 0; j < 3; ++j) {
            const double a = hp.actuators[j][0];
            const double b = hp.actuators[j][1];
            double v = 0.0;
            // xi < x: -xi (L - x) / L
            const double left_hi = std::min(b, x);
            if (left_hi > a)
                v += -(L - x) / L * 0.5 * (left_hi * left_hi - a * a);
            // xi >= x: -x (L - xi) / L
            const double right_lo = std::max(a, x);
            if (b > right_lo)
                v += -x / L * (L * (b - right_lo) - 0.5 * (b * b - right_lo * right_lo));
            out(k, j) = v;
        }
    }
    return out;
}

/// C A^{-1} phi for a grid function on the interior nodes, by trapezoid
/// quadrature of -(L - x)/L int_0^x xi phi - x/L int_x^L (L - xi) phi.
inline Vector cainv_apply(const HeatProblem& hp, const Vector& phi) {
    if (phi.size() != hp.interior())
        throw ConfigError("grid function has the wrong size");
    Vector out(3);
    for (int k = 0; k < 3; ++k) {
        const double x = hp.sensors[k];
        double left = 0.0;  // int_0^x xi phi
        double right = 0.0; // int_x^L (L - xi) phi
        // Boundary nodes carry phi = 0, so interior nodes all get full weight
        // except the sensor node, which ends one integral and starts the other.
        for (int j = 0; j < hp.interior(); ++j) {
            const double xi = hp.node(j);
            const double w = j == hp.sensor_index[k] ? 0.5 * hp.h : hp.h;
            if (j <= hp.sensor_index[k])
                left += w * xi * phi(j);
            if (j >= hp.sensor_index[k])
                right += w * (hp.L - xi) * phi(j);
        }
        out(k) = -(hp.L - x) / hp.L * left - x / hp.L * right;
    }
    return out;
}

/// Rows of C A^{-1} on the grid (3 x interior), from A x = C^T.
inline Matrix cainv_rows(const HeatProblem& hp) { return hp.A.solve(Matrix(hp.C.transpose())).transpose(); }

inline Matrix discrete_CAinvB(const HeatProblem& hp) { return cainv_rows(hp) * hp.B; }

/// Induced norm of C A^{-1} from the weighted grid space to R^3.
inline double cainv_norm(const HeatProblem& hp) {
    const Matrix r = cainv_rows(hp);
    return std::sqrt(max_eigenvalue_symmetric(r * r.transpose()) / hp.h);
}

/// Induced norm of a grid-valued operator R^3 -> weighted grid space.
inline double weighted_input_norm(const HeatProblem& hp, const Matrix& op) {
    return std::sqrt(hp.h) * spectral_norm(op);
}

struct HeatGain {
    Matrix CAinvB;
    Matrix Ki;
    double norm_Ki = 0.0;
    double mu = 0.0;         // pi^2 / 50, rate of A^T + A <= -mu
    double norm_B = 0.0;     // induced norm
    double norm_B_hs = 0.0;  // Hilbert-Schmidt norm, bounded by sqrt(3)
    double norm_CAinv = 0.0;
    double norm_BKi = 0.0;
    double ki_star = 0.0;       // mu / (2 |B|_HS |Ki| |C A^-1|)
    double ki_star_sharp = 0.0; // mu / (2 |B Ki| |C A^-1|)
    double semigroup_gain = 0.0; // nu / (|C A^-1| k^2 |B Ki|) with k = 1, nu = mu / 2
};

inline HeatGain heat_gain(const HeatProblem& hp) {
    HeatGain g;
    g.CAinvB = discrete_CAinvB(hp);
    const double cond = condition_number(g.CAinvB);
    if (!(cond < kRankConditionLimit))
        throw AssumptionError("rank_condition", "C A^-1 B is singular", cond);
    g.Ki = g.CAinvB.inverse();
    g.norm_Ki = spectral_norm(g.Ki);
    g.mu = std::numbers::pi * std::numbers::pi / 50.0;
    g.norm_B = weighted_input_norm(hp, hp.B);
    g.norm_B_hs = std::sqrt(hp.h) * hp.B.norm();
    g.norm_CAinv = cainv_norm(hp);
    g.norm_BKi = weighted_input_norm(hp, hp.B * g.Ki);
    g.ki_star = g.mu / (2.0 * g.norm_B_hs * g.norm_Ki * g.norm_CAinv);
    g.ki_star_sharp = g.mu / (2.0 * g.norm_BKi * g.norm_CAinv);
    g.semigroup_gain = semigroup_gain_bound(g.norm_CAinv, g.norm_BKi, 1.0, 0.5 * g.mu);
    return g;
}

struct HeatEquilibrium {
    Vector phi;
    Vector z;
    Vector y;
};

/// Closed-loop steady state for u = ki Ki z and constant distributed w.
/// For ki = 0 only the open-loop state -A^{-1} w is defined; z is left at zero.
inline HeatEquilibrium heat_equilibrium(const HeatProblem& hp, const Matrix& Ki, double ki, const Vector& w,
                                        const Vector& y_ref) {
    HeatEquilibrium eq;
    const Vector open_loop = -hp.A.solve(w);
    if (ki == 0.0) {
        eq.phi = open_loop;
        eq.z = Vector::Zero(3);
    } else {
        eq.z = -(y_ref - hp.C * open_loop) / ki;
        eq.phi = -hp.A.solve(Vector(ki * hp.B * Ki * eq.z + w));
    }
    eq.y = hp.C * eq.phi;
    return eq;
}

struct HeatSimOptions {
    double T = 5000.0;
    double dt = 1.0;
    int record_every = 10;
    std::optional<Vector> w;     // distributed disturbance on the interior nodes
    std::optional<Vector> y_ref; // defaults to the problem reference
};

/// Closed loop u = ki Ki z, z' = C phi - y_ref, stepped by implicit Euler in
/// (phi, z) jointly. V = |phi - phi_inf|^2 and Ve adds p |z~ - C A^-1 phi~|^2 with
/// p from the forwarding tuning at the discrete decay rate.
inline Trajectory simulate_heat(const HeatProblem& hp, const HeatGain& gain, double ki, const HeatSimOptions& opt = {}) {
    const int n = hp.interior();
    if (!(opt.dt > 0.0) || !(opt.T > 0.0) || opt.record_every < 1)
        throw ConfigError("heat simulation needs T > 0, dt > 0 and record_every >= 1");
    const Vector w = opt.w.value_or(Vector::Zero(n));
    const Vector y_ref = opt.y_ref.value_or(hp.y_ref);
    if (w.size() != n || y_ref.size() != 3)
        throw ConfigError("heat disturbance or reference has the wrong size");

    Trajectory traj;
    traj.scheme = "implicit-euler";
    traj.ki = ki;
    traj.gain_warning = !(ki > 0.0 && ki < gain.ki_star);

    const Matrix rows = cainv_rows(hp);
    const double norm_M = gain.norm_CAinv;
    // Discrete dissipation rate of A in the weighted norm: 2 lambda_min(-A).
    const double lam1 = 4.0 / (hp.h * hp.h) * std::pow(std::sin(std::numbers::pi / (2.0 * hp.cells)), 2);
    const ForwardingGains fg = forwarding_gains(2.0 * lam1, norm_M, gain.norm_BKi * gain.norm_BKi, std::max(ki, 0.0));
    traj.p = fg.p;
    traj.mu_e = fg.mu_e;

    const HeatEquilibrium eq = heat_equilibrium(hp, gain.Ki, ki, w, y_ref);

    const double dt = opt.dt;
    const auto steps = static_cast<long>(std::llround(opt.T / dt));
    Tridiagonal implicit = hp.A;
    implicit.diag = Vector::Ones(n) - dt * hp.A.diag;
    implicit.lower *= -dt;
    implicit.upper *= -dt;
    const Matrix bk = hp.B * gain.Ki;
    const Matrix g = implicit.solve(bk);
    const Matrix schur = Matrix::Identity(3, 3) - dt * dt * ki * (hp.C * g);
    const Eigen::PartialPivLU<Matrix> schur_lu(schur);

    Vector phi = Vector::Zero(n);
    Vector z = Vector::Zero(3);
    auto record = [&](double t) {
        const Vector dphi = phi - eq.phi;
        const Vector dz = z - eq.z;
        const double v = hp.h * dphi.squaredNorm();
        const Vector gap = dz - rows * dphi;
        traj.times.push_back(t);
        traj.y.push_back(hp.C * phi);
        traj.z.push_back(z);
        traj.norm_phi.push_back(std::sqrt(hp.h) * phi.norm());
        traj.V.push_back(v);
        traj.Ve.push_back(v + fg.p * gap.squaredNorm());
    };
    record(0.0);
    for (long k = 1; k <= steps; ++k) {
        const Vector r = implicit.solve(Vector(phi + dt * w));
        const Vector z_next = schur_lu.solve(Vector(z - dt * y_ref + dt * (hp.C * r)));
        phi = r + dt * ki * g * z_next;
        z = z_next;
        if (!phi.allFinite() || !z.allFinite())
            throw NumericalError("heat simulation produced non-finite values");
        if (k % opt.record_every == 0 || k == steps)
            record(k * dt);
    }
    traj.final_state = Matrix(phi);
    return traj;
}

} // namespace fwdreg
