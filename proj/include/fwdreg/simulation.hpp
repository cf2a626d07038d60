#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <vector>

#include "fwdreg/errors.hpp"
#include "fwdreg/fundamental.hpp"
#include "fwdreg/gain_design.hpp"
#include "fwdreg/linalg.hpp"
#include "fwdreg/model.hpp"
#include "fwdreg/trajectory.hpp"

namespace fwdreg {

/// Uniform grid s_j = j / cells, j = 0..cells.
inline Vector spatial_nodes(int cells) {
    return Vector::LinSpaced(cells + 1, 0.0, 1.0);
}

/// [phi+(0); phi-(1)] from the two boundary traces.
inline Vector outgoing_trace(const HyperbolicSystem& sys, const Vector& at0, const Vector& at1) {
    Vector out(sys.n);
    out.head(sys.ell) = at0.head(sys.ell);
    out.tail(sys.n - sys.ell) = at1.tail(sys.n - sys.ell);
    return out;
}

/// [phi+(1); phi-(0)] from the two boundary traces.
inline Vector incoming_trace(const HyperbolicSystem& sys, const Vector& at0, const Vector& at1) {
    Vector in(sys.n);
    in.head(sys.ell) = at1.head(sys.ell);
    in.tail(sys.n - sys.ell) = at0.tail(sys.n - sys.ell);
    return in;
}

struct Equilibrium {
    Vector phi_at_zero;
    Matrix phi_inf; // n x nodes, Phi(s_j) phi_inf(0)
    Vector z_inf;
    Vector u_inf;
    double ki = 0.0;
};

/// Closed-loop steady state for u = ki Ki z under constant w_b, w_y and y_ref.
inline Equilibrium compute_equilibrium(const HyperbolicSystem& sys, const GainCertificate& cert,
                                       const DisturbanceScenario& sc, int cells = 200,
                                       int steps = kDefaultOdeSteps) {
    check_scenario(sc, sys.n, sys.m);
    if (!(cert.ki > 0.0))
        throw ConfigError("equilibrium needs a positive integral gain");
    const FundamentalSolution phi = integrate_phi(sys, steps);
    const BlockSplit blocks = split_blocks(sys, phi.at_one);
    const Matrix t1 = compute_T1(sys, blocks);
    const Matrix inner = blocks.phi_minus - sys.K * blocks.phi_plus;
    const Eigen::PartialPivLU<Matrix> inner_lu(inner);
    const Matrix out_map = sys.L1 * blocks.phi_minus + sys.L2 * blocks.phi_plus;

    Equilibrium eq;
    eq.ki = cert.ki;
    eq.u_inf = t1.partialPivLu().solve(Vector(sc.y_ref - sc.w_y - out_map * inner_lu.solve(sc.w_b)));
    eq.z_inf = cert.Ki.partialPivLu().solve(eq.u_inf) / cert.ki;
    eq.phi_at_zero = inner_lu.solve(Vector(sys.B * eq.u_inf + sc.w_b));
    const Vector nodes = spatial_nodes(cells);
    eq.phi_inf.resize(sys.n, nodes.size());
    for (Eigen::Index j = 0; j < nodes.size(); ++j)
        eq.phi_inf.col(j) = phi.at(nodes(j)) * eq.phi_at_zero;
    return eq;
}

struct EquilibriumResiduals {
    double boundary = 0.0; // |out - K in - B u_inf - w_b|
    double output = 0.0;   // |L1 out + L2 in + w_y - y_ref|
};

inline EquilibriumResiduals equilibrium_residuals(const HyperbolicSystem& sys, const Equilibrium& eq,
                                                  const DisturbanceScenario& sc, const Matrix& phi_at_one) {
    const Vector at0 = eq.phi_at_zero;
    const Vector at1 = phi_at_one * eq.phi_at_zero;
    const Vector out = outgoing_trace(sys, at0, at1);
    const Vector in = incoming_trace(sys, at0, at1);
    EquilibriumResiduals r;
    r.boundary = (out - sys.K * in - sys.B * eq.u_inf - sc.w_b).norm();
    r.output = (sys.L1 * out + sys.L2 * in + sc.w_y - sc.y_ref).norm();
    return r;
}

/// int_0^1 phi^T P phi ds by the trapezoid rule on the columns of phi.
inline double evaluate_V(const LyapunovWeight& weight, const Matrix& phi) {
    const Eigen::Index nodes = phi.cols();
    if (nodes < 2 || phi.rows() != weight.n())
        throw ConfigError("grid field does not match the Lyapunov weight");
    const Vector w = trapezoid_weights(nodes, 1.0 / (nodes - 1));
    double v = 0.0;
    for (Eigen::Index j = 0; j < nodes; ++j) {
        const Vector pj = weight.diagonal(static_cast<double>(j) / (nodes - 1));
        v += w(j) * (pj.array() * phi.col(j).array().square()).sum();
    }
    return v;
}

/// The functional phi -> int_0^1 M Psi(s) phi(s) ds as per-node quadrature blocks.
struct ForwardingOperator {
    std::vector<Matrix> blocks; // m x n each, trapezoid weight included

    Vector apply(const Matrix& phi) const {
        if (static_cast<std::size_t>(phi.cols()) != blocks.size())
            throw ConfigError("grid field does not match the forwarding operator");
        Vector out = Vector::Zero(blocks.front().rows());
        for (std::size_t j = 0; j < blocks.size(); ++j)
            out += blocks[j] * phi.col(static_cast<Eigen::Index>(j));
        return out;
    }
};

inline ForwardingOperator make_forwarding_operator(const Matrix& M, const FundamentalSolution& psi, int cells) {
    ForwardingOperator op;
    const Vector w = trapezoid_weights(cells + 1, 1.0 / cells);
    op.blocks.reserve(cells + 1);
    for (int j = 0; j <= cells; ++j)
        op.blocks.push_back(w(j) * M * psi.at(static_cast<double>(j) / cells));
    return op;
}

/// V(phi) + p |z - M phi|^2.
inline double evaluate_Ve(const LyapunovWeight& weight, const ForwardingOperator& op, double p, const Matrix& phi,
                          const Vector& z) {
    return evaluate_V(weight, phi) + p * (z - op.apply(phi)).squaredNorm();
}

struct SimOptions {
    double T = 60.0;
    int cells = 200;
    double cfl = 0.9;
    int record_every = 10;
    bool keep_states = false;
    std::optional<Matrix> phi0;         // n x (cells + 1); zero when absent
    std::optional<Vector> z0;           // zero when absent
    std::optional<std::uint64_t> seed;  // random phi0 in [-amplitude, amplitude]
    double amplitude = 1.0;
    std::optional<Vector> open_loop_input; // constant u instead of ki Ki z
    int ode_steps = kDefaultOdeSteps;
};

/// Uniform double in [-1, 1) from the top 53 bits, independent of the standard library.
inline double symmetric_unit(std::mt19937_64& rng) {
    return 2.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53 - 1.0;
}

inline Matrix random_field(int rows, int cols, std::uint64_t seed, double amplitude) {
    std::mt19937_64 rng(seed);
    Matrix out(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i)
            out(i, j) = amplitude * symmetric_unit(rng);
    return out;
}

/// Closed loop by first-order upwind in space and explicit Euler in time.
///
/// The incoming boundary values are assigned from the previous-level traces,
/// u = ki Ki z, and z <- z + dt (y - y_ref). V and Ve are evaluated on the
/// deviation from the closed-loop equilibrium (on the raw state in open loop).
inline Trajectory simulate(const HyperbolicSystem& sys, const GainCertificate& cert, const DisturbanceScenario& sc,
                           const SimOptions& opt = {}) {
    if (const auto v = validate_hyperbolic(sys); !v.empty())
        throw ConfigError("invalid hyperbolic system: " + v.front().invariant + ": " + v.front().detail);
    check_scenario(sc, sys.n, sys.m);
    if (!(opt.cfl > 0.0 && opt.cfl <= 1.0))
        throw ConfigError("CFL number must lie in (0, 1]");
    if (!(opt.T > 0.0) || opt.cells < 2 || opt.record_every < 1)
        throw ConfigError("simulation needs T > 0, at least 2 cells and record_every >= 1");

    const int cells = opt.cells;
    const int nodes = cells + 1;
    const int n = sys.n;
    const double h = 1.0 / cells;
    const Vector grid = spatial_nodes(cells);

    Matrix lam(n, nodes);
    std::vector<Matrix> l1(nodes);
    for (int j = 0; j < nodes; ++j) {
        const CoefficientSample c = eval_coefficients(sys, grid(j));
        lam.col(j) = c.lambda0.diagonal();
        l1[j] = c.lambda1;
    }
    const double max_speed = lam.cwiseAbs().maxCoeff();
    const double dt_max = opt.cfl * h / max_speed;
    const long steps = static_cast<long>(std::ceil(opt.T / dt_max - 1e-12));
    const double dt = opt.T / steps;

    Trajectory traj;
    traj.scheme = "upwind-explicit";
    traj.dt = dt;
    traj.steps = steps;
    traj.cfl = dt * max_speed / h;
    traj.ki = cert.ki;
    traj.p = cert.p;
    traj.mu_e = cert.mu_e;
    traj.gain_warning = !cert.within_bound;

    const bool open_loop = opt.open_loop_input.has_value();
    if (open_loop && opt.open_loop_input->size() != sys.m)
        throw ConfigError("open-loop input has the wrong size");

    Matrix phi_ref = Matrix::Zero(n, nodes);
    Vector z_ref = Vector::Zero(sys.m);
    if (!open_loop) {
        const Equilibrium eq = compute_equilibrium(sys, cert, sc, cells, opt.ode_steps);
        phi_ref = eq.phi_inf;
        z_ref = eq.z_inf;
    }
    const FundamentalSolution psi = integrate_psi(sys, opt.ode_steps);
    const ForwardingOperator fop = make_forwarding_operator(cert.rank.m_matrix, psi, cells);
    const LyapunovWeight& weight = cert.iss.weight;
    const Vector trap = trapezoid_weights(nodes, h);

    Matrix phi = Matrix::Zero(n, nodes);
    if (opt.phi0) {
        if (opt.phi0->rows() != n || opt.phi0->cols() != nodes)
            throw ConfigError("initial state must be n x (cells + 1)");
        phi = *opt.phi0;
    } else if (opt.seed) {
        phi = random_field(n, nodes, *opt.seed, opt.amplitude);
    }
    Vector z = opt.z0.value_or(Vector::Zero(sys.m));
    if (z.size() != sys.m)
        throw ConfigError("initial integrator state has the wrong size");

    auto output = [&](const Matrix& f) -> Vector {
        const Vector at0 = f.col(0);
        const Vector at1 = f.col(cells);
        return sys.L1 * outgoing_trace(sys, at0, at1) + sys.L2 * incoming_trace(sys, at0, at1) + sc.w_y;
    };
    auto record = [&](double t) {
        const Matrix dphi = phi - phi_ref;
        const Vector dz = z - z_ref;
        traj.times.push_back(t);
        if (opt.keep_states)
            traj.states.push_back(phi);
        traj.z.push_back(z);
        traj.y.push_back(output(phi));
        double sq = 0.0;
        for (int j = 0; j < nodes; ++j)
            sq += trap(j) * phi.col(j).squaredNorm();
        traj.norm_phi.push_back(std::sqrt(sq));
        traj.V.push_back(evaluate_V(weight, dphi));
        traj.Ve.push_back(evaluate_Ve(weight, fop, cert.p, dphi, dz));
    };

    record(0.0);
    Matrix next(n, nodes);
    const double r = dt / h;
    for (long k = 1; k <= steps; ++k) {
        const Vector at0 = phi.col(0);
        const Vector at1 = phi.col(cells);
        const Vector y = output(phi);
        const Vector u = open_loop ? *opt.open_loop_input : Vector(cert.ki * cert.Ki * z);
        const Vector boundary = sys.K * incoming_trace(sys, at0, at1) + sys.B * u + sc.w_b;

        for (int j = 0; j < nodes; ++j) {
            const Vector coupling = l1[j] * phi.col(j);
            for (int i = 0; i < n; ++i) {
                const double l = lam(i, j);
                double diff;
                if (l > 0.0)
                    diff = j > 0 ? phi(i, j) - phi(i, j - 1) : 0.0;
                else
                    diff = j < cells ? phi(i, j + 1) - phi(i, j) : 0.0;
                next(i, j) = phi(i, j) - r * l * diff - dt * coupling(i);
            }
        }
        for (int i = 0; i < sys.ell; ++i)
            next(i, 0) = boundary(i);
        for (int i = sys.ell; i < n; ++i)
            next(i, cells) = boundary(i);

        phi.swap(next);
        if (!open_loop)
            z += dt * (y - sc.y_ref);
        if (!phi.allFinite() || !z.allFinite())
            throw NumericalError("simulation produced non-finite values");
        if (k % opt.record_every == 0 || k == steps)
            record(k * dt);
    }
    traj.final_state = phi;
    return traj;
}

} // namespace fwdreg
