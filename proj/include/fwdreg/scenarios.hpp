#pragma once

#include "fwdreg/model.hpp"

namespace fwdreg {

/// phi_t + phi_s = 0, u enters at s = 0, y = phi(1).
inline HyperbolicSystem transport_system(int grid_points = kDefaultGridPoints) {
    HyperbolicSystem sys;
    sys.n = 1;
    sys.ell = 1;
    sys.m = 1;
    sys.lambda0 = CoefficientField::constant(Vector::Constant(1, 1.0), grid_points);
    sys.lambda1 = CoefficientField::constant(Vector::Zero(1), grid_points);
    sys.K = Matrix::Zero(1, 1);
    sys.B = Matrix::Ones(1, 1);
    sys.L1 = Matrix::Zero(1, 1);
    sys.L2 = Matrix::Ones(1, 1);
    return sys;
}

/// Transport with a constant reaction term: phi_t + speed phi_s + damping phi = 0.
inline HyperbolicSystem damped_transport_system(double speed, double damping, int grid_points = kDefaultGridPoints) {
    HyperbolicSystem sys = transport_system(grid_points);
    sys.ell = speed > 0.0 ? 1 : 0;
    sys.lambda0 = CoefficientField::constant(Vector::Constant(1, speed), grid_points);
    sys.lambda1 = CoefficientField::constant(Vector::Constant(1, damping), grid_points);
    return sys;
}

struct SaintVenantParams {
    double c = 1.0;
    double d = 1.0;
    double k0 = 0.5;
    double k1 = 0.5;
    double b0 = 1.0;
    double b1 = 1.0;
};

/// Linearized shallow-water channel in Riemann coordinates with constant
/// speeds c and -d, reflective boundary coupling and the water-level and
/// discharge outputs.
inline HyperbolicSystem saint_venant_system(const SaintVenantParams& prm = {},
                                            int grid_points = kDefaultGridPoints) {
    HyperbolicSystem sys;
    sys.n = 2;
    sys.ell = 1;
    sys.m = 2;
    Vector speeds(2);
    speeds << prm.c, -prm.d;
    sys.lambda0 = CoefficientField::constant(speeds, grid_points);
    sys.lambda1 = CoefficientField::constant(Vector::Zero(4), grid_points);
    sys.K.resize(2, 2);
    sys.K << 0.0, prm.k0, prm.k1, 0.0;
    sys.B = Matrix::Zero(2, 2);
    sys.B(0, 0) = prm.b0;
    sys.B(1, 1) = prm.b1;
    const double s = prm.c + prm.d;
    sys.L1.resize(2, 2);
    sys.L1 << prm.c / s, 0.0, 0.0, -1.0 / s;
    sys.L2.resize(2, 2);
    sys.L2 << 0.0, prm.d / s, 1.0 / s, 0.0;
    return sys;
}

/// 2 x 2 system with space-varying speeds and a weak lower-triangular coupling.
inline HyperbolicSystem varying_coefficient_system(int grid_points = kDefaultGridPoints) {
    HyperbolicSystem sys;
    sys.n = 2;
    sys.ell = 1;
    sys.m = 2;
    sys.lambda0 = CoefficientField::from_function(
        [](double s) {
            Vector v(2);
            v << 1.0 + 0.5 * s, -(1.2 - 0.4 * s);
            return v;
        },
        2, grid_points);
    sys.lambda1 = CoefficientField::from_function(
        [](double s) {
            Vector v(4);
            v << 0.2, 0.0, 0.1 * (1.0 + s), 0.3;
            return v;
        },
        4, grid_points);
    sys.K.resize(2, 2);
    sys.K << 0.0, 0.3, 0.2, 0.0;
    sys.B = Matrix::Identity(2, 2);
    sys.L1 = Matrix::Zero(2, 2);
    sys.L2 = Matrix::Identity(2, 2);
    return sys;
}

} // namespace fwdreg
