// Level and discharge regulation of a linearized channel with boundary
// disturbances, starting from a random state.
#include <cstdio>
#include <iostream>

#include "fwdreg/scenarios.hpp"
#include "fwdreg/simulation.hpp"

int main() {
    fwdreg::SaintVenantParams prm;
    prm.k0 = 0.6;
    prm.k1 = 0.4;
    const auto sys = fwdreg::saint_venant_system(prm);
    const auto cert = fwdreg::design(sys);
    std::printf("mu = %.2f  c = %.4f  ki_star = %.5f  ki = %.5f  mu_e = %.3e\n", cert.iss.weight.mu, cert.iss.c,
                cert.ki_star, cert.ki, cert.mu_e);
    std::cout << "Ki =\n" << cert.Ki << "\n";

    auto sc = fwdreg::DisturbanceScenario::zero(2, 2);
    sc.w_b << 0.2, -0.1;
    sc.y_ref << 1.0, 0.25;
    fwdreg::SimOptions opt;
    opt.T = 80.0;
    opt.cells = 400;
    opt.seed = 11;
    const auto traj = fwdreg::simulate(sys, cert, sc, opt);
    for (std::size_t k = 0; k < traj.frames(); k += traj.frames() / 10)
        std::printf("t = %6.2f   y = (%.5f, %.5f)   Ve = %.4e\n", traj.times[k], traj.y[k](0), traj.y[k](1),
                    traj.Ve[k]);
}
