// Heated bar with three actuators and three sensors: gain design and a
// closed-loop run with a constant heat leak.
#include <cstdio>
#include <cstdlib>
#include <iostream>

#include "fwdreg/heat.hpp"

int main(int argc, char** argv) {
    const int cells = argc > 1 ? std::atoi(argv[1]) : 2000;
    const auto hp = fwdreg::make_heat_problem(cells);
    const auto gain = fwdreg::heat_gain(hp);
    std::cout << "C A^-1 B =\n" << gain.CAinvB << "\n\nKi =\n" << gain.Ki << "\n\n";
    std::printf("|C A^-1| = %.6f   ki_star = %.6e   (|B Ki| form %.6e)\n", gain.norm_CAinv, gain.ki_star,
                gain.ki_star_sharp);

    fwdreg::HeatSimOptions opt;
    opt.T = 4000.0;
    opt.w = fwdreg::Vector::Constant(hp.interior(), -0.01);
    const auto traj = fwdreg::simulate_heat(hp, gain, 0.9 * gain.ki_star, opt);
    for (std::size_t k = 0; k < traj.frames(); k += traj.frames() / 8)
        std::printf("t = %7.1f   y = (%.4f, %.4f, %.4f)   Ve = %.4e\n", traj.times[k], traj.y[k](0), traj.y[k](1),
                    traj.y[k](2), traj.Ve[k]);
}
