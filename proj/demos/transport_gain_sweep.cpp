// Certified integral gain of the pure transport loop as a function of the
// Lyapunov decay rate mu.
#include <cmath>
#include <cstdio>

#include "fwdreg/gain_design.hpp"
#include "fwdreg/scenarios.hpp"

int main() {
    const auto sys = fwdreg::transport_system();
    std::printf("%6s  %12s  %12s\n", "mu", "ki_star", "closed form");
    for (double mu : {0.1, 0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0}) {
        fwdreg::DesignOptions opt;
        opt.iss = fwdreg::IssSearchConfig::at_mu(mu);
        const auto cert = fwdreg::design(sys, opt);
        std::printf("%6.2f  %12.9f  %12.9f\n", mu, cert.ki_star, std::sqrt(mu * std::exp(-mu)));
    }
}
