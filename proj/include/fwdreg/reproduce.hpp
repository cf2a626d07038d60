#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fwdreg/gain_design.hpp"
#include "fwdreg/heat.hpp"
#include "fwdreg/io.hpp"
#include "fwdreg/scenarios.hpp"
#include "fwdreg/simulation.hpp"

namespace fwdreg {

inline constexpr const char* kVersion = "1.0.0";

/// Everything a command produces: console text, named output files and the manifest.
struct RunOutput {
    std::string report;
    std::vector<std::pair<std::string, std::string>> files; // file name, contents
    io::json manifest;
};

inline io::json tolerance_block(int ode_steps = kDefaultOdeSteps) {
    return {
        {"rank_condition_limit", kRankConditionLimit},
        {"iss_tolerance", IssSearchConfig{}.tolerance},
        {"ode_steps", ode_steps},
        {"coefficient_grid_points", kDefaultGridPoints},
        {"significant_digits", io::kSignificantDigits},
    };
}

inline io::json make_manifest(const std::string& command, io::json config, io::json derived,
                              const std::vector<std::string>& outputs) {
    return {
        {"command", command},
        {"version", kVersion},
        {"config", std::move(config)},
        {"tolerances", tolerance_block()},
        {"derived", std::move(derived)},
        {"outputs", outputs},
    };
}

inline io::json certificate_scalars(const GainCertificate& c) {
    return {
        {"mu", io::to_json(c.iss.weight.mu)},
        {"c", io::to_json(c.iss.c)},
        {"P_lower", io::to_json(c.iss.weight.P_lower)},
        {"P_upper", io::to_json(c.iss.weight.P_upper)},
        {"psi_bar", io::to_json(c.psi_bar)},
        {"norm_M", io::to_json(c.norm_M)},
        {"ki_star", io::to_json(c.ki_star)},
        {"ki", io::to_json(c.ki)},
        {"p_max", io::to_json(c.p_max)},
        {"p", io::to_json(c.p)},
        {"mu_e", io::to_json(c.mu_e)},
    };
}

inline std::string certificate_text(const GainCertificate& c) {
    using io::format_number;
    std::ostringstream out;
    out << "T1 =\n" << io::matrix_text(c.rank.t1) << "T2 =\n" << io::matrix_text(c.rank.t2) << "Ki =\n"
        << io::matrix_text(c.Ki);
    out << "mu = " << format_number(c.iss.weight.mu) << "  c = " << format_number(c.iss.c)
        << "  P_lower = " << format_number(c.iss.weight.P_lower) << "  psi_bar = " << format_number(c.psi_bar)
        << "  |M| = " << format_number(c.norm_M) << '\n';
    out << "ki_star = " << format_number(c.ki_star) << "  ki = " << format_number(c.ki)
        << "  p_max = " << format_number(c.p_max) << "  p = " << format_number(c.p)
        << "  mu_e = " << format_number(c.mu_e) << '\n';
    return out.str();
}

struct ReproduceOptions {
    int heat_cells = 2000;
    double heat_T = 5000.0;
    double heat_dt = 1.0;
    double heat_ki = 2.0e-3;
    double T = 60.0;
    int grid = 400;
    double cfl = 0.9;
    std::uint64_t seed = 7;
};

inline RunOutput reproduce_heat(const ReproduceOptions& opt = {}) {
    using io::format_number;
    const HeatProblem hp = make_heat_problem(opt.heat_cells);
    const HeatGain g = heat_gain(hp);
    HeatSimOptions so;
    so.T = opt.heat_T;
    so.dt = opt.heat_dt;
    const Trajectory traj = simulate_heat(hp, g, opt.heat_ki, so);

    std::ostringstream out;
    out << "C A^-1 B (closed form) =\n" << io::matrix_text(exact_CAinvB(hp));
    out << "C A^-1 B (grid, " << hp.cells << " cells) =\n" << io::matrix_text(g.CAinvB);
    out << "Ki =\n" << io::matrix_text(g.Ki);
    out << "|Ki| = " << format_number(g.norm_Ki) << "  |B| = " << format_number(g.norm_B)
        << "  |B|_HS = " << format_number(g.norm_B_hs) << "  |C A^-1| = " << format_number(g.norm_CAinv) << '\n';
    out << "mu = " << format_number(g.mu) << "  ki_star = " << format_number(g.ki_star)
        << "  ki_star (|B Ki| form) = " << format_number(g.ki_star_sharp)
        << "  semigroup bound = " << format_number(g.semigroup_gain) << '\n';
    out << "closed loop ki = " << format_number(opt.heat_ki) << ", T = " << format_number(opt.heat_T)
        << ": y(T) =";
    for (Eigen::Index i = 0; i < 3; ++i)
        out << ' ' << format_number(traj.y.back()(i));
    out << '\n';

    RunOutput r;
    r.report = out.str();
    r.files.emplace_back("heat_trajectory.csv", io::trajectory_csv(traj, io::HeaderStyle::Compact));
    r.manifest = make_manifest(
        "reproduce heat",
        {{"cells", hp.cells}, {"T", opt.heat_T}, {"dt", opt.heat_dt}, {"ki", opt.heat_ki}},
        {{"CAinvB", io::to_json(g.CAinvB)},
         {"CAinvB_exact", io::to_json(exact_CAinvB(hp))},
         {"Ki", io::to_json(g.Ki)},
         {"norm_Ki", io::to_json(g.norm_Ki)},
         {"norm_CAinv", io::to_json(g.norm_CAinv)},
         {"mu", io::to_json(g.mu)},
         {"ki_star", io::to_json(g.ki_star)},
         {"ki_star_sharp", io::to_json(g.ki_star_sharp)},
         {"semigroup_gain", io::to_json(g.semigroup_gain)},
         {"p", io::to_json(traj.p)},
         {"mu_e", io::to_json(traj.mu_e)},
         {"y_final", io::to_json(traj.y.back())}},
        {"heat_trajectory.csv"});
    return r;
}

inline RunOutput reproduce_transport(const ReproduceOptions& opt = {}) {
    using io::format_number;
    const HyperbolicSystem sys = transport_system();
    const GainCertificate cert = design(sys);

    std::ostringstream sweep;
    sweep << "mu,ki_star,sqrt_mu_exp_minus_mu\n";
    double best_mu = 0.0, best_gain = 0.0;
    for (double mu : IssSearchConfig::defaults().mu_grid) {
        DesignOptions d;
        d.iss = IssSearchConfig::at_mu(mu);
        const double k = design(sys, d).ki_star;
        sweep << format_number(mu) << ',' << format_number(k) << ',' << format_number(std::sqrt(mu * std::exp(-mu)))
              << '\n';
        if (k > best_gain) {
            best_gain = k;
            best_mu = mu;
        }
    }

    DisturbanceScenario sc = DisturbanceScenario::zero(1, 1);
    sc.y_ref(0) = 1.0;
    SimOptions so;
    so.T = opt.T;
    so.cells = 200;
    so.cfl = opt.cfl;
    const Trajectory traj = simulate(sys, cert, sc, so);

    std::ostringstream out;
    out << certificate_text(cert);
    out << "ki_star(mu) maximized at mu = " << format_number(best_mu) << ": " << format_number(best_gain) << '\n';
    out << "closed loop y(T) = " << format_number(traj.y.back()(0)) << '\n';

    RunOutput r;
    r.report = out.str();
    r.files.emplace_back("transport_gain_sweep.csv", sweep.str());
    r.files.emplace_back("transport_trajectory.csv", io::trajectory_csv(traj));
    io::json derived = certificate_scalars(cert);
    derived["T1"] = io::to_json(cert.rank.t1);
    derived["T2"] = io::to_json(cert.rank.t2);
    derived["best_mu"] = io::to_json(best_mu);
    derived["best_ki_star"] = io::to_json(best_gain);
    derived["y_final"] = io::to_json(traj.y.back());
    r.manifest = make_manifest("reproduce transport",
                               {{"T", opt.T}, {"grid", 200}, {"cfl", opt.cfl}, {"y_ref", 1.0}}, derived,
                               {"transport_gain_sweep.csv", "transport_trajectory.csv"});
    return r;
}

inline RunOutput reproduce_saint_venant(const ReproduceOptions& opt = {}) {
    using io::format_number;
    const SaintVenantParams prm;
    const HyperbolicSystem sys = saint_venant_system(prm);
    const GainCertificate cert = design(sys);

    DisturbanceScenario sc = DisturbanceScenario::zero(2, 2);
    sc.w_b << 0.1, -0.05;
    sc.w_y << 0.02, 0.0;
    sc.y_ref << 1.0, 0.5;
    SimOptions so;
    so.T = opt.T;
    so.cells = opt.grid;
    so.cfl = opt.cfl;
    so.seed = opt.seed;
    so.amplitude = 0.5;
    const Trajectory traj = simulate(sys, cert, sc, so);

    std::ostringstream out;
    out << "c = d = " << format_number(prm.c) << ", k0 = " << format_number(prm.k0) << ", k1 = "
        << format_number(prm.k1) << ", b0 = b1 = " << format_number(prm.b0) << '\n';
    out << certificate_text(cert);
    out << "T2 Ki + Ki^T T2^T > 0: " << (check_Ki_candidate(cert.rank.t2, cert.Ki) ? "yes" : "no") << '\n';
    out << "closed loop y(T) = " << format_number(traj.y.back()(0)) << ' ' << format_number(traj.y.back()(1))
        << '\n';

    RunOutput r;
    r.report = out.str();
    r.files.emplace_back("saintvenant_trajectory.csv", io::trajectory_csv(traj));
    io::json derived = certificate_scalars(cert);
    derived["T1"] = io::to_json(cert.rank.t1);
    derived["T2"] = io::to_json(cert.rank.t2);
    derived["Ki"] = io::to_json(cert.Ki);
    derived["y_final"] = io::to_json(traj.y.back());
    r.manifest = make_manifest("reproduce saintvenant",
                               {{"T", opt.T},
                                {"grid", opt.grid},
                                {"cfl", opt.cfl},
                                {"seed", opt.seed},
                                {"k0", prm.k0},
                                {"k1", prm.k1},
                                {"w_b", io::to_json(sc.w_b)},
                                {"w_y", io::to_json(sc.w_y)},
                                {"y_ref", io::to_json(sc.y_ref)}},
                               derived, {"saintvenant_trajectory.csv"});
    return r;
}

} // namespace fwdreg
