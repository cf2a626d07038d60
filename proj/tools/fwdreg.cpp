// Command-line front end: design, forward, simulate, verify, reproduce.
//
// Exit status: 0 success, 1 invalid configuration or I/O, 2 an assumption or
// certification check failed, 3 a numerical failure.

#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "fwdreg/forwarding.hpp"
#include "fwdreg/gain_design.hpp"
#include "fwdreg/io.hpp"
#include "fwdreg/reproduce.hpp"
#include "fwdreg/simulation.hpp"

namespace fs = std::filesystem;
using namespace fwdreg;
using io::format_number;
using io::json;

namespace {

enum ExitCode { kOk = 0, kConfig = 1, kAssumption = 2, kNumerical = 3 };

// Output files are collected first and written only once the command has succeeded.
struct Outputs {
    std::vector<std::pair<fs::path, std::string>> files;
    fs::path manifest_path;
    json manifest;
    std::string report;
    int status = kOk;
};

void write_outputs(const Outputs& out) {
    for (const auto& [path, text] : out.files)
        io::write_text_file(path, text);
    io::write_json_file(out.manifest_path, out.manifest);
}

fs::path manifest_beside(const fs::path& file) {
    return file.has_parent_path() ? file.parent_path() / "run_manifest.json" : fs::path("run_manifest.json");
}

// --- design ----------------------------------------------------------------

struct DesignArgs {
    std::string system;
    std::string out;
    std::string select = "max-gain";
    std::optional<double> ki;
    int steps = kDefaultOdeSteps;
};

Outputs run_design(const DesignArgs& a) {
    const HyperbolicSystem sys = io::load_system(a.system);
    DesignOptions opt;
    opt.selection = a.select == "first-feasible" ? WeightSelection::FirstFeasible : WeightSelection::MaximizeGain;
    opt.ki = a.ki;
    opt.ode_steps = a.steps;
    const GainCertificate cert = design(sys, opt);

    Outputs out;
    out.report = certificate_text(cert);
    out.files.emplace_back(a.out, io::certificate_to_json(cert).dump(2) + "\n");
    out.manifest_path = manifest_beside(a.out);
    out.manifest = make_manifest("design",
                                 {{"system", a.system},
                                  {"out", a.out},
                                  {"select", a.select},
                                  {"ki", a.ki ? json(*a.ki) : json(nullptr)},
                                  {"steps", a.steps}},
                                 certificate_scalars(cert), {a.out});
    return out;
}

// --- forward ---------------------------------------------------------------

struct ForwardArgs {
    std::string A, B, C;
    std::optional<double> ki;
    std::string out;
    std::string manifest = "run_manifest.json";
};

Outputs run_forward(const ForwardArgs& a) {
    const Matrix A = io::read_csv_matrix(a.A);
    const Matrix B = io::read_csv_matrix(a.B);
    const Matrix C = io::read_csv_matrix(a.C);
    if (const auto v = validate_abstract({A, B, C}); !v.empty() && v.front().invariant != "hurwitz")
        throw ConfigError(v.front().invariant + ": " + v.front().detail);
    const LyapunovSolution lyap = lyapunov_P(A);
    const ForwardingDesign d = forwarding_design(A, B, C, lyap.P, lyap.mu, a.ki);
    const DissipationReport check = verify_forwarding_inequality(d, A, B, C, d.gains.ki);
    // |e^{At}| <= k e^{-nu t} with k = sqrt(cond P), nu = 1 / (2 lambda_max(P)).
    const double p_max_eig = max_eigenvalue_symmetric(lyap.P);
    const double k_sg = std::sqrt(p_max_eig / min_eigenvalue_symmetric(lyap.P));
    const double nu_sg = 0.5 / p_max_eig;
    const double semigroup_bound = semigroup_gain_bound(A, B, C, k_sg, nu_sg);

    json report = {
        {"P", io::to_json(d.P)},
        {"mu", io::to_json(d.mu)},
        {"mu_weighted", io::to_json(lyap.mu_weighted)},
        {"lyapunov_residual", io::to_json(lyap.residual)},
        {"M", io::to_json(d.M)},
        {"Ki", io::to_json(d.Ki)},
        {"cond_CAinvB", io::to_json(d.cond_CAinvB)},
        {"alpha", io::to_json(d.alpha)},
        {"norm_M", io::to_json(d.norm_M)},
        {"ki_star", io::to_json(d.gains.ki_star)},
        {"ki", io::to_json(d.gains.ki)},
        {"theta", io::to_json(d.gains.theta)},
        {"a", io::to_json(d.gains.a)},
        {"b", io::to_json(d.gains.b)},
        {"p", io::to_json(d.gains.p)},
        {"mu_e", io::to_json(d.gains.mu_e)},
        {"Pe", io::to_json(d.Pe)},
        {"check",
         {{"min_eig_Pe", io::to_json(check.min_eig_Pe)},
          {"max_eig_dissipation", io::to_json(check.max_eig_dissipation)},
          {"pass", check.pass}}},
        {"semigroup_constants", {{"k", io::to_json(k_sg)}, {"nu", io::to_json(nu_sg)}}},
        {"semigroup_gain", io::to_json(semigroup_bound)},
    };

    Outputs out;
    out.report = report.dump(2) + "\n";
    if (!a.out.empty())
        out.files.emplace_back(a.out, out.report);
    out.manifest_path = a.manifest;
    out.manifest = make_manifest("forward",
                                 {{"A", a.A}, {"B", a.B}, {"C", a.C}, {"ki", a.ki ? json(*a.ki) : json(nullptr)}},
                                 {{"mu", io::to_json(d.mu)},
                                  {"ki_star", io::to_json(d.gains.ki_star)},
                                  {"ki", io::to_json(d.gains.ki)},
                                  {"p", io::to_json(d.gains.p)},
                                  {"mu_e", io::to_json(d.gains.mu_e)},
                                  {"pass", check.pass}},
                                 a.out.empty() ? std::vector<std::string>{} : std::vector<std::string>{a.out});
    if (!check.pass)
        out.status = kAssumption;
    return out;
}

// --- simulate --------------------------------------------------------------

struct SimulateArgs {
    std::string system, cert, scenario, out;
    double T = 60.0;
    int grid = 400;
    double cfl = 0.9;
    int record_every = 10;
    std::optional<std::uint64_t> seed;
};

Outputs run_simulate(const SimulateArgs& a) {
    const json sys_json = io::read_json_file(a.system);
    const HyperbolicSystem sys = io::load_system(a.system);
    const GainCertificate cert = io::certificate_from_json(io::read_json_file(a.cert), sys);
    const DisturbanceScenario sc =
        io::scenario_from_json(a.scenario.empty() ? sys_json : io::read_json_file(a.scenario), sys.n, sys.m);
    SimOptions opt;
    opt.T = a.T;
    opt.cells = a.grid;
    opt.cfl = a.cfl;
    opt.record_every = a.record_every;
    opt.seed = a.seed;
    const Trajectory traj = simulate(sys, cert, sc, opt);

    Outputs out;
    std::ostringstream rep;
    rep << "steps = " << traj.steps << "  dt = " << format_number(traj.dt) << "  cfl = " << format_number(traj.cfl)
        << '\n';
    rep << "y(T) =";
    for (Eigen::Index i = 0; i < traj.y.back().size(); ++i)
        rep << ' ' << format_number(traj.y.back()(i));
    rep << "\nVe(0) = " << format_number(traj.Ve.front()) << "  Ve(T) = " << format_number(traj.Ve.back()) << '\n';
    if (traj.gain_warning)
        rep << "warning: ki is outside (0, ki_star)\n";
    out.report = rep.str();
    out.files.emplace_back(a.out, io::trajectory_csv(traj));
    out.manifest_path = manifest_beside(a.out);
    io::json derived = certificate_scalars(cert);
    derived["dt"] = io::to_json(traj.dt);
    derived["steps"] = traj.steps;
    derived["cfl_effective"] = io::to_json(traj.cfl);
    derived["y_final"] = io::to_json(traj.y.back());
    derived["Ve_decay_rate"] = io::to_json(fit_decay_rate(traj.times, traj.Ve, 0.5 * a.T, a.T));
    out.manifest = make_manifest("simulate",
                                 {{"system", a.system},
                                  {"cert", a.cert},
                                  {"scenario", a.scenario},
                                  {"T", a.T},
                                  {"grid", a.grid},
                                  {"cfl", a.cfl},
                                  {"record_every", a.record_every},
                                  {"seed", a.seed ? json(*a.seed) : json(nullptr)}},
                                 derived, {a.out});
    return out;
}

// --- verify ----------------------------------------------------------------

struct VerifyArgs {
    std::string system, cert, scenario;
    std::string manifest = "run_manifest.json";
};

Outputs run_verify(const VerifyArgs& a) {
    const json sys_json = io::read_json_file(a.system);
    const HyperbolicSystem sys = io::load_system(a.system);
    std::ostringstream rep;
    json results = json::object();
    bool all = true;
    auto check = [&](const std::string& name, bool ok, const std::string& detail) {
        rep << (ok ? "PASS " : "FAIL ") << name << ": " << detail << '\n';
        results[name] = ok;
        all = all && ok;
    };

    const FundamentalSolution phi = integrate_phi(sys);
    const FundamentalSolution psi = integrate_psi(sys);
    double min_det = std::numeric_limits<double>::infinity();
    for (const Matrix& s : phi.samples)
        min_det = std::min(min_det, std::abs(s.determinant()) / std::max(1.0, s.cwiseAbs().maxCoeff()));
    check("fundamental_nonsingular", min_det > 1e-12, "min |det Phi(s)| = " + format_number(min_det));

    const RankReport rank = rank_report(sys, phi, psi);
    check("rank_condition_1", rank.passes_rank1,
          "cond = " + format_number(rank.cond_inner1) + ", cond T1 = " + format_number(rank.cond_t1));
    check("rank_condition_2", rank.passes_rank2,
          "cond = " + format_number(rank.cond_inner2) + ", cond T2 = " + format_number(rank.cond_t2));

    const bool constant = (sys.lambda1.samples().cwiseAbs().maxCoeff() == 0.0) &&
                          (sys.lambda0.samples().rowwise() - sys.lambda0.samples().row(0)).cwiseAbs().maxCoeff() == 0.0;
    if (constant && rank.passes_rank1 && rank.passes_rank2) {
        const double gap = (rank.t1 + rank.t2).norm();
        check("constant_coefficient_identity", gap <= 1e-10 * (1.0 + rank.t1.norm()),
              "|T1 + T2| = " + format_number(gap));
    }

    std::optional<IssCertificate> iss;
    try {
        iss = certify_iss(sys);
        check("iss_certificate", iss->valid, "mu = " + format_number(iss->weight.mu) + ", c = " + format_number(iss->c));
    } catch (const CertificationError& e) {
        check("iss_certificate", false, e.what());
    }

    if (!a.cert.empty()) {
        const GainCertificate c = io::certificate_from_json(io::read_json_file(a.cert), sys);
        check("certificate_weight_valid", c.iss.valid, "interior margin " + format_number(c.iss.interior_margin));
        check("Ki_candidate", check_Ki_candidate(c.rank.t2, c.Ki), "T2 Ki + Ki^T T2^T > 0");
        const double k = gain_bound(c.iss.weight.mu, c.iss.weight.P_lower, c.iss.c, c.norm_M, c.psi_bar, c.norm_Ki);
        check("ki_star_formula", std::abs(k - c.ki_star) <= 1e-6 * k,
              "recomputed " + format_number(k) + ", certificate " + format_number(c.ki_star));
        const double pm = forwarding_weight_bound(c.iss.weight.mu, c.iss.weight.P_lower, c.ki, c.norm_M, c.psi_bar);
        check("p_max_formula", std::abs(pm - c.p_max) <= 1e-6 * pm,
              "recomputed " + format_number(pm) + ", certificate " + format_number(c.p_max));
        check("gain_in_range", c.ki > 0.0 && c.ki < c.ki_star,
              "ki = " + format_number(c.ki) + ", ki_star = " + format_number(c.ki_star));
        const DisturbanceScenario sc =
            io::scenario_from_json(a.scenario.empty() ? sys_json : io::read_json_file(a.scenario), sys.n, sys.m);
        const Equilibrium eq = compute_equilibrium(sys, c, sc);
        const EquilibriumResiduals res = equilibrium_residuals(sys, eq, sc, phi.at_one);
        check("equilibrium_residuals", res.boundary <= 1e-9 && res.output <= 1e-9,
              "boundary " + format_number(res.boundary) + ", output " + format_number(res.output));
    }

    Outputs out;
    out.report = rep.str();
    out.manifest_path = a.manifest;
    out.manifest = make_manifest("verify", {{"system", a.system}, {"cert", a.cert}, {"scenario", a.scenario}},
                                 {{"checks", results}, {"all_pass", all}}, {});
    if (!all)
        out.status = kAssumption;
    return out;
}

// --- reproduce -------------------------------------------------------------

struct ReproduceArgs {
    std::string name;
    std::string outdir = ".";
};

Outputs run_reproduce(const ReproduceArgs& a) {
    RunOutput r;
    if (a.name == "heat")
        r = reproduce_heat();
    else if (a.name == "transport")
        r = reproduce_transport();
    else
        r = reproduce_saint_venant();
    Outputs out;
    out.report = r.report;
    for (auto& [name, text] : r.files)
        out.files.emplace_back(fs::path(a.outdir) / name, std::move(text));
    out.manifest_path = fs::path(a.outdir) / "run_manifest.json";
    out.manifest = std::move(r.manifest);
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Integral-action regulator design, certification and simulation"};
    app.require_subcommand(1);
    std::function<Outputs()> command;

    DesignArgs design_args;
    auto* design_cmd = app.add_subcommand("design", "Certify a hyperbolic system and compute its integral gain");
    design_cmd->add_option("--system", design_args.system, "System JSON")->required()->check(CLI::ExistingFile);
    design_cmd->add_option("--out", design_args.out, "Certificate JSON to write")->required();
    design_cmd->add_option("--select", design_args.select, "Weight selection")
        ->check(CLI::IsMember({"max-gain", "first-feasible"}));
    design_cmd->add_option("--ki", design_args.ki, "Operating gain (default 0.9 ki_star)")
        ->check(CLI::PositiveNumber);
    design_cmd->add_option("--steps", design_args.steps, "RK4 steps for the fundamental solutions")
        ->check(CLI::Range(10, 1000000));
    design_cmd->callback([&] { command = [&] { return run_design(design_args); }; });

    ForwardArgs fwd_args;
    auto* fwd_cmd = app.add_subcommand("forward", "Forwarding design for a finite-dimensional plant");
    fwd_cmd->add_option("--A", fwd_args.A, "CSV matrix A")->required()->check(CLI::ExistingFile);
    fwd_cmd->add_option("--B", fwd_args.B, "CSV matrix B")->required()->check(CLI::ExistingFile);
    fwd_cmd->add_option("--C", fwd_args.C, "CSV matrix C")->required()->check(CLI::ExistingFile);
    fwd_cmd->add_option("--ki", fwd_args.ki, "Operating gain (default 0.9 ki_star)")->check(CLI::PositiveNumber);
    fwd_cmd->add_option("--out", fwd_args.out, "Also write the JSON report here");
    fwd_cmd->add_option("--manifest", fwd_args.manifest, "Run manifest path");
    fwd_cmd->callback([&] { command = [&] { return run_forward(fwd_args); }; });

    SimulateArgs sim_args;
    auto* sim_cmd = app.add_subcommand("simulate", "Closed-loop upwind simulation");
    sim_cmd->add_option("--system", sim_args.system, "System JSON")->required()->check(CLI::ExistingFile);
    sim_cmd->add_option("--cert", sim_args.cert, "Certificate JSON from design")->required()->check(CLI::ExistingFile);
    sim_cmd->add_option("--scenario", sim_args.scenario, "Scenario JSON (default: the system file's scenario)")
        ->check(CLI::ExistingFile);
    sim_cmd->add_option("--T", sim_args.T, "Horizon")->check(CLI::PositiveNumber);
    sim_cmd->add_option("--grid", sim_args.grid, "Number of spatial cells")->check(CLI::Range(2, 1000000));
    sim_cmd->add_option("--cfl", sim_args.cfl, "CFL number in (0, 1]")->check(CLI::Range(0.0, 1.0));
    sim_cmd->add_option("--record-every", sim_args.record_every, "Steps between recorded frames")
        ->check(CLI::Range(1, 1000000));
    sim_cmd->add_option("--seed", sim_args.seed, "Random initial state seed (zero state if absent)");
    sim_cmd->add_option("--out", sim_args.out, "Trajectory CSV")->required();
    sim_cmd->callback([&] { command = [&] { return run_simulate(sim_args); }; });

    VerifyArgs ver_args;
    auto* ver_cmd = app.add_subcommand("verify", "Re-check the structural assumptions and a certificate");
    ver_cmd->add_option("--system", ver_args.system, "System JSON")->required()->check(CLI::ExistingFile);
    ver_cmd->add_option("--cert", ver_args.cert, "Certificate JSON")->check(CLI::ExistingFile);
    ver_cmd->add_option("--scenario", ver_args.scenario, "Scenario JSON")->check(CLI::ExistingFile);
    ver_cmd->add_option("--manifest", ver_args.manifest, "Run manifest path");
    ver_cmd->callback([&] { command = [&] { return run_verify(ver_args); }; });

    ReproduceArgs rep_args;
    auto* rep_cmd = app.add_subcommand("reproduce", "Run a built-in example end to end");
    rep_cmd->add_option("example", rep_args.name, "heat, transport or saintvenant")
        ->required()
        ->check(CLI::IsMember({"heat", "transport", "saintvenant"}));
    rep_cmd->add_option("--outdir", rep_args.outdir, "Directory for CSV files and the manifest");
    rep_cmd->callback([&] { command = [&] { return run_reproduce(rep_args); }; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        const Outputs out = command();
        std::cout << out.report;
        write_outputs(out);
        return out.status;
    } catch (const AssumptionError& e) {
        std::cerr << "assumption failed (" << e.assumption() << "): " << e.what() << '\n';
        return kAssumption;
    } catch (const CertificationError& e) {
        std::cerr << "certification failed: " << e.what() << '\n';
        return kAssumption;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return kNumerical;
    } catch (const ConfigError& e) {
        std::cerr << "invalid configuration: " << e.what() << '\n';
        return kConfig;
    } catch (const std::domain_error& e) {
        std::cerr << "invalid configuration: " << e.what() << '\n';
        return kConfig;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "invalid configuration: " << e.what() << '\n';
        return kConfig;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "i/o error: " << e.what() << '\n';
        return kConfig;
    }
}
