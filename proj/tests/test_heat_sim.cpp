#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Sparse>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "fwdreg/heat.hpp"
#include "fwdreg/io.hpp"
#include "fwdreg/scenarios.hpp"
#include "fwdreg/simulation.hpp"

using namespace fwdreg;
using Catch::Approx;

namespace {

double max_abs(const Matrix& a) { return a.cwiseAbs().maxCoeff(); }

const HeatProblem& bar() {
    static const HeatProblem hp = make_heat_problem(2000);
    return hp;
}

const HeatGain& bar_gain() {
    static const HeatGain g = heat_gain(bar());
    return g;
}

// Gram matrix of the Green's function rows, exact by Simpson on each piece
// between sensors (the products are quadratic there).
Matrix green_gram(const HeatProblem& hp) {
    const double breaks[] = {0.0, hp.sensors[0], hp.sensors[1], hp.sensors[2], hp.L};
    Matrix g = Matrix::Zero(3, 3);
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int s = 0; s < 4; ++s) {
                const double a = breaks[s], b = breaks[s + 1], m = 0.5 * (a + b);
                auto f = [&](double xi) {
                    return heat_green(hp.sensors[i], xi, hp.L) * heat_green(hp.sensors[j], xi, hp.L);
                };
                g(i, j) += (b - a) / 6.0 * (f(a) + 4.0 * f(m) + f(b));
            }
    return g;
}

std::filesystem::path scratch_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("fwdreg_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace

// ---------------------------------------------------------------------------
// heat bar
// ---------------------------------------------------------------------------

TEST_CASE("heat bar steady-state gain in closed form", "[heat]") {
    Matrix expected(3, 3);
    expected << 14, 15, 9, 8, 20, 18, 4, 10, 14;
    expected *= -0.1;
    CHECK(max_abs(exact_CAinvB(bar()) - expected) <= 1e-12);
    CHECK(max_abs(bar_gain().CAinvB - expected) <= 1e-3);
}

TEST_CASE("heat bar Ki and its norm", "[heat]") {
    Matrix printed(3, 3);
    printed << -1.25, 1.5, -1.125, 0.5, -2.0, 2.25, 0.0, 1.0, -2.0;
    const Matrix exact = exact_CAinvB(bar()).inverse();
    CHECK(max_abs(exact - printed) <= 1e-12);
    CHECK(max_abs(bar_gain().Ki - printed) <= 1e-3);
    CHECK(bar_gain().norm_Ki == Approx(4.2433).margin(1e-3));
    CHECK(spectral_norm(exact) == Approx(bar_gain().norm_Ki).margin(1e-3));
}

TEST_CASE("grid quadrature of C A^-1 matches the Green's function", "[heat]") {
    const HeatProblem& hp = bar();
    const Matrix exact = exact_CAinvB(hp);
    for (int k = 0; k < 3; ++k) {
        const Vector col = hp.B.col(k);
        CHECK(max_abs(cainv_apply(hp, col) - exact.col(k)) <= 1e-6);
        CHECK(max_abs(cainv_rows(hp) * col - exact.col(k)) <= 1e-6);
    }
    CHECK(cainv_apply(hp, Vector::Zero(hp.interior())).norm() == 0.0);
    CHECK_THROWS_AS(cainv_apply(hp, Vector::Zero(5)), ConfigError);
}

TEST_CASE("norm of C A^-1 equals the Green's Gram value", "[heat]") {
    const double exact = std::sqrt(max_eigenvalue_symmetric(green_gram(bar())));
    CHECK(exact == Approx(6.26366).margin(5e-5));
    CHECK(bar_gain().norm_CAinv == Approx(exact).epsilon(1e-4));
}

TEST_CASE("heat gain bound and input norms", "[heat]") {
    const HeatGain& g = bar_gain();
    CHECK(g.mu == Approx(std::numbers::pi * std::numbers::pi / 50.0).epsilon(1e-15));
    CHECK(g.ki_star >= 2.0e-3);
    CHECK(g.ki_star <= 2.3e-3);
    CHECK(std::abs(g.ki_star - 2.1498e-3) <= 0.05 * 2.1498e-3);
    CHECK(g.norm_B <= std::sqrt(3.0));
    CHECK(g.norm_B_hs <= std::sqrt(3.0));
    CHECK(g.norm_B <= g.norm_B_hs + 1e-12);
    CHECK(g.ki_star <= g.ki_star_sharp);
    CHECK(g.semigroup_gain > 0.0);
}

TEST_CASE("heat gain bound is grid converged", "[heat]") {
    const HeatGain coarse = heat_gain(make_heat_problem(1000));
    CHECK(std::abs(coarse.ki_star - bar_gain().ki_star) <= 0.01 * bar_gain().ki_star);
    CHECK_THROWS_AS(make_heat_problem(1005), ConfigError);
}

TEST_CASE("bordered steady state agrees with a sparse direct solve", "[heat]") {
    const HeatProblem& hp = bar();
    const int n = hp.interior();
    const double ki = 2.0e-3;
    std::mt19937_64 rng(41);
    Vector w(n);
    for (int j = 0; j < n; ++j)
        w(j) = 1e-3 * (static_cast<double>(rng() >> 11) * 0x1.0p-53 - 0.5);
    const HeatEquilibrium eq = heat_equilibrium(hp, bar_gain().Ki, ki, w, hp.y_ref);

    std::vector<Eigen::Triplet<double>> t;
    const Matrix a = hp.A.dense();
    for (int i = 0; i < n; ++i)
        for (int j = std::max(0, i - 1); j <= std::min(n - 1, i + 1); ++j)
            t.emplace_back(i, j, a(i, j));
    const Matrix bk = ki * hp.B * bar_gain().Ki;
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < 3; ++k)
            if (bk(i, k) != 0.0)
                t.emplace_back(i, n + k, bk(i, k));
    for (int k = 0; k < 3; ++k)
        t.emplace_back(n + k, hp.sensor_index[k], 1.0);
    Eigen::SparseMatrix<double> big(n + 3, n + 3);
    big.setFromTriplets(t.begin(), t.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(big);
    REQUIRE(lu.info() == Eigen::Success);
    Vector rhs(n + 3);
    rhs << -w, hp.y_ref;
    const Vector x = lu.solve(rhs);
    CHECK((x.head(n) - eq.phi).cwiseAbs().maxCoeff() <= 1e-9 * std::max(1.0, eq.phi.cwiseAbs().maxCoeff()));
    CHECK((x.tail(3) - eq.z).cwiseAbs().maxCoeff() <= 1e-9 * std::max(1.0, eq.z.cwiseAbs().maxCoeff()));
    CHECK(max_abs(eq.y - hp.y_ref) <= 1e-9);
}

TEST_CASE("heat closed loop regulates the sensors", "[heat][slow]") {
    const HeatProblem& hp = bar();
    const Trajectory traj = simulate_heat(hp, bar_gain(), 2.0e-3);
    CHECK_FALSE(traj.gain_warning);
    CHECK(max_abs(traj.y.back() - hp.y_ref) <= 1e-2);

    HeatSimOptions opt;
    opt.w = Vector::Constant(hp.interior(), 1e-3);
    const Trajectory disturbed = simulate_heat(hp, bar_gain(), 2.0e-3, opt);
    CHECK(max_abs(disturbed.y.back() - hp.y_ref) <= 1e-2);
}

TEST_CASE("without integral action the sensors stay at rest", "[heat]") {
    const HeatProblem& hp = bar();
    HeatSimOptions opt;
    opt.T = 500.0;
    const Trajectory traj = simulate_heat(hp, bar_gain(), 0.0, opt);
    CHECK(traj.gain_warning);
    CHECK(max_abs(traj.y.back()) == 0.0);
    CHECK(max_abs(traj.y.back() - hp.y_ref) == Approx(3.0));
}

TEST_CASE("heat extended functional decreases below the gain bound", "[heat]") {
    const HeatProblem& hp = bar();
    HeatSimOptions opt;
    opt.T = 2000.0;
    opt.record_every = 1;
    const Trajectory traj = simulate_heat(hp, bar_gain(), 0.9 * bar_gain().ki_star, opt);
    CHECK(traj.mu_e > 0.0);
    CHECK(count_increases(traj.Ve, 1e-12) == 0);
    CHECK(traj.Ve.back() < traj.Ve.front());
}

// ---------------------------------------------------------------------------
// hyperbolic equilibrium and simulation
// ---------------------------------------------------------------------------

TEST_CASE("transport equilibrium for a unit reference", "[sim]") {
    const HyperbolicSystem sys = transport_system();
    DesignOptions opt;
    opt.ki = 0.3;
    const GainCertificate cert = design(sys, opt);
    DisturbanceScenario sc = DisturbanceScenario::zero(1, 1);
    sc.y_ref(0) = 1.0;
    const Equilibrium eq = compute_equilibrium(sys, cert, sc);
    CHECK(eq.u_inf(0) == Approx(1.0).epsilon(1e-12));
    CHECK(eq.z_inf(0) == Approx(-10.0 / 3.0).epsilon(1e-12));
    CHECK((eq.phi_inf.array() - 1.0).abs().maxCoeff() <= 1e-12);

    const Equilibrium trivial = compute_equilibrium(sys, cert, DisturbanceScenario::zero(1, 1));
    CHECK(trivial.z_inf.norm() == 0.0);
    CHECK(trivial.phi_inf.norm() == 0.0);
}

TEST_CASE("equilibrium satisfies the boundary and output relations", "[sim]") {
    std::mt19937_64 rng(43);
    auto unit = [&] { return 2.0 * static_cast<double>(rng() >> 11) * 0x1.0p-53 - 1.0; };
    const HyperbolicSystem systems[] = {saint_venant_system(), varying_coefficient_system()};
    for (const HyperbolicSystem& sys : systems) {
        const GainCertificate cert = design(sys);
        const Matrix phi_at_one = integrate_phi(sys).at_one;
        for (int trial = 0; trial < 50; ++trial) {
            DisturbanceScenario sc = DisturbanceScenario::zero(sys.n, sys.m);
            for (int i = 0; i < sys.n; ++i)
                sc.w_b(i) = unit();
            for (int i = 0; i < sys.m; ++i) {
                sc.w_y(i) = unit();
                sc.y_ref(i) = unit();
            }
            const Equilibrium eq = compute_equilibrium(sys, cert, sc);
            const EquilibriumResiduals r = equilibrium_residuals(sys, eq, sc, phi_at_one);
            CHECK(r.boundary <= 1e-9);
            CHECK(r.output <= 1e-9);
        }
    }
}

TEST_CASE("a closed loop started at equilibrium stays there", "[sim]") {
    const HyperbolicSystem sys = saint_venant_system();
    const GainCertificate cert = design(sys);
    DisturbanceScenario sc = DisturbanceScenario::zero(2, 2);
    sc.w_b << 0.1, -0.05;
    sc.w_y << 0.02, 0.0;
    sc.y_ref << 1.0, 0.5;
    const Equilibrium eq = compute_equilibrium(sys, cert, sc, 100);
    SimOptions opt;
    opt.T = 10.0;
    opt.cells = 100;
    opt.phi0 = eq.phi_inf;
    opt.z0 = eq.z_inf;
    const Trajectory traj = simulate(sys, cert, sc, opt);
    CHECK(max_abs(traj.final_state - eq.phi_inf) <= 1e-8);
    CHECK(max_abs(traj.z.back() - eq.z_inf) <= 1e-8);
    CHECK(max_abs(traj.y.back() - sc.y_ref) <= 1e-8);
}

TEST_CASE("transport output reaches the reference", "[sim]") {
    const HyperbolicSystem sys = transport_system();
    const GainCertificate cert = design(sys);
    DisturbanceScenario sc = DisturbanceScenario::zero(1, 1);
    sc.y_ref(0) = 1.0;
    SimOptions opt;
    opt.T = 60.0;
    const Trajectory traj = simulate(sys, cert, sc, opt);
    CHECK(std::abs(traj.y.back()(0) - 1.0) <= 1e-2);
    CHECK(traj.cfl <= 0.9 + 1e-12);
    CHECK(traj.dt * traj.steps == Approx(60.0).epsilon(1e-14));
}

TEST_CASE("closed-loop functionals decay and never increase", "[sim]") {
    const HyperbolicSystem sys = saint_venant_system();
    const GainCertificate cert = design(sys);
    SimOptions opt;
    opt.T = 40.0;
    opt.cells = 200;
    opt.seed = 3;
    opt.record_every = 5;
    const Trajectory traj = simulate(sys, cert, DisturbanceScenario::zero(2, 2), opt);
    CHECK(count_increases(traj.Ve, 1e-9) == 0);
    CHECK(fit_decay_rate(traj.times, traj.Ve, 5.0, 40.0) >= cert.mu_e);
}

TEST_CASE("trapezoid evaluation of V against the exponential weight", "[sim]") {
    const double exact = 1.0 - std::exp(-1.0);
    {
        const IssCertificate c = evaluate_weight(transport_system(200), 1.0, Vector::Ones(1));
        const double h = 1.0 / 199.0;
        const double v = evaluate_V(c.weight, Matrix::Ones(1, 200));
        // Leading trapezoid error h^2 / 12 (f'(1) - f'(0)) with f = exp(-s).
        CHECK(v - exact == Approx(h * h / 12.0 * (1.0 - std::exp(-1.0))).epsilon(1e-3));
    }
    {
        const IssCertificate c = evaluate_weight(transport_system(400), 1.0, Vector::Ones(1));
        CHECK(std::abs(evaluate_V(c.weight, Matrix::Ones(1, 400)) - exact) <= 1e-6);
    }
    const IssCertificate c = evaluate_weight(transport_system(), 1.0, Vector::Ones(1));
    CHECK(evaluate_V(c.weight, Matrix::Zero(1, 201)) == 0.0);
    CHECK_THROWS_AS(evaluate_V(c.weight, Matrix::Zero(2, 201)), ConfigError);
}

TEST_CASE("extended functional adds the forwarding gap", "[sim]") {
    const HyperbolicSystem sys = transport_system();
    const IssCertificate c = evaluate_weight(sys, 1.0, Vector::Ones(1));
    const FundamentalSolution psi = integrate_psi(sys);
    const ForwardingOperator op = make_forwarding_operator(-Matrix::Identity(1, 1), psi, 200);
    const Matrix phi = Matrix::Ones(1, 201);
    // M Psi = -1 for transport, so the functional of phi = 1 is -1.
    CHECK(op.apply(phi)(0) == Approx(-1.0).epsilon(1e-12));
    const double v = evaluate_V(c.weight, phi);
    CHECK(evaluate_Ve(c.weight, op, 2.0, phi, Vector::Constant(1, -1.0)) == Approx(v).epsilon(1e-12));
    CHECK(evaluate_Ve(c.weight, op, 2.0, phi, Vector::Zero(1)) == Approx(v + 2.0).epsilon(1e-12));
}

TEST_CASE("open loop obeys the ISS estimate", "[sim]") {
    const HyperbolicSystem sys = saint_venant_system();
    const GainCertificate cert = design(sys);
    SimOptions opt;
    opt.T = 10.0;
    opt.seed = 9;
    opt.record_every = 1;
    opt.open_loop_input = Vector::Constant(2, 0.3);
    const Trajectory traj = simulate(sys, cert, DisturbanceScenario::zero(2, 2), opt);
    const double mu = cert.iss.weight.mu;
    const double c = cert.iss.c;
    const double u2 = 2.0 * 0.09;
    for (std::size_t k = 0; k < traj.frames(); ++k) {
        const double t = traj.times[k];
        const double bound = std::exp(-mu * t) * traj.V.front() + c * u2 * (1.0 - std::exp(-mu * t)) / mu;
        CHECK(traj.V[k] <= bound * (1.0 + 1e-2) + 1e-12);
    }
}

TEST_CASE("invalid simulation settings are configuration errors", "[sim]") {
    const HyperbolicSystem sys = transport_system();
    const GainCertificate cert = design(sys);
    SimOptions opt;
    opt.cfl = 1.5;
    CHECK_THROWS_AS(simulate(sys, cert, DisturbanceScenario::zero(1, 1), opt), ConfigError);
    opt.cfl = 0.9;
    opt.cells = 1;
    CHECK_THROWS_AS(simulate(sys, cert, DisturbanceScenario::zero(1, 1), opt), ConfigError);
    CHECK_THROWS_AS(simulate(sys, cert, DisturbanceScenario::zero(2, 1)), ConfigError);
}

TEST_CASE("seeded initial data is reproducible", "[sim]") {
    CHECK(max_abs(random_field(2, 50, 5, 0.5) - random_field(2, 50, 5, 0.5)) == 0.0);
    CHECK(max_abs(random_field(2, 50, 5, 0.5)) <= 0.5);
    CHECK(max_abs(random_field(2, 50, 5, 0.5) - random_field(2, 50, 6, 0.5)) > 0.0);
}

// ---------------------------------------------------------------------------
// input and output
// ---------------------------------------------------------------------------

TEST_CASE("numbers are printed with nine significant digits", "[io]") {
    CHECK(io::format_number(1.0 / 3.0) == "0.333333333");
    CHECK(io::format_number(2.0) == "2");
    CHECK(io::format_number(-1.23456789012e-7) == "-1.23456789e-07");
    CHECK(io::to_json(std::nan("")).is_null());
    CHECK(io::round_sig(1.0 / 3.0) == 0.333333333);
}

TEST_CASE("system and scenario files", "[io]") {
    const io::json j = io::json::parse(R"({
        "n": 2, "ell": 1, "m": 2,
        "lambda0": {"constant": [1.0, -1.0]},
        "lambda1": {"constant": [0.0, 0.0, 0.0, 0.0]},
        "K": [[0.0, 0.5], [0.5, 0.0]],
        "B": [[1.0, 0.0], [0.0, 1.0]],
        "L1": [[0.5, 0.0], [0.0, -0.5]],
        "L2": [[0.0, 0.5], [0.5, 0.0]],
        "scenario": {"y_ref": [1.0, 0.5]}
    })");
    const HyperbolicSystem sys = io::system_from_json(j);
    CHECK(sys.n == 2);
    CHECK(sys.lambda0.value(0.3)(1) == -1.0);
    const DisturbanceScenario sc = io::scenario_from_json(j, 2, 2);
    CHECK(sc.y_ref(1) == 0.5);
    CHECK(sc.w_b.norm() == 0.0);

    io::json bad = j;
    bad["K"] = {{0.0, 0.5}};
    CHECK_THROWS_AS(io::system_from_json(bad), ConfigError);
    io::json wrong_sign = j;
    wrong_sign["lambda0"] = {{"constant", {1.0, 1.0}}};
    CHECK_THROWS_AS(io::system_from_json(wrong_sign), ConfigError);
    CHECK_THROWS_AS(io::load_system("/nonexistent/system.json"), ConfigError);
}

TEST_CASE("certificates survive a JSON round trip", "[io]") {
    const HyperbolicSystem sys = saint_venant_system();
    const GainCertificate cert = design(sys);
    const io::json j = io::json::parse(io::certificate_to_json(cert).dump());
    const GainCertificate back = io::certificate_from_json(j, sys);
    CHECK(max_abs(back.Ki - cert.Ki) <= 1e-8);
    CHECK(back.ki == Approx(cert.ki).epsilon(1e-8));
    CHECK(back.p == Approx(cert.p).epsilon(1e-8));
    CHECK(back.iss.c == Approx(cert.iss.c).epsilon(1e-6));
    CHECK(back.within_bound == cert.within_bound);
    CHECK_THROWS_AS(io::certificate_from_json(j, transport_system()), ConfigError);
}

TEST_CASE("CSV matrices", "[io]") {
    const auto dir = scratch_dir("csv");
    io::write_text_file(dir / "ok.csv", "1, 2\n3,4\n\n");
    const Matrix a = io::read_csv_matrix(dir / "ok.csv");
    CHECK(a.rows() == 2);
    CHECK(a(1, 0) == 3.0);
    io::write_text_file(dir / "ragged.csv", "1,2\n3\n");
    CHECK_THROWS_AS(io::read_csv_matrix(dir / "ragged.csv"), ConfigError);
    io::write_text_file(dir / "text.csv", "1,x\n");
    CHECK_THROWS_AS(io::read_csv_matrix(dir / "text.csv"), ConfigError);
    io::write_text_file(dir / "empty.csv", "");
    CHECK_THROWS_AS(io::read_csv_matrix(dir / "empty.csv"), ConfigError);
    CHECK_THROWS_AS(io::read_csv_matrix(dir / "missing.csv"), ConfigError);
    CHECK_FALSE(std::filesystem::exists(dir / "ok.csv.tmp"));
}

TEST_CASE("trajectory CSV headers", "[io]") {
    Trajectory t;
    t.times = {0.0, 1.0};
    t.y = {Vector::Constant(2, 1.0), Vector::Constant(2, 0.5)};
    t.z = t.y;
    t.norm_phi = {1.0, 0.5};
    t.V = {1.0, 0.25};
    t.Ve = {2.0, 0.5};
    const std::string indexed = io::trajectory_csv(t);
    CHECK(indexed.substr(0, indexed.find('\n')) == "t,y_1,y_2,z_1,z_2,norm_phi,V,Ve");
    const std::string compact = io::trajectory_csv(t, io::HeaderStyle::Compact);
    CHECK(compact.substr(0, compact.find('\n')) == "t,y1,y2,z1,z2,V,Ve");
    CHECK(compact.find("1,0.5,0.5,0.5,0.5,0.25,0.5\n") != std::string::npos);
}
