#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>

#include "fwdreg/fundamental.hpp"
#include "fwdreg/model.hpp"
#include "fwdreg/scenarios.hpp"

using namespace fwdreg;
using Catch::Approx;

namespace {

double max_abs(const Matrix& a) { return a.cwiseAbs().maxCoeff(); }

HyperbolicSystem scalar_system(double speed, double reaction, int grid = kDefaultGridPoints) {
    return damped_transport_system(speed, reaction, grid);
}

// Smooth, strictly hyperbolic 2 x 2 system with full coupling.
HyperbolicSystem smooth_system(int grid = kDefaultGridPoints) {
    HyperbolicSystem sys = saint_venant_system({}, grid);
    sys.lambda0 = CoefficientField::from_function(
        [](double s) {
            Vector v(2);
            v << 1.0 + 0.5 * std::sin(2.0 * s), -(0.8 + 0.3 * s * s);
            return v;
        },
        2, grid);
    sys.lambda1 = CoefficientField::from_function(
        [](double s) {
            Vector v(4);
            v << 0.3 * std::cos(s), -0.2, 0.4 * s, 0.1 + 0.2 * std::exp(-s);
            return v;
        },
        4, grid);
    return sys;
}

} // namespace

// ---------------------------------------------------------------------------
// validation
// ---------------------------------------------------------------------------

TEST_CASE("transport and channel systems validate cleanly", "[model]") {
    CHECK(validate_hyperbolic(transport_system()).empty());
    CHECK(validate_hyperbolic(saint_venant_system()).empty());
    CHECK(validate_hyperbolic(varying_coefficient_system()).empty());
}

TEST_CASE("a vanishing speed at one node is reported with its grid index", "[model]") {
    HyperbolicSystem sys = transport_system();
    Matrix samples = Matrix::Ones(kDefaultGridPoints, 1);
    samples(50, 0) = 0.0;
    sys.lambda0 = CoefficientField(samples);
    const auto report = validate_hyperbolic(sys);
    REQUIRE(report.size() == 1);
    CHECK(report.front().invariant == "sign_pattern");
    CHECK(report.front().grid_index == 50);
}

TEST_CASE("a speed sign that contradicts ell is reported", "[model]") {
    HyperbolicSystem sys = saint_venant_system();
    sys.ell = 2;
    const auto report = validate_hyperbolic(sys);
    REQUIRE_FALSE(report.empty());
    for (const auto& v : report)
        CHECK(v.invariant == "sign_pattern");
}

TEST_CASE("shape and finiteness violations are named", "[model]") {
    HyperbolicSystem sys = saint_venant_system();
    sys.K = Matrix::Zero(3, 2);
    auto report = validate_hyperbolic(sys);
    REQUIRE_FALSE(report.empty());
    CHECK(report.front().invariant == "shape");

    sys = saint_venant_system();
    sys.B(0, 0) = std::numeric_limits<double>::quiet_NaN();
    report = validate_hyperbolic(sys);
    REQUIRE(report.size() == 1);
    CHECK(report.front().invariant == "finite");

    sys = saint_venant_system();
    sys.m = 0;
    report = validate_hyperbolic(sys);
    REQUIRE_FALSE(report.empty());
    CHECK(report.front().invariant == "dimensions");
}

TEST_CASE("validation is pure", "[model]") {
    HyperbolicSystem sys = saint_venant_system();
    sys.ell = 0;
    const auto a = validate_hyperbolic(sys);
    const auto b = validate_hyperbolic(sys);
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].invariant == b[i].invariant);
        CHECK(a[i].detail == b[i].detail);
        CHECK(a[i].grid_index == b[i].grid_index);
    }
}

// ---------------------------------------------------------------------------
// coefficient evaluation
// ---------------------------------------------------------------------------

TEST_CASE("constant coefficients have zero derivative on any grid", "[model]") {
    Vector speeds(2);
    speeds << 1.0, -1.0;
    for (int grid : {2, 3, 11, 201, 1001}) {
        HyperbolicSystem sys = saint_venant_system({}, grid);
        sys.lambda0 = CoefficientField::constant(speeds, grid);
        const CoefficientSample c = eval_coefficients(sys, 0.37);
        CHECK(max_abs(c.lambda0 - Matrix(speeds.asDiagonal())) == 0.0);
        CHECK(max_abs(c.dlambda0) <= 1e-12);
        CHECK(max_abs(c.lambda1) == 0.0);
        for (double s : {0.0, 1.0})
            CHECK(max_abs(eval_coefficients(sys, s).dlambda0) <= 1e-12);
    }
}

TEST_CASE("affine speed has unit derivative, including the endpoint", "[model]") {
    HyperbolicSystem sys = transport_system();
    sys.lambda0 = CoefficientField::from_function([](double s) { return Vector::Constant(1, 1.0 + s); }, 1);
    CHECK_FALSE(sys.lambda0.has_analytic_derivative());
    const CoefficientSample mid = eval_coefficients(sys, 0.5);
    CHECK(mid.lambda0(0, 0) == Approx(1.5).margin(1e-14));
    CHECK(mid.dlambda0(0, 0) == Approx(1.0).margin(1e-9));
    const CoefficientSample end = eval_coefficients(sys, 1.0);
    CHECK(end.lambda0(0, 0) == Approx(2.0).margin(1e-14));
    CHECK(end.dlambda0(0, 0) == Approx(1.0).margin(1e-9));
    CHECK(sys.lambda0.nodal_derivative(0)(0) == Approx(1.0).margin(1e-9));
}

TEST_CASE("evaluation outside the unit interval is a domain error", "[model]") {
    const HyperbolicSystem sys = transport_system();
    CHECK_THROWS_AS(eval_coefficients(sys, -1e-9), std::domain_error);
    CHECK_THROWS_AS(eval_coefficients(sys, 1.0 + 1e-9), std::domain_error);
    CHECK_THROWS_AS(eval_coefficients(sys, std::numeric_limits<double>::quiet_NaN()), std::domain_error);
}

TEST_CASE("interpolation error shrinks at least linearly under refinement", "[model]") {
    auto f = [](double s) { return Vector::Constant(1, 2.0 + std::sin(3.0 * s) + s * s); };
    auto worst_error = [&](int grid) {
        const CoefficientField field = CoefficientField::from_function(f, 1, grid);
        double err = 0.0;
        for (int k = 0; k < 997; ++k) {
            const double s = (k + 0.5) / 997.0;
            err = std::max(err, std::abs(field.value(s)(0) - f(s)(0)));
        }
        return err;
    };
    double prev = worst_error(25);
    for (int grid : {49, 97, 193}) {
        const double err = worst_error(grid);
        CHECK(err <= 0.55 * prev);
        prev = err;
    }
}

TEST_CASE("an analytic derivative hook replaces finite differences", "[model]") {
    const CoefficientField field = CoefficientField::from_function(
        [](double s) { return Vector::Constant(1, std::exp(s)); }, 1, 11,
        [](double s) { return Vector::Constant(1, std::exp(s)); });
    CHECK(field.has_analytic_derivative());
    CHECK(field.derivative(0.33)(0) == Approx(std::exp(0.33)).epsilon(1e-15));
}

TEST_CASE("sampled coefficients are resampled piecewise linearly", "[model]") {
    std::vector<std::pair<double, Vector>> knots{{0.0, Vector::Constant(1, 1.0)},
                                                 {0.5, Vector::Constant(1, 2.0)},
                                                 {1.0, Vector::Constant(1, 1.0)}};
    const CoefficientField field = CoefficientField::from_knots(knots, 101);
    CHECK(field.value(0.25)(0) == Approx(1.5).margin(1e-14));
    CHECK(field.value(0.5)(0) == Approx(2.0).margin(1e-14));
    CHECK(field.value(0.9)(0) == Approx(1.2).margin(1e-14));
    knots[1].first = 0.0;
    CHECK_THROWS_AS(CoefficientField::from_knots(knots), ConfigError);
}

// ---------------------------------------------------------------------------
// Lyapunov weight family, scenarios, abstract systems
// ---------------------------------------------------------------------------

TEST_CASE("unit-speed weight is the plain exponential", "[model]") {
    const HyperbolicSystem sys = transport_system();
    const LyapunovWeight w = make_weight(sys, 1.0, Vector::Ones(1));
    for (int k = 0; k < sys.grid_points(); ++k) {
        const double s = sys.lambda0.node(k);
        CHECK(w.samples(k, 0) == Approx(std::exp(-s)).epsilon(1e-14));
    }
    CHECK(w.P_lower == Approx(std::exp(-1.0)).epsilon(1e-14));
    CHECK(w.P_upper == Approx(1.0).epsilon(1e-14));

    const HyperbolicSystem sv = saint_venant_system();
    const LyapunovWeight w2 = make_weight(sv, 0.7, Vector::Constant(2, 2.0));
    CHECK(w2.samples(sv.grid_points() - 1, 1) == Approx(2.0 * std::exp(0.7)).epsilon(1e-13));
}

TEST_CASE("weight flux satisfies (P lambda)' = -mu P", "[model]") {
    const HyperbolicSystem sys = varying_coefficient_system(801);
    Vector p(2);
    p << 0.5, 3.0;
    const double mu = 0.8;
    const LyapunovWeight w = make_weight(sys, mu, p);
    const double h = sys.lambda0.spacing();
    for (int k = 1; k + 1 < sys.grid_points(); k += 40) {
        for (int i = 0; i < 2; ++i) {
            const double up = w.samples(k + 1, i) * sys.lambda0.samples()(k + 1, i);
            const double down = w.samples(k - 1, i) * sys.lambda0.samples()(k - 1, i);
            CHECK((up - down) / (2.0 * h) == Approx(w.flux_derivative(k, i)).epsilon(1e-4));
            CHECK(w.flux_derivative(k, i) == Approx(-mu * w.samples(k, i)).epsilon(1e-14));
        }
    }
    CHECK((w.samples.array() >= w.P_lower).all());
    CHECK((w.samples.array() <= w.P_upper).all());
    CHECK(w.P_lower > 0.0);
}

TEST_CASE("scenarios are checked against the system dimensions", "[model]") {
    DisturbanceScenario sc = DisturbanceScenario::zero(2, 2);
    CHECK_NOTHROW(check_scenario(sc, 2, 2));
    CHECK_THROWS_AS(check_scenario(sc, 3, 2), ConfigError);
    sc.y_ref(1) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(check_scenario(sc, 2, 2), ConfigError);
}

TEST_CASE("abstract systems must be Hurwitz and consistently shaped", "[model]") {
    AbstractLinearSystem sys{-Matrix::Identity(3, 3), Matrix::Ones(3, 1), Matrix::Ones(1, 3)};
    CHECK(validate_abstract(sys).empty());
    sys.A(2, 2) = 0.0;
    auto report = validate_abstract(sys);
    REQUIRE(report.size() == 1);
    CHECK(report.front().invariant == "hurwitz");
    sys.C = Matrix::Ones(2, 3);
    report = validate_abstract(sys);
    REQUIRE_FALSE(report.empty());
    CHECK(report.front().invariant == "shape");
}

// ---------------------------------------------------------------------------
// fundamental solutions
// ---------------------------------------------------------------------------

TEST_CASE("without reaction terms both fundamental solutions are the identity", "[fundamental]") {
    for (const HyperbolicSystem& sys : {transport_system(), saint_venant_system()}) {
        const FundamentalSolution phi = integrate_phi(sys);
        const FundamentalSolution psi = integrate_psi(sys);
        const Matrix id = Matrix::Identity(sys.n, sys.n);
        for (std::size_t k = 0; k < phi.samples.size(); ++k) {
            CHECK(max_abs(phi.samples[k] - id) <= 1e-13);
            CHECK(max_abs(psi.samples[k] - id) <= 1e-13);
        }
        CHECK(psi.sup_norm == Approx(1.0).margin(1e-13));
        CHECK(phi.samples.front() == id);
        CHECK(psi.samples.front() == id);
    }
}

TEST_CASE("scalar fundamental solutions match the exponential", "[fundamental]") {
    for (double lambda : {-1.3, -0.2, 0.5, 2.0}) {
        const HyperbolicSystem sys = scalar_system(1.0, lambda);
        // Steady states of phi_s + lambda phi = 0 decay like exp(-lambda s).
        CHECK(integrate_phi(sys, 1000).at_one(0, 0) == Approx(std::exp(-lambda)).margin(1e-10));
        CHECK(integrate_psi(sys, 1000).at_one(0, 0) == Approx(std::exp(lambda)).margin(1e-10));
    }
    // A negative speed reverses the spatial rate.
    const HyperbolicSystem back = scalar_system(-2.0, 0.6);
    CHECK(integrate_phi(back).at_one(0, 0) == Approx(std::exp(0.3)).margin(1e-10));
}

TEST_CASE("Phi(s) phi0 is a steady state of the transport operator", "[fundamental]") {
    const HyperbolicSystem sys = smooth_system();
    const FundamentalSolution phi = integrate_phi(sys, 2000);
    const double h = 1.0 / phi.steps();
    for (int k = 100; k < phi.steps(); k += 300) {
        const double s = k * h;
        const CoefficientSample c = eval_coefficients(sys, s);
        const Matrix dphi = (phi.samples[k + 1] - phi.samples[k - 1]) / (2.0 * h);
        CHECK(max_abs(c.lambda0 * dphi + c.lambda1 * phi.samples[k]) <= 1e-4);
    }
}

TEST_CASE("Psi Lambda0 Phi is constant along the domain", "[fundamental]") {
    const HyperbolicSystem sys = smooth_system(2001);
    const FundamentalSolution phi = integrate_phi(sys);
    const FundamentalSolution psi = integrate_psi(sys);
    const Matrix l0 = eval_coefficients(sys, 0.0).lambda0;
    for (int k = 0; k <= phi.steps(); k += 50) {
        const double s = static_cast<double>(k) / phi.steps();
        const Matrix inv = psi.samples[k] * eval_coefficients(sys, s).lambda0 * phi.samples[k];
        CHECK(max_abs(inv - l0) <= 1e-5);
    }
}

TEST_CASE("fundamental solution self-converges under step refinement", "[fundamental]") {
    const HyperbolicSystem sys = smooth_system();
    CHECK(max_abs(integrate_phi(sys, 200).at_one - integrate_phi(sys, 1600).at_one) <= 1e-6);
    CHECK(max_abs(integrate_psi(sys, 200).at_one - integrate_psi(sys, 1600).at_one) <= 1e-6);
}

TEST_CASE("restarting at the midpoint reproduces the direct integration", "[fundamental]") {
    for (double lambda : {-0.7, 1.1}) {
        const HyperbolicSystem sys = scalar_system(1.0, lambda);
        const Matrix id = Matrix::Identity(1, 1);
        const FundamentalSolution direct = propagate_phi(sys, 0.0, 1.0, 1000, id);
        const FundamentalSolution half = propagate_phi(sys, 0.0, 0.5, 500, id);
        const FundamentalSolution rest = propagate_phi(sys, 0.5, 1.0, 500, half.at_one);
        CHECK(max_abs(rest.at_one - direct.at_one) <= 1e-9);

        const FundamentalSolution pdirect = propagate_psi(sys, 0.0, 1.0, 1000, id);
        const FundamentalSolution phalf = propagate_psi(sys, 0.0, 0.5, 500, id);
        const FundamentalSolution prest = propagate_psi(sys, 0.5, 1.0, 500, phalf.at_one);
        CHECK(max_abs(prest.at_one - pdirect.at_one) <= 1e-9);
    }
}

TEST_CASE("determinant of Phi follows the trace formula", "[fundamental]") {
    const HyperbolicSystem sys = smooth_system(4001);
    const FundamentalSolution phi = integrate_phi(sys);
    // det Phi(s) = exp(-int_0^s tr(Lambda0^-1 Lambda1)).
    double integral = 0.0;
    const int n = 4000;
    for (int k = 0; k <= n; ++k) {
        const CoefficientSample c = eval_coefficients(sys, static_cast<double>(k) / n);
        const double tr = (c.lambda0.diagonal().cwiseInverse().asDiagonal() * c.lambda1).trace();
        integral += (k == 0 || k == n ? 0.5 : 1.0) * tr / n;
    }
    CHECK(phi.at_one.determinant() == Approx(std::exp(-integral)).epsilon(1e-6));
    for (const Matrix& s : phi.samples)
        CHECK(std::abs(s.determinant()) > 1e-12 * std::max(1.0, max_abs(s)));
}

TEST_CASE("too few integration steps are rejected", "[fundamental]") {
    CHECK_THROWS_AS(integrate_phi(transport_system(), 9), ConfigError);
    CHECK_THROWS_AS(integrate_psi(transport_system(), 0), ConfigError);
}

TEST_CASE("block splits follow the boundary structure", "[fundamental]") {
    const HyperbolicSystem sv = saint_venant_system({1.0, 1.0, 0.3, -0.7, 1.0, 1.0});
    const BlockSplit id = split_blocks(sv, Matrix::Identity(2, 2));
    CHECK(id.phi_plus == Matrix::Identity(2, 2));
    CHECK(id.phi_minus == Matrix::Identity(2, 2));
    Matrix kp(2, 2), km(2, 2);
    kp << 1.0, 0.0, -0.7, 0.0;
    km << 0.0, 0.3, 0.0, 1.0;
    CHECK(id.k_plus == kp);
    CHECK(id.k_minus == km);

    const BlockSplit tr = split_blocks(transport_system(), Matrix::Identity(1, 1));
    CHECK(tr.k_plus(0, 0) == 1.0);
    CHECK(tr.k_minus(0, 0) == 0.0);

    Matrix phi1(2, 2);
    phi1 << 2.0, 3.0, 5.0, 7.0;
    const BlockSplit b = split_blocks(sv, phi1);
    Matrix plus(2, 2), minus(2, 2);
    plus << 2.0, 3.0, 0.0, 1.0;
    minus << 1.0, 0.0, 5.0, 7.0;
    CHECK(b.phi_plus == plus);
    CHECK(b.phi_minus == minus);
}

TEST_CASE("zero speed inside the integrator is a coefficient error", "[fundamental]") {
    HyperbolicSystem sys = transport_system();
    Matrix samples = Matrix::Ones(kDefaultGridPoints, 1);
    samples(100, 0) = 0.0;
    sys.lambda0 = CoefficientField(samples);
    sys.lambda1 = CoefficientField::constant(Vector::Constant(1, 0.5));
    CHECK_THROWS_AS(integrate_phi(sys, 200), CoefficientError);
}
