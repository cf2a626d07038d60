#pragma once

#include <cmath>
#include <functional>
#include <optional>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "fwdreg/errors.hpp"
#include "fwdreg/linalg.hpp"

namespace fwdreg {

inline constexpr int kDefaultGridPoints = 201;

/// A vector-valued function on [0, 1] stored as samples on a uniform grid.
///
/// Values between nodes are linearly interpolated. The derivative is taken
/// from nodal finite differences (centered inside, one-sided at the ends),
/// themselves interpolated, unless an analytic derivative hook is attached.
class CoefficientField {
public:
    using Function = std::function<Vector(double)>;

    CoefficientField() = default;

    /// `samples` has one row per grid node and one column per component.
    explicit CoefficientField(Matrix samples, Function derivative = {})
        : samples_(std::move(samples)), derivative_hook_(std::move(derivative)) {
        if (samples_.rows() < 2)
            throw ConfigError("coefficient field needs at least 2 grid points");
        build_nodal_derivative();
    }

    static CoefficientField constant(const Vector& value, int grid_points = kDefaultGridPoints) {
        Matrix s(grid_points, value.size());
        for (int k = 0; k < grid_points; ++k)
            s.row(k) = value.transpose();
        return CoefficientField(std::move(s));
    }

    static CoefficientField from_function(const Function& f, Eigen::Index width,
                                          int grid_points = kDefaultGridPoints,
                                          Function derivative = {}) {
        if (grid_points < 2)
            throw ConfigError("coefficient field needs at least 2 grid points");
        Matrix s(grid_points, width);
        for (int k = 0; k < grid_points; ++k) {
            const Vector v = f(static_cast<double>(k) / (grid_points - 1));
            if (v.size() != width)
                throw ConfigError("coefficient function returned the wrong width");
            s.row(k) = v.transpose();
        }
        return CoefficientField(std::move(s), std::move(derivative));
    }

    /// Piecewise-linear function through (s, value) knots, resampled onto the
    /// uniform grid. Knots must be strictly increasing and cover [0, 1].
    static CoefficientField from_knots(const std::vector<std::pair<double, Vector>>& knots,
                                       int grid_points = kDefaultGridPoints) {
        if (knots.size() < 2)
            throw ConfigError("sampled coefficient needs at least two knots");
        for (std::size_t i = 1; i < knots.size(); ++i)
            if (!(knots[i].first > knots[i - 1].first))
                throw ConfigError("sample abscissae must be strictly increasing");
        if (knots.front().first > 0.0 || knots.back().first < 1.0)
            throw ConfigError("sample abscissae must cover [0, 1]");
        const Eigen::Index width = knots.front().second.size();
        for (const auto& [s, v] : knots)
            if (v.size() != width)
                throw ConfigError("sampled coefficient rows have inconsistent widths");
        auto f = [&knots](double s) -> Vector {
            std::size_t i = 1;
            while (i + 1 < knots.size() && knots[i].first < s)
                ++i;
            const auto& [s0, v0] = knots[i - 1];
            const auto& [s1, v1] = knots[i];
            const double t = (s - s0) / (s1 - s0);
            return (1.0 - t) * v0 + t * v1;
        };
        return from_function(f, width, grid_points);
    }

    int grid_points() const { return static_cast<int>(samples_.rows()); }
    Eigen::Index width() const { return samples_.cols(); }
    double spacing() const { return 1.0 / (grid_points() - 1); }
    double node(int k) const { return static_cast<double>(k) / (grid_points() - 1); }
    const Matrix& samples() const { return samples_; }
    Vector sample(int k) const { return samples_.row(k).transpose(); }
    bool has_analytic_derivative() const { return static_cast<bool>(derivative_hook_); }

    Vector value(double s) const { return interpolate(samples_, s); }

    Vector derivative(double s) const {
        if (derivative_hook_)
            return derivative_hook_(s);
        return interpolate(nodal_derivative_, s);
    }

    /// Derivative at a grid node (finite differences, or the hook at that node).
    Vector nodal_derivative(int k) const {
        if (derivative_hook_)
            return derivative_hook_(node(k));
        return nodal_derivative_.row(k).transpose();
    }

private:
    Vector interpolate(const Matrix& table, double s) const {
        const int last = grid_points() - 1;
        const double x = s * last;
        int k = static_cast<int>(std::floor(x));
        k = std::clamp(k, 0, last - 1);
        const double t = x - k;
        if (t == 0.0)
            return table.row(k).transpose();
        if (t == 1.0)
            return table.row(k + 1).transpose();
        return ((1.0 - t) * table.row(k) + t * table.row(k + 1)).transpose();
    }

    void build_nodal_derivative() {
        const int g = grid_points();
        const double h = spacing();
        nodal_derivative_.resize(g, width());
        nodal_derivative_.row(0) = (samples_.row(1) - samples_.row(0)) / h;
        nodal_derivative_.row(g - 1) = (samples_.row(g - 1) - samples_.row(g - 2)) / h;
        for (int k = 1; k + 1 < g; ++k)
            nodal_derivative_.row(k) = (samples_.row(k + 1) - samples_.row(k - 1)) / (2.0 * h);
    }

    Matrix samples_;
    Matrix nodal_derivative_;
    Function derivative_hook_;
};

/// One-dimensional n x n hyperbolic system with boundary input and output.
///
///   phi_t + Lambda0(s) phi_s + Lambda1(s) phi = 0,  s in (0, 1)
///   [phi+(t,0); phi-(t,1)] = K [phi+(t,1); phi-(t,0)] + B u + w_b
///   y = L1 [phi+(t,0); phi-(t,1)] + L2 [phi+(t,1); phi-(t,0)] + w_y
///
/// The first `ell` components travel rightwards (positive speed).
struct HyperbolicSystem {
    int n = 0;
    int ell = 0;
    int m = 0;
    CoefficientField lambda0; // width n, diagonal entries of Lambda0
    CoefficientField lambda1; // width n*n, row-major Lambda1
    Matrix K;                 // n x n
    Matrix B;                 // n x m
    Matrix L1;                // m x n
    Matrix L2;                // m x n

    int grid_points() const { return lambda0.grid_points(); }
    int negative_count() const { return n - ell; }
};

struct CoefficientSample {
    Matrix lambda0;
    Matrix lambda1;
    Matrix dlambda0;
};

inline Matrix unflatten_square(const Vector& flat, int n) {
    Matrix out(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            out(i, j) = flat(i * n + j);
    return out;
}

/// Lambda0(s), Lambda1(s) and dLambda0/ds(s) at a point of [0, 1].
inline CoefficientSample eval_coefficients(const HyperbolicSystem& sys, double s) {
    if (!(s >= 0.0 && s <= 1.0))
        throw std::domain_error("coefficient evaluation outside [0, 1]: s = " + std::to_string(s));
    CoefficientSample out;
    out.lambda0 = sys.lambda0.value(s).asDiagonal();
    out.lambda1 = unflatten_square(sys.lambda1.value(s), sys.n);
    out.dlambda0 = sys.lambda0.derivative(s).asDiagonal();
    return out;
}

struct Violation {
    std::string invariant;
    std::string detail;
    int grid_index = -1;
};

namespace detail {
inline std::string shape_string(const Matrix& a) {
    return std::to_string(a.rows()) + "x" + std::to_string(a.cols());
}
} // namespace detail

/// Lists every violated structural invariant; an empty list means the system is valid.
inline std::vector<Violation> validate_hyperbolic(const HyperbolicSystem& sys) {
    std::vector<Violation> out;
    auto add = [&out](std::string inv, std::string what, int idx = -1) {
        out.push_back({std::move(inv), std::move(what), idx});
    };

    if (sys.n <= 0)
        add("dimensions", "n must be positive");
    if (sys.m <= 0)
        add("dimensions", "m must be positive");
    if (sys.ell < 0 || sys.ell > sys.n)
        add("dimensions", "ell must lie in [0, n]");
    if (!out.empty())
        return out;

    if (sys.lambda0.grid_points() < 2)
        add("grid", "lambda0 needs at least 2 grid points");
    if (sys.lambda0.width() != sys.n)
        add("shape", "lambda0 must have n = " + std::to_string(sys.n) + " diagonal entries");
    if (sys.lambda1.width() != static_cast<Eigen::Index>(sys.n) * sys.n)
        add("shape", "lambda1 must have n*n entries");
    if (sys.lambda1.grid_points() != sys.lambda0.grid_points())
        add("grid", "lambda0 and lambda1 must share one grid");
    if (sys.K.rows() != sys.n || sys.K.cols() != sys.n)
        add("shape", "K is " + detail::shape_string(sys.K) + ", expected n x n");
    if (sys.B.rows() != sys.n || sys.B.cols() != sys.m)
        add("shape", "B is " + detail::shape_string(sys.B) + ", expected n x m");
    if (sys.L1.rows() != sys.m || sys.L1.cols() != sys.n)
        add("shape", "L1 is " + detail::shape_string(sys.L1) + ", expected m x n");
    if (sys.L2.rows() != sys.m || sys.L2.cols() != sys.n)
        add("shape", "L2 is " + detail::shape_string(sys.L2) + ", expected m x n");
    if (!out.empty())
        return out;

    for (const auto& [name, mat] : {std::pair{"K", &sys.K}, std::pair{"B", &sys.B},
                                    std::pair{"L1", &sys.L1}, std::pair{"L2", &sys.L2}})
        if (!mat->allFinite())
            add("finite", std::string(name) + " has non-finite entries");

    const Matrix& l0 = sys.lambda0.samples();
    const Matrix& l1 = sys.lambda1.samples();
    for (int k = 0; k < sys.grid_points(); ++k) {
        if (!l0.row(k).allFinite() || !l1.row(k).allFinite()) {
            add("finite", "non-finite coefficient sample", k);
            continue;
        }
        for (int i = 0; i < sys.n; ++i) {
            const double lam = l0(k, i);
            const bool ok = i < sys.ell ? lam > 0.0 : lam < 0.0;
            if (!ok) {
                std::ostringstream msg;
                msg << "lambda_" << (i + 1) << " = " << lam << " must be "
                    << (i < sys.ell ? "positive" : "negative") << " (ell = " << sys.ell << ")";
                add("sign_pattern", msg.str(), k);
            }
        }
    }
    return out;
}

/// Unknown constant disturbances and the reference for one regulation run.
struct DisturbanceScenario {
    Vector w_b;                   // boundary disturbance, size n
    Vector w_y;                   // output disturbance, size m
    Vector y_ref;                 // reference, size m
    std::optional<Matrix> w_dist; // distributed disturbance (abstract case only)

    static DisturbanceScenario zero(int n, int m) {
        return {Vector::Zero(n), Vector::Zero(m), Vector::Zero(m), std::nullopt};
    }
};

inline void check_scenario(const DisturbanceScenario& sc, int n, int m) {
    if (sc.w_b.size() != n)
        throw ConfigError("scenario w_b must have " + std::to_string(n) + " entries");
    if (sc.w_y.size() != m || sc.y_ref.size() != m)
        throw ConfigError("scenario w_y and y_ref must have " + std::to_string(m) + " entries");
    if (!sc.w_b.allFinite() || !sc.w_y.allFinite() || !sc.y_ref.allFinite())
        throw ConfigError("scenario entries must be finite");
    if (sc.w_dist && !sc.w_dist->allFinite())
        throw ConfigError("distributed disturbance must be finite");
}

/// Diagonal spatial weight P(s) of the quadratic functional int phi^T P phi ds.
///
/// Member of the family P_i(s) = (p_i / |lambda_i(s)|) exp(-mu int_0^s dr / lambda_i(r)),
/// for which (P_i lambda_i)_s = -mu P_i holds exactly.
struct LyapunovWeight {
    double mu = 0.0;
    Vector weights;  // p_i > 0
    Matrix samples;  // grid_points x n, diagonal of P at each node
    Matrix flux_derivative; // grid_points x n, (P_i lambda_i)_s at each node
    double P_lower = 0.0;
    double P_upper = 0.0;
    double S_margin = 0.0;

    Eigen::Index n() const { return samples.cols(); }
    int grid_points() const { return static_cast<int>(samples.rows()); }

    Vector diagonal(double s) const {
        const int last = grid_points() - 1;
        const double x = std::clamp(s, 0.0, 1.0) * last;
        const int k = std::clamp(static_cast<int>(std::floor(x)), 0, last - 1);
        const double t = x - k;
        return ((1.0 - t) * samples.row(k) + t * samples.row(k + 1)).transpose();
    }
};

/// Builds the weight for given (mu, p) on the system grid.
inline LyapunovWeight make_weight(const HyperbolicSystem& sys, double mu, const Vector& p) {
    const int g = sys.grid_points();
    const double h = sys.lambda0.spacing();
    const Matrix& lam = sys.lambda0.samples();
    LyapunovWeight w;
    w.mu = mu;
    w.weights = p;
    w.samples.resize(g, sys.n);
    w.flux_derivative.resize(g, sys.n);
    for (int i = 0; i < sys.n; ++i) {
        double travel = 0.0; // int_0^s dr / lambda_i(r), trapezoid
        for (int k = 0; k < g; ++k) {
            if (k > 0)
                travel += 0.5 * h * (1.0 / lam(k - 1, i) + 1.0 / lam(k, i));
            const double pk = p(i) / std::abs(lam(k, i)) * std::exp(-mu * travel);
            w.samples(k, i) = pk;
            w.flux_derivative(k, i) = -mu * pk;
        }
    }
    w.P_lower = w.samples.minCoeff();
    w.P_upper = w.samples.maxCoeff();
    return w;
}

/// Finite-dimensional plant phi' = A phi + B u + w, y = C phi.
struct AbstractLinearSystem {
    Matrix A; // N x N
    Matrix B; // N x m
    Matrix C; // m x N

    Eigen::Index N() const { return A.rows(); }
    Eigen::Index m() const { return B.cols(); }
};

inline std::vector<Violation> validate_abstract(const AbstractLinearSystem& sys) {
    std::vector<Violation> out;
    if (sys.A.rows() == 0 || sys.A.rows() != sys.A.cols())
        out.push_back({"shape", "A must be square and non-empty"});
    if (sys.B.rows() != sys.A.rows())
        out.push_back({"shape", "B must have N rows"});
    if (sys.C.cols() != sys.A.rows() || sys.C.rows() != sys.B.cols())
        out.push_back({"shape", "C must be m x N"});
    if (!out.empty())
        return out;
    if (!sys.A.allFinite() || !sys.B.allFinite() || !sys.C.allFinite())
        out.push_back({"finite", "non-finite entries"});
    else if (spectral_abscissa(sys.A) >= -1e-12)
        out.push_back({"hurwitz", "A has an eigenvalue with nonnegative real part"});
    return out;
}

} // namespace fwdreg
