#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"

#include "fwdreg/errors.hpp"
#include "fwdreg/gain_design.hpp"
#include "fwdreg/linalg.hpp"
#include "fwdreg/model.hpp"
#include "fwdreg/trajectory.hpp"

namespace fwdreg::io {

using json = nlohmann::json;

inline constexpr int kSignificantDigits = 9;

inline std::string format_number(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", kSignificantDigits, v);
    return buf;
}

/// v rounded to 9 significant digits, so that JSON output carries exactly those digits.
inline double round_sig(double v) {
    if (!std::isfinite(v))
        return v;
    return std::stod(format_number(v));
}

inline json to_json(double v) {
    if (!std::isfinite(v))
        return nullptr;
    return round_sig(v);
}

inline json to_json(const Vector& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i)
        out.push_back(to_json(v(i)));
    return out;
}

inline json to_json(const Matrix& a) {
    json out = json::array();
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        out.push_back(to_json(Vector(a.row(i).transpose())));
    return out;
}

// ---------------------------------------------------------------------------
// Reading
// ---------------------------------------------------------------------------

inline json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

inline const json& require(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key))
        throw ConfigError(std::string("missing key \"") + key + "\"");
    return j.at(key);
}

inline double as_number(const json& j, const std::string& what) {
    if (!j.is_number())
        throw ConfigError(what + " must be a number");
    return j.get<double>();
}

inline Vector vector_from_json(const json& j, const std::string& what) {
    if (!j.is_array())
        throw ConfigError(what + " must be an array");
    Vector v(static_cast<Eigen::Index>(j.size()));
    for (std::size_t i = 0; i < j.size(); ++i)
        v(static_cast<Eigen::Index>(i)) = as_number(j[i], what);
    return v;
}

inline Matrix matrix_from_json(const json& j, const std::string& what) {
    if (!j.is_array() || j.empty())
        throw ConfigError(what + " must be a non-empty array of rows");
    // A flat array is accepted as a single row.
    if (!j.front().is_array())
        return vector_from_json(j, what).transpose();
    const std::size_t cols = j.front().size();
    Matrix a(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_array() || j[i].size() != cols)
            throw ConfigError(what + " has ragged rows");
        a.row(static_cast<Eigen::Index>(i)) = vector_from_json(j[i], what).transpose();
    }
    return a;
}

inline int int_from_json(const json& j, const std::string& what) {
    if (!j.is_number_integer())
        throw ConfigError(what + " must be an integer");
    return j.get<int>();
}

/// {"constant": [...]} or {"samples": [[s, v...], ...]}.
inline CoefficientField coefficient_from_json(const json& j, Eigen::Index width, int grid_points,
                                              const std::string& what) {
    if (j.is_object() && j.contains("constant")) {
        const Vector v = vector_from_json(j.at("constant"), what);
        if (v.size() != width)
            throw ConfigError(what + " constant must have " + std::to_string(width) + " entries");
        return CoefficientField::constant(v, grid_points);
    }
    if (j.is_object() && j.contains("samples")) {
        const json& rows = j.at("samples");
        if (!rows.is_array())
            throw ConfigError(what + " samples must be an array");
        std::vector<std::pair<double, Vector>> knots;
        for (const auto& row : rows) {
            const Vector r = vector_from_json(row, what);
            if (r.size() != width + 1)
                throw ConfigError(what + " sample rows must be [s, " + std::to_string(width) + " values]");
            knots.emplace_back(r(0), r.tail(width));
        }
        return CoefficientField::from_knots(knots, grid_points);
    }
    throw ConfigError(what + " must be {\"constant\": [...]} or {\"samples\": [...]}");
}

inline HyperbolicSystem system_from_json(const json& j) {
    HyperbolicSystem sys;
    sys.n = int_from_json(require(j, "n"), "n");
    sys.ell = int_from_json(require(j, "ell"), "ell");
    sys.m = int_from_json(require(j, "m"), "m");
    if (sys.n <= 0 || sys.m <= 0 || sys.ell < 0 || sys.ell > sys.n)
        throw ConfigError("dimensions must satisfy n > 0, m > 0, 0 <= ell <= n");
    const int grid = j.contains("grid_points") ? int_from_json(j.at("grid_points"), "grid_points") : kDefaultGridPoints;
    if (grid < 2)
        throw ConfigError("grid_points must be at least 2");
    sys.lambda0 = coefficient_from_json(require(j, "lambda0"), sys.n, grid, "lambda0");
    sys.lambda1 = coefficient_from_json(require(j, "lambda1"), static_cast<Eigen::Index>(sys.n) * sys.n, grid,
                                        "lambda1");
    sys.K = matrix_from_json(require(j, "K"), "K");
    sys.B = matrix_from_json(require(j, "B"), "B");
    sys.L1 = matrix_from_json(require(j, "L1"), "L1");
    sys.L2 = matrix_from_json(require(j, "L2"), "L2");
    if (const auto v = validate_hyperbolic(sys); !v.empty()) {
        std::ostringstream msg;
        msg << "invalid system: " << v.front().invariant << ": " << v.front().detail;
        if (v.front().grid_index >= 0)
            msg << " (grid index " << v.front().grid_index << ")";
        throw ConfigError(msg.str());
    }
    return sys;
}

/// Reads the "scenario" member if present, else the top level; missing entries are zero.
inline DisturbanceScenario scenario_from_json(const json& j, int n, int m) {
    const json& s = j.is_object() && j.contains("scenario") ? j.at("scenario") : j;
    DisturbanceScenario sc = DisturbanceScenario::zero(n, m);
    if (s.is_object()) {
        if (s.contains("w_b"))
            sc.w_b = vector_from_json(s.at("w_b"), "w_b");
        if (s.contains("w_y"))
            sc.w_y = vector_from_json(s.at("w_y"), "w_y");
        if (s.contains("y_ref"))
            sc.y_ref = vector_from_json(s.at("y_ref"), "y_ref");
    }
    check_scenario(sc, n, m);
    return sc;
}

inline HyperbolicSystem load_system(const std::filesystem::path& path) {
    try {
        return system_from_json(read_json_file(path));
    } catch (const json::exception& e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

inline Matrix read_csv_matrix(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot open " + path.string());
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            try {
                std::size_t used = 0;
                row.push_back(std::stod(cell, &used));
                if (cell.find_first_not_of(" \t\r", used) != std::string::npos)
                    throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw ConfigError(path.string() + ": not a number: \"" + cell + "\"");
            }
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw ConfigError(path.string() + ": ragged rows");
        rows.push_back(std::move(row));
    }
    if (rows.empty())
        throw ConfigError(path.string() + ": empty matrix");
    Matrix a(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t k = 0; k < rows[i].size(); ++k)
            a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = rows[i][k];
    return a;
}

// ---------------------------------------------------------------------------
// Certificates
// ---------------------------------------------------------------------------

inline json certificate_to_json(const GainCertificate& c) {
    json j;
    j["Ki"] = to_json(c.Ki);
    j["ki_star"] = to_json(c.ki_star);
    j["ki"] = to_json(c.ki);
    j["within_bound"] = c.within_bound;
    j["p_max"] = to_json(c.p_max);
    j["p"] = to_json(c.p);
    j["mu_e"] = to_json(c.mu_e);
    j["psi_bar"] = to_json(c.psi_bar);
    j["norm_M"] = to_json(c.norm_M);
    j["norm_Ki"] = to_json(c.norm_Ki);
    j["rank"] = {
        {"T1", to_json(c.rank.t1)},
        {"T2", to_json(c.rank.t2)},
        {"M", to_json(c.rank.m_matrix)},
        {"cond_inner1", to_json(c.rank.cond_inner1)},
        {"cond_inner2", to_json(c.rank.cond_inner2)},
        {"cond_T1", to_json(c.rank.cond_t1)},
        {"cond_T2", to_json(c.rank.cond_t2)},
        {"passes_rank1", c.rank.passes_rank1},
        {"passes_rank2", c.rank.passes_rank2},
    };
    j["iss"] = {
        {"mu", to_json(c.iss.weight.mu)},
        {"weights", to_json(c.iss.weight.weights)},
        {"P_lower", to_json(c.iss.weight.P_lower)},
        {"P_upper", to_json(c.iss.weight.P_upper)},
        {"S_margin", to_json(c.iss.weight.S_margin)},
        {"c", to_json(c.iss.c)},
        {"S", to_json(c.iss.S)},
        {"Q", to_json(c.iss.Q)},
        {"R", to_json(c.iss.R)},
        {"interior_margin", to_json(c.iss.interior_margin)},
        {"valid", c.iss.valid},
    };
    return j;
}

/// Rebuilds a certificate for `sys` from its JSON form. The rank report and the
/// Lyapunov weight are recomputed from the system; gains come from the file.
inline GainCertificate certificate_from_json(const json& j, const HyperbolicSystem& sys,
                                             int ode_steps = kDefaultOdeSteps) {
    try {
        GainCertificate c;
        c.Ki = matrix_from_json(require(j, "Ki"), "Ki");
        if (c.Ki.rows() != sys.m || c.Ki.cols() != sys.m)
            throw ConfigError("certificate Ki does not match the system (m = " + std::to_string(sys.m) + ")");
        c.ki_star = as_number(require(j, "ki_star"), "ki_star");
        c.ki = as_number(require(j, "ki"), "ki");
        c.p_max = as_number(require(j, "p_max"), "p_max");
        c.p = as_number(require(j, "p"), "p");
        c.mu_e = as_number(require(j, "mu_e"), "mu_e");
        c.within_bound = c.ki > 0.0 && c.ki < c.ki_star;
        const json& iss = require(j, "iss");
        const double mu = as_number(require(iss, "mu"), "iss.mu");
        const Vector weights = vector_from_json(require(iss, "weights"), "iss.weights");
        if (weights.size() != sys.n)
            throw ConfigError("certificate weights do not match the system (n = " + std::to_string(sys.n) + ")");

        const FundamentalSolution phi = integrate_phi(sys, ode_steps);
        const FundamentalSolution psi = integrate_psi(sys, ode_steps);
        c.rank = rank_report(sys, phi, psi);
        if (!c.rank.passes_rank1 || !c.rank.passes_rank2)
            throw AssumptionError("rank_condition", "system fails a rank condition");
        c.psi_bar = psi.sup_norm;
        c.norm_M = spectral_norm(c.rank.m_matrix);
        c.norm_Ki = spectral_norm(c.Ki);
        c.iss = evaluate_weight(sys, mu, weights);
        return c;
    } catch (const json::exception& e) {
        throw ConfigError(std::string("malformed certificate: ") + e.what());
    }
}

// ---------------------------------------------------------------------------
// Output files
// ---------------------------------------------------------------------------

/// Writes `text` to `path` through a temporary file, so a failed run leaves no partial output.
inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out)
            throw ConfigError("cannot write " + path.string());
        out << text;
        if (!out)
            throw ConfigError("write failed for " + path.string());
    }
    std::filesystem::rename(tmp, path);
}

inline void write_json_file(const std::filesystem::path& path, const json& j) {
    write_text_file(path, j.dump(2) + "\n");
}

enum class HeaderStyle { Indexed, Compact };

/// t, y_1..y_m, z_1..z_m, [norm_phi,] V, Ve. The compact style writes y1 instead
/// of y_1 and leaves out norm_phi.
inline std::string trajectory_csv(const Trajectory& traj, HeaderStyle style = HeaderStyle::Indexed) {
    const Eigen::Index m = traj.y.empty() ? 0 : traj.y.front().size();
    const char* sep = style == HeaderStyle::Indexed ? "_" : "";
    std::ostringstream out;
    out << "t";
    for (Eigen::Index i = 1; i <= m; ++i)
        out << ",y" << sep << i;
    for (Eigen::Index i = 1; i <= m; ++i)
        out << ",z" << sep << i;
    if (style == HeaderStyle::Indexed)
        out << ",norm_phi";
    out << ",V,Ve\n";
    for (std::size_t k = 0; k < traj.frames(); ++k) {
        out << format_number(traj.times[k]);
        for (Eigen::Index i = 0; i < m; ++i)
            out << ',' << format_number(traj.y[k](i));
        for (Eigen::Index i = 0; i < m; ++i)
            out << ',' << format_number(traj.z[k](i));
        if (style == HeaderStyle::Indexed)
            out << ',' << format_number(traj.norm_phi[k]);
        out << ',' << format_number(traj.V[k]) << ',' << format_number(traj.Ve[k]) << '\n';
    }
    return out.str();
}

inline std::string matrix_text(const Matrix& a, const std::string& indent = "  ") {
    std::ostringstream out;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        out << indent;
        for (Eigen::Index k = 0; k < a.cols(); ++k)
            out << (k ? "  " : "") << format_number(a(i, k));
        out << '\n';
    }
    return out.str();
}

} // namespace fwdreg::io
