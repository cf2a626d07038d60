#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "fwdreg/linalg.hpp"

namespace fwdreg {

/// Recorded frames of a closed-loop run. All per-frame sequences share one length.
struct Trajectory {
    std::vector<double> times;
    std::vector<Matrix> states; // n x nodes per frame (hyperbolic runs only)
    std::vector<Vector> z;
    std::vector<Vector> y;
    std::vector<double> norm_phi;
    std::vector<double> V;
    std::vector<double> Ve;

    Matrix final_state;
    std::string scheme;
    double cfl = 0.0;
    double dt = 0.0;
    long steps = 0;
    double ki = 0.0;
    double p = 0.0;
    double mu_e = 0.0;
    bool gain_warning = false;

    std::size_t frames() const { return times.size(); }
};

/// Least-squares slope of log(values) against times over frames with t >= t_from,
/// negated: the fitted exponential decay rate.
inline double fit_decay_rate(const std::vector<double>& times, const std::vector<double>& values, double t_from,
                             double t_to) {
    double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
    int count = 0;
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (times[k] < t_from || times[k] > t_to || !(values[k] > 0.0))
            continue;
        const double x = times[k];
        const double y = std::log(values[k]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++count;
    }
    if (count < 2)
        return 0.0;
    const double denom = count * sxx - sx * sx;
    if (denom == 0.0)
        return 0.0;
    return -(count * sxy - sx * sy) / denom;
}

/// Number of frame-to-frame increases of `values` beyond the relative slack.
inline int count_increases(const std::vector<double>& values, double relative_slack) {
    int count = 0;
    for (std::size_t k = 0; k + 1 < values.size(); ++k)
        if (values[k + 1] > values[k] * (1.0 + relative_slack))
            ++count;
    return count;
}

} // namespace fwdreg
