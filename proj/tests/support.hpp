#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "pwlmdp/pwl.hpp"
#include "pwlmdp/rng.hpp"

namespace testing {

/// Random, possibly discontinuous PWL function with values in [lo, hi].
inline pwlmdp::PwlFunction random_pwl(pwlmdp::Rng& rng, int pieces, double lo = 0.0, double hi = 1.0,
                                      bool continuous = false) {
    std::vector<double> xs{0.0, 1.0};
    while (static_cast<int>(xs.size()) < pieces + 1) {
        const double x = rng.uniform();
        if (std::none_of(xs.begin(), xs.end(), [&](double y) { return std::abs(x - y) < 1e-6; })) xs.push_back(x);
    }
    std::sort(xs.begin(), xs.end());
    std::vector<double> slopes, intercepts;
    double carry = rng.uniform(lo, hi);
    for (int i = 0; i < pieces; ++i) {
        const double y0 = continuous ? carry : rng.uniform(lo, hi);
        const double y1 = rng.uniform(lo, hi);
        carry = y1;
        const double a = (y1 - y0) / (xs[i + 1] - xs[i]);
        slopes.push_back(a);
        intercepts.push_back(y0 - a * xs[i]);
    }
    return pwlmdp::PwlFunction(xs, slopes, intercepts);
}

inline bool near_any(double s, std::span<const double> points, double eps) {
    auto it = std::lower_bound(points.begin(), points.end(), s);
    if (it != points.end() && *it - s < eps) return true;
    if (it != points.begin() && s - *(it - 1) < eps) return true;
    return false;
}

inline bool near_breakpoint(const pwlmdp::PwlFunction& f, double s, double eps = 1e-12) {
    return near_any(s, f.breakpoints(), eps);
}

}  // namespace testing
