#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pwlmdp/policy.hpp"

namespace pwlmdp {

/// Thrown when a query point or an input leaves the unit interval.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Thrown when an inner function maps outside [0,1] during composition.
class RangeError : public std::range_error {
public:
    using std::range_error::range_error;
};

/// Merge tolerances used by simplify. Slope tolerance is relative to max(1,|a|).
struct Tolerances {
    double slope = 1e-9;
    double value = 1e-9;
    double min_len = 1e-12;
};

inline constexpr Tolerances kCanonical{};

/// Slack allowed when checking that an inner function stays inside [0,1].
inline constexpr double kRangeSlack = 1e-12;

/// Slope differences below this are treated as parallel when intersecting pieces.
inline constexpr double kParallelSlope = 1e-12;

/**
 * Possibly discontinuous piecewise-linear function on [0,1].
 *
 * Piece i covers [x_i, x_{i+1}) and evaluates to slopes[i]*s + intercepts[i]
 * in global coordinates. The value at s = 1 is the right limit of the last
 * piece. Instances are immutable once constructed.
 */
class PwlFunction {
public:
    /// Validates: x_0 = 0, x_m = 1, strictly ascending, m >= 1, finite coefficients.
    PwlFunction(std::vector<double> breakpoints, std::vector<double> slopes,
                std::vector<double> intercepts);

    static PwlFunction constant(double c);
    static PwlFunction linear(double slope, double intercept);

    /// Continuous interpolant through (xs[i], ys[i]); xs must start at 0 and end at 1.
    static PwlFunction interpolate(std::span<const double> xs, std::span<const double> ys);

    /// Step function taking values[i] on [xs[i], xs[i+1]).
    static PwlFunction step(std::span<const double> xs, std::span<const double> values);

    double operator()(double s) const;

    std::size_t piece_count() const { return slopes_.size(); }
    std::size_t piece_index(double s) const;

    std::span<const double> breakpoints() const { return breakpoints_; }
    std::span<const double> slopes() const { return slopes_; }
    std::span<const double> intercepts() const { return intercepts_; }

    /// Value of piece i at its left end and its limit at the right end.
    double left_value(std::size_t i) const { return slopes_[i] * breakpoints_[i] + intercepts_[i]; }
    double right_limit(std::size_t i) const { return slopes_[i] * breakpoints_[i + 1] + intercepts_[i]; }

    bool operator==(const PwlFunction&) const = default;

private:
    std::vector<double> breakpoints_;
    std::vector<double> slopes_;
    std::vector<double> intercepts_;
};

double eval(const PwlFunction& f, double s);

/// Exact representation of s -> outer(inner(s)). Throws RangeError if inner leaves [0,1].
PwlFunction compose(const PwlFunction& outer, const PwlFunction& inner);

PwlFunction pointwise_max(const PwlFunction& f, const PwlFunction& g);

/// alpha*f + beta*g on the merged breakpoint set.
PwlFunction affine_combine(const PwlFunction& f, const PwlFunction& g, double alpha, double beta);

PwlFunction simplify(const PwlFunction& f, double slope_tol, double value_tol, double min_len);
PwlFunction simplify(const PwlFunction& f, const Tolerances& tol = kCanonical);

/// Number of maximal linear pieces; callers pass simplified functions.
std::size_t piece_count(const PwlFunction& f);

/// Exact integral over [0,1].
double integrate(const PwlFunction& f);

/// max |f| over [0,1], taken over piece endpoints and right limits.
double sup_norm(const PwlFunction& f);

/// Largest |slope| over all pieces.
double max_abs_slope(const PwlFunction& f);

/**
 * Pointwise argmax over actions.
 *
 * Returns the greedy policy (ties go to the lowest index, merged) and the
 * pointwise maximum, simplified under canonical tolerances.
 */
std::pair<PiecewisePolicy, PwlFunction> argmax_select(std::span<const PwlFunction> q_per_action);

/// Function equal to per_action[policy(s)] at every s.
PwlFunction splice(const PiecewisePolicy& policy, std::span<const PwlFunction> per_action);

/// Largest jump |left limit - right value| across interior breakpoints.
double max_jump(const PwlFunction& f);

nlohmann::json to_json(const PwlFunction& f);
PwlFunction pwl_from_json(const nlohmann::json& j);

}  // namespace pwlmdp
