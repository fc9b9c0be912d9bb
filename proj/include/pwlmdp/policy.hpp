#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <json.hpp>

namespace pwlmdp {

using Action = std::size_t;

/**
 * Piecewise-constant map from [0,1] to action indices.
 *
 * Intervals are right-open like PwlFunction pieces; s = 1 takes the action of
 * the last interval.
 */
class PiecewisePolicy {
public:
    PiecewisePolicy(std::vector<double> breakpoints, std::vector<Action> actions);

    static PiecewisePolicy constant(Action a);

    Action operator()(double s) const;

    std::size_t piece_count() const { return actions_.size(); }
    std::span<const double> breakpoints() const { return breakpoints_; }
    std::span<const Action> actions() const { return actions_; }
    Action max_action() const;

    /// Absorbs intervals shorter than min_len into a neighbour, then merges
    /// adjacent intervals carrying the same action.
    PiecewisePolicy merged(double min_len = 1e-12) const;

    bool operator==(const PiecewisePolicy&) const = default;

private:
    std::vector<double> breakpoints_;
    std::vector<Action> actions_;
};

nlohmann::json to_json(const PiecewisePolicy& p);
PiecewisePolicy policy_from_json(const nlohmann::json& j);

}  // namespace pwlmdp
