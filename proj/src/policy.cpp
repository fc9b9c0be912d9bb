#include "pwlmdp/policy.hpp"

#include <algorithm>
#include <stdexcept>

namespace pwlmdp {

PiecewisePolicy::PiecewisePolicy(std::vector<double> breakpoints, std::vector<Action> actions)
    : breakpoints_(std::move(breakpoints)), actions_(std::move(actions)) {
    if (actions_.empty() || breakpoints_.size() != actions_.size() + 1)
        throw std::invalid_argument("PiecewisePolicy: need k+1 breakpoints for k actions");
    if (breakpoints_.front() != 0.0 || breakpoints_.back() != 1.0)
        throw std::invalid_argument("PiecewisePolicy: breakpoints must start at 0 and end at 1");
    for (std::size_t i = 0; i < actions_.size(); ++i)
        if (!(breakpoints_[i] < breakpoints_[i + 1]))
            throw std::invalid_argument("PiecewisePolicy: breakpoints not strictly ascending");
}

PiecewisePolicy PiecewisePolicy::constant(Action a) { return PiecewisePolicy({0.0, 1.0}, {a}); }

Action PiecewisePolicy::operator()(double s) const {
    auto it = std::upper_bound(breakpoints_.begin(), breakpoints_.end(), s);
    auto idx = static_cast<std::ptrdiff_t>(it - breakpoints_.begin()) - 1;
    idx = std::clamp<std::ptrdiff_t>(idx, 0, static_cast<std::ptrdiff_t>(actions_.size()) - 1);
    return actions_[static_cast<std::size_t>(idx)];
}

Action PiecewisePolicy::max_action() const { return *std::max_element(actions_.begin(), actions_.end()); }

PiecewisePolicy PiecewisePolicy::merged(double min_len) const {
    std::vector<double> ends;
    std::vector<Action> acts;
    const std::size_t m = actions_.size();
    for (std::size_t i = 0; i < m; ++i) {
        const bool sliver = breakpoints_[i + 1] - breakpoints_[i] < min_len;
        if (sliver && !acts.empty()) {
            ends.back() = breakpoints_[i + 1];
            continue;
        }
        if (sliver && i + 1 < m) continue;
        if (!acts.empty() && acts.back() == actions_[i]) {
            ends.back() = breakpoints_[i + 1];
            continue;
        }
        acts.push_back(actions_[i]);
        ends.push_back(breakpoints_[i + 1]);
    }
    std::vector<double> xs{0.0};
    xs.insert(xs.end(), ends.begin(), ends.end());
    return PiecewisePolicy(std::move(xs), std::move(acts));
}

nlohmann::json to_json(const PiecewisePolicy& p) {
    return nlohmann::json{{"breakpoints", std::vector<double>(p.breakpoints().begin(), p.breakpoints().end())},
                          {"actions", std::vector<Action>(p.actions().begin(), p.actions().end())}};
}

PiecewisePolicy policy_from_json(const nlohmann::json& j) {
    return PiecewisePolicy(j.at("breakpoints").get<std::vector<double>>(), j.at("actions").get<std::vector<Action>>());
}

}  // namespace pwlmdp
