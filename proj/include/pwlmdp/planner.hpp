#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include <json.hpp>

#include "pwlmdp/dp.hpp"
#include "pwlmdp/mdp.hpp"

namespace pwlmdp {

/// Deterministic model of (s,a) -> s' with a known reward. Next states are clamped to [0,1].
class DynModel {
public:
    using Fn = std::function<double(double, Action)>;

    DynModel(std::size_t actions, Fn next, Fn reward);
    /// The exact dynamics and reward of an MDP.
    static DynModel from_mdp(const Mdp& mdp);

    std::size_t action_count() const { return actions_; }
    double next(double s, Action a) const;
    double reward(double s, Action a) const { return reward_(s, a); }

private:
    std::size_t actions_;
    Fn next_;
    Fn reward_;
};

/// Terminal estimate q(s,a) used at the leaves of the lookahead tree.
class TerminalQ {
public:
    using Fn = std::function<double(double, Action)>;

    TerminalQ(std::size_t actions, Fn q);
    static TerminalQ from_qfunction(QFunction q);
    static TerminalQ zero(std::size_t actions);

    std::size_t action_count() const { return actions_; }
    double operator()(double s, Action a) const { return q_(s, a); }

private:
    std::size_t actions_;
    Fn q_;
};

class PlanBudgetExceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr std::uint64_t kDefaultPlanBudget = 1ULL << 24;

/**
 * max over a_1..a_k of sum_{h<k} gamma^h r(s_h,a_h) + gamma^k q(s_k,a_k),
 * with s_0 = s, a_0 = a, by exhaustive enumeration. Evaluated in nested form
 * r_0 + gamma (r_1 + gamma (... + gamma q)).
 */
double boots_value(const DynModel& model, const TerminalQ& q, double gamma, int k, double s, Action a,
                   std::uint64_t budget = kDefaultPlanBudget);

/// argmax_a boots_value(..., a); ties go to the lowest action.
Action boots_policy(const DynModel& model, const TerminalQ& q, double gamma, int k, double s,
                    std::uint64_t budget = kDefaultPlanBudget);

enum class ShootingMode {
    /// Independent uniform sequences (with replacement).
    random,
    /// Distinct sequences; enumerates everything once n_candidates >= |A|^{k+1}.
    without_replacement,
};

/// Best first action among n_candidates random action sequences of length k+1.
Action shooting_policy(const DynModel& model, const TerminalQ& q, double gamma, int k, double s, int n_candidates,
                       std::uint64_t seed, ShootingMode mode = ShootingMode::random);

/// Value of one action sequence of length k+1 in the same nested form as boots_value.
double sequence_value(const DynModel& model, const TerminalQ& q, double gamma, double s,
                      std::span<const Action> actions);

/// Step function 2/(1-gamma) * 1[digits H-k+1..H of s are all 1], same for both actions.
QFunction construct_coarse_q(int horizon, int k);

/// A policy that may depend on the time step t (0-based).
using ActFn = std::function<Action(double s, int t)>;

/// sum_{t<T} gamma^t r(s_t, a_t) from s0.
double rollout_return(const Mdp& mdp, const ActFn& act, double s0, int steps, double gamma);

/// Mean rollout return over the given start states, starts evaluated in parallel.
/// act must be safe to call concurrently.
double mean_return(const Mdp& mdp, const ActFn& act, std::span<const double> starts, int steps, double gamma);
double mean_return_serial(const Mdp& mdp, const ActFn& act, std::span<const double> starts, int steps,
                          double gamma);

/// Per-start returns, in parallel.
std::vector<double> rollout_returns(const Mdp& mdp, const ActFn& act, std::span<const double> starts, int steps,
                                    double gamma);

/**
 * BOOTS as an episode policy. With R = steps - t decisions left, plans k steps
 * onto q while R > k; otherwise plans the remaining R steps exactly, since
 * the episode ends first.
 */
ActFn boots_actor(DynModel model, TerminalQ q, double gamma, int k, int steps,
                  std::uint64_t budget = kDefaultPlanBudget);

/// Greedy on q at every step.
ActFn greedy_actor(TerminalQ q);

/// Points (i + 0.5) / n for i < n.
std::vector<double> midpoint_grid(int n);

struct PlannerConfig {
    enum class Mode { exhaustive, shooting } mode = Mode::exhaustive;
    int k = 3;
    int n_candidates = 64;
    /// Negative means: take the MDP's horizon discount.
    double gamma_eff = -1.0;
    std::uint64_t budget = kDefaultPlanBudget;
};

nlohmann::json to_json(const PlannerConfig& c);
PlannerConfig planner_config_from_json(const nlohmann::json& j);

}  // namespace pwlmdp
