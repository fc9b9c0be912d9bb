#pragma once

#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "pwlmdp/pwl.hpp"

namespace pwlmdp {

struct FiniteHorizon {
    int steps = 1;
    bool operator==(const FiniteHorizon&) const = default;
};

struct DiscountedHorizon {
    double gamma = 0.5;
    int truncation = 1;
    bool operator==(const DiscountedHorizon&) const = default;
};

/// Either an undiscounted finite horizon or a discount factor with a truncation length.
class HorizonSpec {
public:
    static HorizonSpec finite(int steps);
    static HorizonSpec discounted(double gamma, int truncation);

    bool is_finite() const { return std::holds_alternative<FiniteHorizon>(spec_); }
    /// 1 for finite horizons, gamma otherwise.
    double gamma_eff() const;
    /// Number of Bellman backups / rollout steps: H or T.
    int steps() const;

    const std::variant<FiniteHorizon, DiscountedHorizon>& spec() const { return spec_; }
    bool operator==(const HorizonSpec&) const = default;

private:
    explicit HorizonSpec(std::variant<FiniteHorizon, DiscountedHorizon> s) : spec_(s) {}
    std::variant<FiniteHorizon, DiscountedHorizon> spec_;
};

/// Deterministic MDP on [0,1] with one PWL dynamics map and reward per action.
class Mdp {
public:
    Mdp(std::vector<PwlFunction> dynamics, std::vector<PwlFunction> reward, HorizonSpec horizon,
        std::string label);

    std::size_t action_count() const { return dynamics_.size(); }
    const std::vector<PwlFunction>& dynamics() const { return dynamics_; }
    const std::vector<PwlFunction>& reward() const { return reward_; }
    const PwlFunction& dynamics(Action a) const { return dynamics_.at(a); }
    const PwlFunction& reward(Action a) const { return reward_.at(a); }
    const HorizonSpec& horizon() const { return horizon_; }
    const std::string& label() const { return label_; }

    Mdp with_horizon(HorizonSpec h) const { return Mdp(dynamics_, reward_, h, label_); }

    bool operator==(const Mdp&) const = default;

private:
    std::vector<PwlFunction> dynamics_;
    std::vector<PwlFunction> reward_;
    HorizonSpec horizon_;
    std::string label_;
};

struct StepResult {
    double next_state;
    double reward;
};

StepResult step(const Mdp& mdp, double s, Action a);

/// Discount of the constructed families: gamma = 1 - 1/H.
double fractal_gamma(int horizon);
/// Per-step penalty of the shifting actions: 2(gamma^{H-1} - gamma^H).
double fractal_penalty(int horizon);

/// Two-action doubling-map family with 2^{-H} shift; truncation defaults to 8H.
Mdp make_fractal_mdp(int horizon, int truncation = 0);
/// Five-action clipped (Lipschitz, continuous) variant of the same family.
Mdp make_lipschitz_mdp(int horizon, int truncation = 0);

/// Random kinks and ordinates, three pieces per action, reward s, horizon 10.
Mdp gen_rand(std::uint64_t seed);
/// Kinks at i/3, alternating high/low ordinates, reward s, horizon 10.
Mdp gen_semirand(std::uint64_t seed);
/// The published SEMI-RAND instance used for the learning experiments.
Mdp semirand_reference();

nlohmann::json to_json(const HorizonSpec& h);
HorizonSpec horizon_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Mdp& m);
Mdp mdp_from_json(const nlohmann::json& j);

}  // namespace pwlmdp
