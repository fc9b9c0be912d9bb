#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "pwlmdp/mdp.hpp"
#include "pwlmdp/rng.hpp"

namespace pwlmdp {

enum class Family { fractal, lipschitz };

Family family_from_string(const std::string& name);
std::string to_string(Family f);

/// Highest binary digit index that a double in [0,1) can be read at exactly.
inline constexpr int kMaxBit = 52;

/// h-th binary digit of s: floor(2^h s) mod 2, for 1 <= h <= 52.
int bit(double s, int h);

/// Optimal action of the doubling-map family: 1 iff digit H+1 of s is 0.
Action closed_form_pi_star(int horizon, double s);

/// Optimal action of the clipped five-action family. Shifting actions (2,3,4)
/// are used when digit H+1 is 0, choosing the branch that avoids clipping.
Action closed_form_pi_star_lipschitz(int horizon, double s);

/**
 * Optimal value of the constructed family with the infinite series cut
 * after n_terms digits past H. Truncation error is at most
 * 3 gamma^n_terms / (1 - gamma). Requires H <= n_terms and H + n_terms <= 52.
 */
double closed_form_v_star(int horizon, double s, int n_terms);

/// Exact optimal value for states that are multiples of 2^-52 (all later digits
/// are zero, so the tail is a geometric sum).
double closed_form_v_star_exact(int horizon, double s);

/// The optimal policy as an explicit piecewise-constant map (2^{H+1} pieces).
PiecewisePolicy closed_form_policy(int horizon);

/// Uniform state on the 2^-52 grid; dynamics of both families stay exact on it.
double sample_dyadic_state(Rng& rng);

struct BellmanReport {
    Family family = Family::fractal;
    int horizon = 0;
    int n_samples = 0;
    int n_terms = 0;
    double tolerance = 0.0;
    double max_equality_residual = 0.0;
    /// min over sampled s and a != pi*(s) of V*(s) - r(s,a) - gamma V*(f(s,a)).
    double min_inequality_margin = 0.0;
    int equality_violations = 0;
    int inequality_violations = 0;
    /// States where argmax_a r + gamma V*(f) differs from the closed-form policy.
    int greedy_mismatches = 0;

    int violations() const { return equality_violations + inequality_violations; }
    double greedy_match_fraction() const {
        return n_samples == 0 ? 1.0 : 1.0 - static_cast<double>(greedy_mismatches) / n_samples;
    }
    bool passed() const { return violations() == 0; }
};

/// Checks the Bellman optimality equations for the closed forms at random states.
BellmanReport verify_bellman(int horizon, int n_samples, int n_terms, Family family, std::uint64_t seed = 0);

nlohmann::json to_json(const BellmanReport& r);

}  // namespace pwlmdp
