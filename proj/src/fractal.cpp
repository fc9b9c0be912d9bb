#include "pwlmdp/fractal.hpp"

#include <cmath>
#include <stdexcept>

namespace pwlmdp {

namespace {

// Coefficient of digit i > H in the series: gamma^{i-1} - 2(gamma^{i-2} - gamma^{i-1})(1 - b_i).
double tail_term(double gamma, int i, int b) {
    const double g1 = std::pow(gamma, i - 1);
    const double g2 = std::pow(gamma, i - 2);
    return g1 - 2.0 * (g2 - g1) * (1 - b);
}

double head_sum(int horizon, double gamma, double s) {
    double v = 0.0;
    for (int i = 1; i <= horizon; ++i) v += std::pow(gamma, i - 1) * bit(s, i);
    return v;
}

}  // namespace

Family family_from_string(const std::string& name) {
    if (name == "fractal") return Family::fractal;
    if (name == "lipschitz") return Family::lipschitz;
    throw std::invalid_argument("unknown family '" + name + "' (expected fractal or lipschitz)");
}

std::string to_string(Family f) { return f == Family::fractal ? "fractal" : "lipschitz"; }

int bit(double s, int h) {
    if (h < 1 || h > kMaxBit) throw std::domain_error("bit index " + std::to_string(h) + " outside [1,52]");
    if (!(s >= 0.0 && s <= 1.0)) throw std::domain_error("bit: state outside [0,1]");
    return static_cast<int>(std::fmod(std::floor(std::ldexp(s, h)), 2.0));
}

Action closed_form_pi_star(int horizon, double s) { return bit(s, horizon + 1) == 0 ? 1 : 0; }

Action closed_form_pi_star_lipschitz(int horizon, double s) {
    if (bit(s, horizon + 1) == 1) return 2.0 * s < 1.0 ? 0 : 1;
    const double shifted = 2.0 * s + std::ldexp(1.0, -horizon);
    if (shifted < 1.0) return 2;
    if (shifted < 2.0) return 3;
    return 4;
}

double closed_form_v_star(int horizon, double s, int n_terms) {
    if (n_terms < horizon) throw std::invalid_argument("closed_form_v_star: need n_terms >= H");
    if (horizon + n_terms > kMaxBit)
        throw std::domain_error("closed_form_v_star: H + n_terms exceeds 52 binary digits");
    const double gamma = fractal_gamma(horizon);
    double v = head_sum(horizon, gamma, s);
    for (int i = horizon + 1; i <= horizon + n_terms; ++i) v += tail_term(gamma, i, bit(s, i));
    return v;
}

double closed_form_v_star_exact(int horizon, double s) {
    if (horizon + 1 > kMaxBit) throw std::domain_error("closed_form_v_star_exact: H too large");
    const double scaled = std::ldexp(s, kMaxBit);
    if (scaled != std::floor(scaled)) throw std::domain_error("closed_form_v_star_exact: state not on the 2^-52 grid");
    const double gamma = fractal_gamma(horizon);
    double v = head_sum(horizon, gamma, s);
    for (int i = horizon + 1; i <= kMaxBit; ++i) v += tail_term(gamma, i, bit(s, i));
    // Digits past 52 are zero: sum_{i>52} gamma^{i-1} - 2(gamma^{i-2} - gamma^{i-1}).
    v += std::pow(gamma, kMaxBit) / (1.0 - gamma) - 2.0 * std::pow(gamma, kMaxBit - 1);
    return v;
}

PiecewisePolicy closed_form_policy(int horizon) {
    if (horizon + 1 > 30) throw std::invalid_argument("closed_form_policy: H too large to materialise");
    const std::size_t n = std::size_t{1} << (horizon + 1);
    std::vector<double> xs(n + 1);
    std::vector<Action> acts(n);
    for (std::size_t i = 0; i <= n; ++i) xs[i] = std::ldexp(static_cast<double>(i), -(horizon + 1));
    // Digit H+1 of s in [i/2^{H+1}, (i+1)/2^{H+1}) is the parity of i.
    for (std::size_t i = 0; i < n; ++i) acts[i] = (i % 2 == 0) ? 1 : 0;
    return PiecewisePolicy(std::move(xs), std::move(acts));
}

double sample_dyadic_state(Rng& rng) { return std::ldexp(static_cast<double>(rng.next() >> 12), -kMaxBit); }

BellmanReport verify_bellman(int horizon, int n_samples, int n_terms, Family family, std::uint64_t seed) {
    const Mdp mdp = family == Family::fractal ? make_fractal_mdp(horizon) : make_lipschitz_mdp(horizon);
    const double gamma = fractal_gamma(horizon);
    BellmanReport rep;
    rep.family = family;
    rep.horizon = horizon;
    rep.n_samples = n_samples;
    rep.n_terms = n_terms;
    rep.tolerance = 6.0 * std::pow(gamma, n_terms) / (1.0 - gamma) + 1e-9;
    rep.min_inequality_margin = std::numeric_limits<double>::infinity();

    Rng rng = Rng::child(seed, static_cast<std::uint64_t>(horizon));
    for (int n = 0; n < n_samples; ++n) {
        const double s = sample_dyadic_state(rng);
        const Action star = family == Family::fractal ? closed_form_pi_star(horizon, s)
                                                      : closed_form_pi_star_lipschitz(horizon, s);
        const double v = closed_form_v_star(horizon, s, n_terms);
        Action greedy = 0;
        double best = -std::numeric_limits<double>::infinity();
        for (Action a = 0; a < mdp.action_count(); ++a) {
            const auto [next, r] = step(mdp, s, a);
            const double backup = r + gamma * closed_form_v_star(horizon, next, n_terms);
            if (backup > best) {
                best = backup;
                greedy = a;
            }
            if (a == star) {
                const double res = std::abs(v - backup);
                rep.max_equality_residual = std::max(rep.max_equality_residual, res);
                if (res > rep.tolerance) ++rep.equality_violations;
            } else {
                const double margin = v - backup;
                rep.min_inequality_margin = std::min(rep.min_inequality_margin, margin);
                if (margin < -rep.tolerance) ++rep.inequality_violations;
            }
        }
        if (greedy != star) ++rep.greedy_mismatches;
    }
    return rep;
}

nlohmann::json to_json(const BellmanReport& r) {
    return {{"family", to_string(r.family)},
            {"H", r.horizon},
            {"n_samples", r.n_samples},
            {"n_terms", r.n_terms},
            {"tolerance", r.tolerance},
            {"max_equality_residual", r.max_equality_residual},
            {"min_inequality_margin", r.min_inequality_margin},
            {"equality_violations", r.equality_violations},
            {"inequality_violations", r.inequality_violations},
            {"greedy_mismatches", r.greedy_mismatches},
            {"greedy_match_fraction", r.greedy_match_fraction()},
            {"passed", r.passed()}};
}

}  // namespace pwlmdp
