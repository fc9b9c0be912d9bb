#include "pwlmdp/mdp.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "pwlmdp/rng.hpp"

namespace pwlmdp {

namespace {

// Ten transitions with the state reward r(s) = s collected at all eleven
// visited states; the last decision never changes the return.
constexpr int kRandomHorizon = 11;
constexpr int kMaxRedraws = 1000;

enum DrawCategory : std::uint64_t { kKinkPositions = 0, kKinkValues = 1 };

std::uint64_t stream_id(Action a, DrawCategory c) { return (static_cast<std::uint64_t>(a) << 8) | c; }

void check_range(const PwlFunction& f, Action a) {
    for (std::size_t i = 0; i < f.piece_count(); ++i) {
        const double lo = std::min(f.left_value(i), f.right_limit(i));
        const double hi = std::max(f.left_value(i), f.right_limit(i));
        if (lo < -kRangeSlack || hi > 1.0 + kRangeSlack)
            throw RangeError("dynamics of action " + std::to_string(a) + " leave [0,1] on piece " +
                             std::to_string(i));
    }
}

// Indicator of [1/2, 1) minus a constant.
PwlFunction upper_half_indicator(double shift) {
    return PwlFunction({0.0, 0.5, 1.0}, {0.0, 0.0}, {-shift, 1.0 - shift});
}

}  // namespace

HorizonSpec HorizonSpec::finite(int steps) {
    if (steps < 1) throw std::invalid_argument("finite horizon needs steps >= 1");
    return HorizonSpec(FiniteHorizon{steps});
}

HorizonSpec HorizonSpec::discounted(double gamma, int truncation) {
    if (!(gamma > 0.0 && gamma < 1.0)) throw std::invalid_argument("discount must lie in (0,1)");
    if (truncation < 1) throw std::invalid_argument("truncation needs T >= 1");
    return HorizonSpec(DiscountedHorizon{gamma, truncation});
}

double HorizonSpec::gamma_eff() const {
    if (const auto* d = std::get_if<DiscountedHorizon>(&spec_)) return d->gamma;
    return 1.0;
}

int HorizonSpec::steps() const {
    if (const auto* d = std::get_if<DiscountedHorizon>(&spec_)) return d->truncation;
    return std::get<FiniteHorizon>(spec_).steps;
}

Mdp::Mdp(std::vector<PwlFunction> dynamics, std::vector<PwlFunction> reward, HorizonSpec horizon, std::string label)
    : dynamics_(std::move(dynamics)), reward_(std::move(reward)), horizon_(horizon), label_(std::move(label)) {
    if (dynamics_.empty()) throw std::invalid_argument("Mdp needs at least one action");
    if (reward_.size() != dynamics_.size())
        throw std::invalid_argument("Mdp: dynamics and reward lists differ in length");
    for (Action a = 0; a < dynamics_.size(); ++a) check_range(dynamics_[a], a);
}

StepResult step(const Mdp& mdp, double s, Action a) {
    if (a >= mdp.action_count()) throw std::out_of_range("step: bad action index " + std::to_string(a));
    const double next = std::clamp(mdp.dynamics(a)(s), 0.0, 1.0);
    return {next, mdp.reward(a)(s)};
}

double fractal_gamma(int horizon) { return 1.0 - 1.0 / horizon; }

double fractal_penalty(int horizon) {
    const double g = fractal_gamma(horizon);
    return 2.0 * (std::pow(g, horizon - 1) - std::pow(g, horizon));
}

Mdp make_fractal_mdp(int horizon, int truncation) {
    if (horizon < 3) throw std::invalid_argument("fractal MDP needs H >= 3");
    const double kappa = std::ldexp(1.0, -horizon);
    const double eps = fractal_penalty(horizon);
    std::vector<PwlFunction> f{
        PwlFunction({0.0, 0.5, 1.0}, {2.0, 2.0}, {0.0, -1.0}),
        PwlFunction({0.0, (1.0 - kappa) / 2.0, (2.0 - kappa) / 2.0, 1.0}, {2.0, 2.0, 2.0},
                    {kappa, kappa - 1.0, kappa - 2.0}),
    };
    std::vector<PwlFunction> r{upper_half_indicator(0.0), upper_half_indicator(eps)};
    const int t = truncation > 0 ? truncation : 8 * horizon;
    return Mdp(std::move(f), std::move(r), HorizonSpec::discounted(fractal_gamma(horizon), t),
               "fractal H=" + std::to_string(horizon));
}

Mdp make_lipschitz_mdp(int horizon, int truncation) {
    if (horizon < 3) throw std::invalid_argument("lipschitz MDP needs H >= 3");
    const double kappa = std::ldexp(1.0, -horizon);
    const double eps = fractal_penalty(horizon);
    const double lo = (1.0 - kappa) / 2.0;
    const double hi = (2.0 - kappa) / 2.0;
    std::vector<PwlFunction> f{
        PwlFunction({0.0, 0.5, 1.0}, {2.0, 0.0}, {0.0, 1.0}),
        PwlFunction({0.0, 0.5, 1.0}, {0.0, 2.0}, {0.0, -1.0}),
        PwlFunction({0.0, lo, 1.0}, {2.0, 0.0}, {kappa, 1.0}),
        PwlFunction({0.0, lo, hi, 1.0}, {0.0, 2.0, 0.0}, {0.0, kappa - 1.0, 1.0}),
        PwlFunction({0.0, hi, 1.0}, {0.0, 2.0}, {0.0, kappa - 2.0}),
    };
    std::vector<PwlFunction> r{upper_half_indicator(0.0), upper_half_indicator(0.0), upper_half_indicator(eps),
                               upper_half_indicator(eps), upper_half_indicator(eps)};
    const int t = truncation > 0 ? truncation : 8 * horizon;
    return Mdp(std::move(f), std::move(r), HorizonSpec::discounted(fractal_gamma(horizon), t),
               "lipschitz H=" + std::to_string(horizon));
}

Mdp gen_rand(std::uint64_t seed) {
    std::vector<PwlFunction> f;
    for (Action a = 0; a < 2; ++a) {
        Rng pos = Rng::child(seed, stream_id(a, kKinkPositions));
        Rng val = Rng::child(seed, stream_id(a, kKinkValues));
        std::array<double, 2> u{};
        int tries = 0;
        for (;; ++tries) {
            if (tries == kMaxRedraws) throw std::runtime_error("gen_rand: too many degenerate kink draws");
            u = {pos.uniform(), pos.uniform()};
            std::sort(u.begin(), u.end());
            if (u[0] >= 1e-9 && u[1] - u[0] >= 1e-9 && 1.0 - u[1] >= 1e-9) break;
        }
        const std::array<double, 4> xs{0.0, u[0], u[1], 1.0};
        std::array<double, 4> ys{};
        for (double& y : ys) y = val.uniform();
        f.push_back(PwlFunction::interpolate(xs, ys));
    }
    std::vector<PwlFunction> r(2, PwlFunction::linear(1.0, 0.0));
    return Mdp(std::move(f), std::move(r), HorizonSpec::finite(kRandomHorizon), "rand seed=" + std::to_string(seed));
}

Mdp gen_semirand(std::uint64_t seed) {
    std::vector<PwlFunction> f;
    const std::array<double, 4> xs{0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0};
    for (Action a = 0; a < 2; ++a) {
        Rng val = Rng::child(seed, stream_id(a, kKinkValues));
        std::array<double, 4> ys{};
        for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = 0.65 * (i % 2 == 0 ? 1.0 : 0.0) + 0.35 * val.uniform();
        f.push_back(PwlFunction::interpolate(xs, ys));
    }
    std::vector<PwlFunction> r(2, PwlFunction::linear(1.0, 0.0));
    return Mdp(std::move(f), std::move(r), HorizonSpec::finite(kRandomHorizon),
               "semirand seed=" + std::to_string(seed));
}

Mdp semirand_reference() {
    const std::array<double, 4> xs{0.0, 0.333, 0.667, 1.0};
    const std::array<double, 4> y0{0.690, 0.131, 0.907, 0.079};
    const std::array<double, 4> y1{0.865, 0.134, 0.750, 0.053};
    std::vector<PwlFunction> f{PwlFunction::interpolate(xs, y0), PwlFunction::interpolate(xs, y1)};
    std::vector<PwlFunction> r(2, PwlFunction::linear(1.0, 0.0));
    return Mdp(std::move(f), std::move(r), HorizonSpec::finite(kRandomHorizon), "semirand reference");
}

nlohmann::json to_json(const HorizonSpec& h) {
    if (h.is_finite()) return {{"kind", "finite"}, {"steps", h.steps()}};
    return {{"kind", "discounted"}, {"gamma", h.gamma_eff()}, {"truncation", h.steps()}};
}

HorizonSpec horizon_from_json(const nlohmann::json& j) {
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "finite") return HorizonSpec::finite(j.at("steps").get<int>());
    if (kind == "discounted") return HorizonSpec::discounted(j.at("gamma").get<double>(), j.at("truncation").get<int>());
    throw std::invalid_argument("horizon.kind must be 'finite' or 'discounted', got '" + kind + "'");
}

nlohmann::json to_json(const Mdp& m) {
    nlohmann::json dyn = nlohmann::json::array();
    nlohmann::json rew = nlohmann::json::array();
    for (const auto& f : m.dynamics()) dyn.push_back(to_json(f));
    for (const auto& r : m.reward()) rew.push_back(to_json(r));
    return {{"actions", m.action_count()}, {"dynamics", dyn}, {"reward", rew},
            {"horizon", to_json(m.horizon())}, {"label", m.label()}};
}

Mdp mdp_from_json(const nlohmann::json& j) {
    std::vector<PwlFunction> dyn;
    std::vector<PwlFunction> rew;
    for (const auto& f : j.at("dynamics")) dyn.push_back(pwl_from_json(f));
    for (const auto& r : j.at("reward")) rew.push_back(pwl_from_json(r));
    const auto n = j.at("actions").get<std::size_t>();
    if (dyn.size() != n || rew.size() != n)
        throw std::invalid_argument("MDP json: 'actions' does not match dynamics/reward lengths");
    return Mdp(std::move(dyn), std::move(rew), horizon_from_json(j.at("horizon")), j.value("label", ""));
}

}  // namespace pwlmdp
