#include "pwlmdp/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_set>

#include "pwlmdp/rng.hpp"

namespace pwlmdp {

namespace {

std::uint64_t tree_size(std::size_t actions, int k, std::uint64_t budget) {
    std::uint64_t n = 1;
    for (int i = 0; i < k; ++i) {
        if (n > budget / actions) return budget + 1;
        n *= actions;
    }
    return n;
}

void check_plan(const DynModel& model, const TerminalQ& q, int k, std::uint64_t budget) {
    if (k < 0) throw std::invalid_argument("planner: k must be >= 0");
    if (q.action_count() != model.action_count())
        throw std::invalid_argument("planner: q and model disagree on the action count");
    if (tree_size(model.action_count(), k, budget) > budget)
        throw PlanBudgetExceeded("planner: |A|^k = " + std::to_string(model.action_count()) + "^" +
                                 std::to_string(k) + " exceeds the budget of " + std::to_string(budget));
}

double dfs(const DynModel& model, const TerminalQ& q, double gamma, int depth, double s, Action a) {
    if (depth == 0) return q(s, a);
    const double next = model.next(s, a);
    double best = -std::numeric_limits<double>::infinity();
    for (Action b = 0; b < model.action_count(); ++b) best = std::max(best, dfs(model, q, gamma, depth - 1, next, b));
    return model.reward(s, a) + gamma * best;
}

// Sequence index -> actions, most significant digit first.
void decode(std::uint64_t idx, std::size_t actions, std::vector<Action>& out) {
    for (std::size_t i = out.size(); i-- > 0;) {
        out[i] = idx % actions;
        idx /= actions;
    }
}

}  // namespace

DynModel::DynModel(std::size_t actions, Fn next, Fn reward)
    : actions_(actions), next_(std::move(next)), reward_(std::move(reward)) {
    if (actions_ == 0) throw std::invalid_argument("DynModel needs at least one action");
}

DynModel DynModel::from_mdp(const Mdp& mdp) {
    auto shared = std::make_shared<const Mdp>(mdp);
    return DynModel(
        mdp.action_count(), [shared](double s, Action a) { return shared->dynamics(a)(s); },
        [shared](double s, Action a) { return shared->reward(a)(s); });
}

double DynModel::next(double s, Action a) const { return std::clamp(next_(s, a), 0.0, 1.0); }

TerminalQ::TerminalQ(std::size_t actions, Fn q) : actions_(actions), q_(std::move(q)) {
    if (actions_ == 0) throw std::invalid_argument("TerminalQ needs at least one action");
}

TerminalQ TerminalQ::from_qfunction(QFunction q) {
    auto shared = std::make_shared<const QFunction>(std::move(q));
    return TerminalQ(shared->per_action.size(), [shared](double s, Action a) { return (*shared)(s, a); });
}

TerminalQ TerminalQ::zero(std::size_t actions) {
    return TerminalQ(actions, [](double, Action) { return 0.0; });
}

double boots_value(const DynModel& model, const TerminalQ& q, double gamma, int k, double s, Action a,
                   std::uint64_t budget) {
    check_plan(model, q, k, budget);
    if (a >= model.action_count()) throw std::out_of_range("boots_value: bad action");
    return dfs(model, q, gamma, k, s, a);
}

Action boots_policy(const DynModel& model, const TerminalQ& q, double gamma, int k, double s,
                    std::uint64_t budget) {
    check_plan(model, q, k, budget);
    Action best_a = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (Action a = 0; a < model.action_count(); ++a) {
        const double v = dfs(model, q, gamma, k, s, a);
        if (v > best) {
            best = v;
            best_a = a;
        }
    }
    return best_a;
}

double sequence_value(const DynModel& model, const TerminalQ& q, double gamma, double s,
                      std::span<const Action> actions) {
    if (actions.empty()) throw std::invalid_argument("sequence_value: empty sequence");
    std::vector<double> rewards(actions.size() - 1);
    for (std::size_t h = 0; h + 1 < actions.size(); ++h) {
        rewards[h] = model.reward(s, actions[h]);
        s = model.next(s, actions[h]);
    }
    double v = q(s, actions.back());
    for (std::size_t h = rewards.size(); h-- > 0;) v = rewards[h] + gamma * v;
    return v;
}

Action shooting_policy(const DynModel& model, const TerminalQ& q, double gamma, int k, double s, int n_candidates,
                       std::uint64_t seed, ShootingMode mode) {
    if (n_candidates < 1) throw std::invalid_argument("shooting_policy: n_candidates must be >= 1");
    if (k < 0) throw std::invalid_argument("shooting_policy: k must be >= 0");
    const std::size_t na = model.action_count();
    const std::uint64_t total = tree_size(na, k + 1, std::numeric_limits<std::uint64_t>::max() / 2);
    const auto n = static_cast<std::uint64_t>(n_candidates);
    Rng rng(seed);

    std::vector<std::uint64_t> candidates;
    if (mode == ShootingMode::without_replacement && n >= total) {
        candidates.resize(total);
        std::iota(candidates.begin(), candidates.end(), std::uint64_t{0});
    } else if (mode == ShootingMode::without_replacement) {
        std::unordered_set<std::uint64_t> seen;
        while (candidates.size() < n) {
            const std::uint64_t idx = rng.below(total);
            if (seen.insert(idx).second) candidates.push_back(idx);
        }
        std::sort(candidates.begin(), candidates.end());
    } else {
        candidates.resize(n);
        for (auto& c : candidates) c = rng.below(total);
    }

    // Sequence order is lexicographic, so keeping the first strict maximum
    // breaks ties toward the lowest first action.
    std::vector<Action> seq(static_cast<std::size_t>(k) + 1);
    Action best_a = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (const auto idx : candidates) {
        decode(idx, na, seq);
        const double v = sequence_value(model, q, gamma, s, seq);
        if (v > best || (v == best && seq.front() < best_a)) {
            best = v;
            best_a = seq.front();
        }
    }
    return best_a;
}

QFunction construct_coarse_q(int horizon, int k) {
    if (k < 1 || k > horizon || horizon > 30) throw std::invalid_argument("construct_coarse_q: need 1 <= k <= H <= 30");
    const double gamma = fractal_gamma(horizon);
    const double top = 2.0 / (1.0 - gamma);
    // Membership depends on the block index j = floor(2^H s): its low k bits must all be 1.
    const std::uint64_t blocks = std::uint64_t{1} << horizon;
    const std::uint64_t mask = (std::uint64_t{1} << k) - 1;
    std::vector<double> xs{0.0};
    std::vector<double> vals;
    for (std::uint64_t j = 0; j < blocks; ++j) {
        const double v = (j & mask) == mask ? top : 0.0;
        if (!vals.empty() && vals.back() == v) {
            xs.back() = std::ldexp(static_cast<double>(j + 1), -horizon);
        } else {
            vals.push_back(v);
            xs.push_back(std::ldexp(static_cast<double>(j + 1), -horizon));
        }
    }
    const PwlFunction f = PwlFunction::step(xs, vals);
    return QFunction{{f, f}, 0, gamma};
}

double rollout_return(const Mdp& mdp, const ActFn& act, double s0, int steps, double gamma) {
    if (steps < 1) throw std::invalid_argument("rollout_return: steps must be >= 1");
    double total = 0.0;
    double discount = 1.0;
    double s = s0;
    for (int t = 0; t < steps; ++t) {
        const auto [next, r] = step(mdp, s, act(s, t));
        total += discount * r;
        discount *= gamma;
        s = next;
    }
    return total;
}

std::vector<double> rollout_returns(const Mdp& mdp, const ActFn& act, std::span<const double> starts, int steps,
                                    double gamma) {
    std::vector<double> out(starts.size());
    const auto n = static_cast<long>(starts.size());
#pragma omp parallel for schedule(dynamic, 8)
    for (long i = 0; i < n; ++i) out[i] = rollout_return(mdp, act, starts[i], steps, gamma);
    return out;
}

double mean_return(const Mdp& mdp, const ActFn& act, std::span<const double> starts, int steps, double gamma) {
    if (starts.empty()) throw std::invalid_argument("mean_return: no start states");
    const auto r = rollout_returns(mdp, act, starts, steps, gamma);
    // Summed in index order so the result does not depend on the thread count.
    return std::accumulate(r.begin(), r.end(), 0.0) / static_cast<double>(r.size());
}

double mean_return_serial(const Mdp& mdp, const ActFn& act, std::span<const double> starts, int steps,
                          double gamma) {
    if (starts.empty()) throw std::invalid_argument("mean_return: no start states");
    double total = 0.0;
    for (double s : starts) total += rollout_return(mdp, act, s, steps, gamma);
    return total / static_cast<double>(starts.size());
}

ActFn boots_actor(DynModel model, TerminalQ q, double gamma, int k, int steps, std::uint64_t budget) {
    // Near the end the leaf value is the last reward itself: r(s,a) is the exact Q with one step to go.
    const TerminalQ last(model.action_count(), [model](double s, Action a) { return model.reward(s, a); });
    return [model = std::move(model), q = std::move(q), last, gamma, k, steps, budget](double s, int t) {
        const int left = steps - t;
        if (left > k) return boots_policy(model, q, gamma, k, s, budget);
        return boots_policy(model, last, gamma, std::max(left - 1, 0), s, budget);
    };
}

ActFn greedy_actor(TerminalQ q) {
    return [q = std::move(q)](double s, int) {
        Action best_a = 0;
        double best = q(s, 0);
        for (Action a = 1; a < q.action_count(); ++a) {
            const double v = q(s, a);
            if (v > best) {
                best = v;
                best_a = a;
            }
        }
        return best_a;
    };
}

std::vector<double> midpoint_grid(int n) {
    std::vector<double> xs(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) xs[i] = (i + 0.5) / n;
    return xs;
}

nlohmann::json to_json(const PlannerConfig& c) {
    return {{"mode", c.mode == PlannerConfig::Mode::exhaustive ? "exhaustive" : "shooting"},
            {"k", c.k},
            {"n_candidates", c.n_candidates},
            {"gamma_eff", c.gamma_eff},
            {"budget", c.budget}};
}

PlannerConfig planner_config_from_json(const nlohmann::json& j) {
    PlannerConfig c;
    const auto mode = j.value("mode", std::string("exhaustive"));
    if (mode == "exhaustive") c.mode = PlannerConfig::Mode::exhaustive;
    else if (mode == "shooting") c.mode = PlannerConfig::Mode::shooting;
    else throw std::invalid_argument("planner.mode must be 'exhaustive' or 'shooting', got '" + mode + "'");
    c.k = j.value("k", c.k);
    c.n_candidates = j.value("n_candidates", c.n_candidates);
    c.gamma_eff = j.value("gamma_eff", c.gamma_eff);
    c.budget = j.value("budget", c.budget);
    if (c.k < 0) throw std::invalid_argument("planner.k must be >= 0");
    if (c.n_candidates < 1) throw std::invalid_argument("planner.n_candidates must be >= 1");
    return c;
}

}  // namespace pwlmdp
