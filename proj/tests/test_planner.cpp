#include <doctest.h>

#include <cmath>
#include <numeric>

#include "pwlmdp/dp.hpp"
#include "pwlmdp/fractal.hpp"
#include "pwlmdp/planner.hpp"

using namespace pwlmdp;

namespace {

TerminalQ wiggly_q(std::size_t actions) {
    return TerminalQ(actions, [](double s, Action a) { return std::sin(7.0 * s + 1.3 * static_cast<double>(a)); });
}

}  // namespace

TEST_CASE("boots_value unrolls the definition") {
    const Mdp m = gen_semirand(2);
    const DynModel model = DynModel::from_mdp(m);
    const TerminalQ q = wiggly_q(2);
    const double g = 0.9;
    Rng rng(1);
    for (int i = 0; i < 1000; ++i) {
        const double s = rng.uniform();
        for (Action a = 0; a < 2; ++a) {
            REQUIRE(boots_value(model, q, g, 0, s, a) == q(s, a));
            const double s1 = model.next(s, a);
            const double expect = model.reward(s, a) + g * std::max(q(s1, 0), q(s1, 1));
            REQUIRE(boots_value(model, q, g, 1, s, a) == doctest::Approx(expect).epsilon(1e-14));
        }
    }
    CHECK_THROWS_AS(boots_value(model, q, g, -1, 0.5, 0), std::invalid_argument);
    CHECK_THROWS_AS(boots_value(model, q, g, 1, 0.5, 2), std::out_of_range);
    CHECK_THROWS_AS(boots_value(model, wiggly_q(3), g, 1, 0.5, 0), std::invalid_argument);
    CHECK_THROWS_AS(boots_value(model, q, g, 10, 0.5, 0, 100), PlanBudgetExceeded);
}

TEST_CASE("k = 0 is greedy") {
    const DynModel model = DynModel::from_mdp(gen_rand(4));
    const TerminalQ q = wiggly_q(2);
    const ActFn greedy = greedy_actor(q);
    for (int i = 0; i < 1000; ++i) {
        const double s = (i + 0.5) / 1000;
        REQUIRE(boots_policy(model, q, 1.0, 0, s) == greedy(s, 0));
    }
}

TEST_CASE("bootstrapping exact Q composes backups") {
    const Mdp m = gen_semirand(5);
    const DynModel model = DynModel::from_mdp(m);
    const int h = 3;
    Rng rng(2);
    for (int k : {1, 2, 4}) {
        const TerminalQ q = TerminalQ::from_qfunction(value_iteration(m, {.backups = h}).q);
        const QFunction deeper = value_iteration(m, {.backups = h + k}).q;
        for (int i = 0; i < 10'000; ++i) {
            const double s = rng.uniform();
            const Action a = rng.below(2);
            REQUIRE(std::abs(boots_value(model, q, 1.0, k, s, a) - deeper(s, a)) <= 1e-7);
        }
    }
}

TEST_CASE("exhaustive shooting equals boots_policy") {
    const Mdp m = make_lipschitz_mdp(4);
    const DynModel model = DynModel::from_mdp(m);
    const TerminalQ q = wiggly_q(5);
    const double g = fractal_gamma(4);
    Rng rng(3);
    for (int k : {0, 1, 2}) {
        const int all = static_cast<int>(std::pow(5, k + 1));
        for (int i = 0; i < 1000; ++i) {
            const double s = rng.uniform();
            REQUIRE(shooting_policy(model, q, g, k, s, all, 7, ShootingMode::without_replacement) ==
                    boots_policy(model, q, g, k, s));
        }
    }
}

TEST_CASE("single-candidate shooting ignores the values") {
    const Mdp m = gen_rand(6);
    const DynModel a = DynModel::from_mdp(m);
    const DynModel b(2, [&](double s, Action x) { return m.dynamics(x)(s); }, [](double s, Action x) {
        return x == 0 ? 100.0 * s : -s;
    });
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        const double s = (seed + 0.5) / 200;
        REQUIRE(shooting_policy(a, wiggly_q(2), 1.0, 2, s, 1, seed) ==
                shooting_policy(b, TerminalQ::zero(2), 0.3, 2, s, 1, seed));
    }
    CHECK_THROWS_AS(shooting_policy(a, wiggly_q(2), 1.0, 2, 0.5, 0, 1), std::invalid_argument);
}

TEST_CASE("random shooting is seeded") {
    const DynModel model = DynModel::from_mdp(gen_rand(8));
    const TerminalQ q = wiggly_q(2);
    for (int i = 0; i < 100; ++i) {
        const double s = (i + 0.5) / 100;
        REQUIRE(shooting_policy(model, q, 1.0, 3, s, 5, 42) == shooting_policy(model, q, 1.0, 3, s, 5, 42));
    }
}

TEST_CASE("sequence_value") {
    const Mdp m = make_fractal_mdp(4);
    const DynModel model = DynModel::from_mdp(m);
    const TerminalQ q = wiggly_q(2);
    const std::vector<Action> seq{1, 0};
    const double s = 0.3;
    const double expect = model.reward(s, 1) + 0.75 * q(model.next(s, 1), 0);
    CHECK(sequence_value(model, q, 0.75, s, seq) == doctest::Approx(expect));
    CHECK_THROWS_AS(sequence_value(model, q, 0.75, s, std::vector<Action>{}), std::invalid_argument);
}

TEST_CASE("construct_coarse_q") {
    const QFunction q = construct_coarse_q(4, 2);
    const auto& f = q.per_action[0];
    CHECK(f.piece_count() == 8);
    CHECK(q.per_action[1] == f);
    for (double lo : {3.0, 7.0, 11.0, 15.0}) {
        CHECK(f((lo + 0.5) / 16) == doctest::Approx(8.0));
        CHECK(f((lo - 0.5) / 16) == 0.0);
    }
    const auto g = construct_coarse_q(5, 5).per_action[0];
    CHECK(g.piece_count() == 2);
    // k = H: all H leading digits are 1.
    CHECK(g.breakpoints()[1] == 1.0 - 1.0 / 32);
    for (int h : {6, 8}) {
        for (int k = 1; k <= h; ++k) CHECK(construct_coarse_q(h, k).per_action[0].piece_count() == (1u << (h - k + 1)));
    }
    CHECK_THROWS_AS(construct_coarse_q(4, 5), std::invalid_argument);
    CHECK_THROWS_AS(construct_coarse_q(4, 0), std::invalid_argument);
}

TEST_CASE("bootstrapped policy is optimal on the doubling-map family") {
    const int h = 6;
    const Mdp m = make_fractal_mdp(h);
    const DynModel model = DynModel::from_mdp(m);
    const double g = fractal_gamma(h);
    for (int k = 1; k <= h; ++k) {
        const TerminalQ q = TerminalQ::from_qfunction(construct_coarse_q(h, k));
        Rng rng(k);
        const int n = k <= 3 ? 10'000 : 1000;
        for (int i = 0; i < n; ++i) {
            const double s = sample_dyadic_state(rng);
            REQUIRE(boots_policy(model, q, g, k, s) == closed_form_pi_star(h, s));
        }
    }
}

TEST_CASE("rollouts") {
    const Mdp m = make_fractal_mdp(4);
    const ActFn zero = [](double, int) { return Action{0}; };
    CHECK(rollout_return(m, zero, 0.0, 32, 0.75) == 0.0);
    CHECK(rollout_return(m, zero, 0.75, 1, 0.75) == 1.0);
    CHECK_THROWS_AS(rollout_return(m, zero, 0.5, 0, 0.75), std::invalid_argument);

    const auto starts = midpoint_grid(512);
    CHECK(starts.size() == 512);
    CHECK(starts.front() == doctest::Approx(0.5 / 512));
    const ActFn pi = [](double s, int) { return closed_form_pi_star(4, s); };
    CHECK(mean_return(m, pi, starts, 32, 0.75) == mean_return_serial(m, pi, starts, 32, 0.75));
    const auto each = rollout_returns(m, pi, starts, 32, 0.75);
    CHECK(each.size() == starts.size());
    CHECK(std::accumulate(each.begin(), each.end(), 0.0) / 512 ==
          doctest::Approx(mean_return_serial(m, pi, starts, 32, 0.75)).epsilon(1e-14));
}

TEST_CASE("greedy rollouts match exact evaluation") {
    const Mdp m = semirand_reference();
    const DpResult r = value_iteration(m);
    const auto exact = evaluate_policy_exact(m, r.policy).eta;
    const PiecewisePolicy pi = r.policy;
    const ActFn act = [&](double s, int) { return pi(s); };
    Rng rng(5);
    std::vector<double> starts(10'000);
    for (auto& s : starts) s = rng.uniform();
    const auto g = rollout_returns(m, act, starts, m.horizon().steps(), 1.0);
    const double mean = std::accumulate(g.begin(), g.end(), 0.0) / g.size();
    double var = 0.0;
    for (double x : g) var += (x - mean) * (x - mean);
    const double se = std::sqrt(var / (g.size() - 1) / g.size());
    CHECK(std::abs(mean - exact) <= 3 * se + 1e-12);
}

TEST_CASE("episode actor") {
    const Mdp m = gen_semirand(11);
    const DpResult r = value_iteration(m);
    const int steps = m.horizon().steps();
    const DynModel model = DynModel::from_mdp(m);

    SUBCASE("k = 0 on a terminal Q is the greedy actor") {
        const TerminalQ q = TerminalQ::from_qfunction(r.q);
        const ActFn boots = boots_actor(model, q, 1.0, 0, steps), greedy = greedy_actor(q);
        for (double s : midpoint_grid(200)) REQUIRE(rollout_return(m, boots, s, steps, 1.0) ==
                                                    rollout_return(m, greedy, s, steps, 1.0));
    }
    SUBCASE("planning to the end of the episode is optimal") {
        const ActFn act = boots_actor(model, TerminalQ::zero(2), 1.0, steps, steps);
        for (double s : midpoint_grid(50)) REQUIRE(rollout_return(m, act, s, steps, 1.0) == doctest::Approx(r.value(s)).epsilon(1e-9));
    }
}

TEST_CASE("model clamps and validates") {
    const DynModel model(1, [](double s, Action) { return 2.0 * s - 0.5; }, [](double, Action) { return 0.0; });
    CHECK(model.next(0.0, 0) == 0.0);
    CHECK(model.next(1.0, 0) == 1.0);
    CHECK_THROWS_AS(DynModel(0, nullptr, nullptr), std::invalid_argument);
    CHECK_THROWS_AS(TerminalQ(0, nullptr), std::invalid_argument);
}

TEST_CASE("planner config json") {
    PlannerConfig c;
    c.mode = PlannerConfig::Mode::shooting;
    c.k = 5;
    c.n_candidates = 17;
    c.gamma_eff = 0.5;
    c.budget = 1000;
    const auto back = planner_config_from_json(nlohmann::json::parse(to_json(c).dump()));
    CHECK(back.mode == c.mode);
    CHECK(back.k == 5);
    CHECK(back.n_candidates == 17);
    CHECK(back.gamma_eff == 0.5);
    CHECK(back.budget == 1000);
    auto j = to_json(c);
    j["mode"] = "cem";
    CHECK_THROWS(planner_config_from_json(j));
}
