#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "pwlmdp/dp.hpp"
#include "pwlmdp/fractal.hpp"
#include "pwlmdp/grid_oracle.hpp"
#include "pwlmdp/planner.hpp"
#include "support.hpp"

using namespace pwlmdp;
using testing::near_breakpoint;
using testing::random_pwl;

namespace {

Mdp with_constant_reward(const Mdp& m, double c) {
    return Mdp(m.dynamics(), std::vector<PwlFunction>(m.action_count(), PwlFunction::constant(c)), m.horizon(),
               m.label());
}

PiecewisePolicy random_policy(Rng& rng, int pieces, std::size_t actions) {
    std::vector<double> xs{0.0};
    for (int i = 1; i < pieces; ++i) xs.push_back(rng.uniform());
    xs.push_back(1.0);
    std::sort(xs.begin(), xs.end());
    std::vector<Action> acts;
    for (int i = 0; i < pieces; ++i) acts.push_back(rng.below(actions));
    return PiecewisePolicy(xs, acts);
}

}  // namespace

TEST_CASE("backup from zero gives the rewards") {
    const Mdp m = gen_rand(5);
    const QFunction q = bellman_backup(m, zero_q(m));
    CHECK(q.steps_to_go == 1);
    for (Action a = 0; a < 2; ++a) CHECK(q.per_action[a] == simplify(m.reward(a)));
    CHECK_THROWS_AS(bellman_backup(make_lipschitz_mdp(4), q), std::invalid_argument);
}

TEST_CASE("one-step horizon") {
    const Mdp base = make_fractal_mdp(4);
    const Mdp m = base.with_horizon(HorizonSpec::finite(1));
    const DpResult r = value_iteration(m);
    for (Action a = 0; a < 2; ++a) CHECK(r.q.per_action[a] == simplify(m.reward(a)));
    const auto [pi, v] = argmax_select(r.q.per_action);
    CHECK(r.policy == pi);
    CHECK(r.trace.rows.size() == 1);
}

TEST_CASE("value iteration bookkeeping") {
    const Mdp m = gen_semirand(3);
    const DpResult r = value_iteration(m);
    CHECK(r.q.steps_to_go == m.horizon().steps());
    CHECK(r.trace.rows.size() == static_cast<std::size_t>(m.horizon().steps()));
    CHECK(r.step_policies.size() == static_cast<std::size_t>(m.horizon().steps()));
    CHECK(r.step_policies.front() == r.policy);
    CHECK(r.eta == doctest::Approx(integrate(r.value)).epsilon(1e-12));
    for (const auto& row : r.trace.rows) CHECK(row.residual >= 0.0);
    CHECK(r.trace.rows.back().policy_pieces == r.policy.piece_count());
    const std::string csv = r.trace.to_csv();
    CHECK(std::count(csv.begin(), csv.end(), '\n') == m.horizon().steps() + 1);
    CHECK(value_iteration(m, {.backups = 4}).trace.rows.size() == 4);
    CHECK_THROWS_AS(value_iteration(m, {.piece_cap = 5}), PieceCapExceeded);
}

TEST_CASE("exact evaluation of the DP policies reproduces the optimum") {
    for (std::uint64_t seed : {1, 2, 3}) {
        const Mdp m = gen_rand(seed);
        const DpResult r = value_iteration(m);
        CHECK(evaluate_policy_exact(m, r.step_policies).eta == doctest::Approx(r.eta).epsilon(1e-9));
    }
}

TEST_CASE("exact evaluation agrees with Monte Carlo") {
    // Exact iterates of this family double their piece count per step; keep T small.
    const Mdp m = make_fractal_mdp(4, 12);
    const auto pe = evaluate_policy_exact(m, PiecewisePolicy::constant(0));
    CHECK(pe.truncation_bound > 0.0);
    Rng rng(11);
    const int n = 100'000;
    double sum = 0, sq = 0;
    const ActFn act = [](double, int) { return Action{0}; };
    for (int i = 0; i < n; ++i) {
        const double g = rollout_return(m, act, rng.uniform(), m.horizon().steps(), m.horizon().gamma_eff());
        sum += g;
        sq += g * g;
    }
    const double mean = sum / n, se = std::sqrt((sq / n - mean * mean) / n);
    CHECK(std::abs(mean - pe.eta) <= 3 * se);
}

TEST_CASE("two-piece policy on the reference MDP is suboptimal") {
    const Mdp m = semirand_reference();
    const DpResult r = value_iteration(m);
    const PiecewisePolicy two({0, 0.5, 1}, {1, 0});
    CHECK(evaluate_policy_exact(m, two).eta < r.eta);
}

TEST_CASE("optimal policy dominates alternatives") {
    Rng rng(12);
    for (std::uint64_t seed : {4, 5}) {
        const Mdp m = gen_semirand(seed);
        const DpResult r = value_iteration(m);
        for (int t = 0; t < 20; ++t) {
            const auto pi = random_policy(rng, 1 + static_cast<int>(rng.below(30)), 2);
            CHECK(evaluate_policy_exact(m, pi).eta <= r.eta + 1e-9);
        }
    }
}

TEST_CASE("evaluation input checks") {
    const Mdp m = gen_rand(1);
    CHECK_THROWS_AS(evaluate_policy_exact(m, std::vector<PiecewisePolicy>{}), std::invalid_argument);
    CHECK_THROWS_AS(evaluate_policy_exact(m, std::vector<PiecewisePolicy>(3, PiecewisePolicy::constant(0))),
                    std::invalid_argument);
    CHECK_THROWS_AS(evaluate_policy_exact(m, PiecewisePolicy::constant(2)), std::invalid_argument);
}

TEST_CASE("constant zero reward has zero value") {
    const DpResult r = value_iteration(with_constant_reward(gen_rand(9), 0.0));
    CHECK(r.eta == 0.0);
    CHECK(r.q.max_pieces() == 1);
}

TEST_CASE("backups are monotone") {
    const Mdp m = gen_semirand(8);
    Rng rng(13);
    QFunction lo = zero_q(m), hi = zero_q(m);
    for (Action a = 0; a < 2; ++a) {
        lo.per_action[a] = random_pwl(rng, 6);
        hi.per_action[a] = affine_combine(lo.per_action[a], random_pwl(rng, 5), 1.0, 1.0);
    }
    const QFunction blo = bellman_backup(m, lo), bhi = bellman_backup(m, hi);
    for (int i = 0; i < 10'000; ++i) {
        const double s = rng.uniform();
        for (Action a = 0; a < 2; ++a) REQUIRE(blo(s, a) <= bhi(s, a) + 1e-12);
    }
}

TEST_CASE("discounted iterates contract") {
    for (int h : {3, 4, 5}) {
        const DpResult r = value_iteration(make_fractal_mdp(h, 3 * h));
        const double gamma = fractal_gamma(h);
        const auto& rows = r.trace.rows;
        for (std::size_t i = 2; i < rows.size(); ++i) CHECK(rows[i].residual <= (gamma + 1e-9) * rows[i - 1].residual + 1e-12);
    }
}

TEST_CASE("exact greedy policy matches the closed form") {
    // H = 3 is degenerate: both actions tie wherever the closed form picks 1.
    for (int h : {4, 5}) {
        const DpResult r = value_iteration(make_fractal_mdp(h, 3 * h));
        Rng rng(h);
        int agree = 0;
        const int n = 10'000;
        for (int i = 0; i < n; ++i) {
            const double s = rng.uniform();
            agree += r.policy(s) == closed_form_pi_star(h, s);
        }
        CHECK(agree >= 0.999 * n);
    }
}

TEST_CASE("qfunction json round trip") {
    const DpResult r = value_iteration(make_fractal_mdp(3, 8));
    const QFunction back = qfunction_from_json(nlohmann::json::parse(to_json(r.q).dump()));
    CHECK(back.per_action == r.q.per_action);
    CHECK(back.steps_to_go == r.q.steps_to_go);
    CHECK(back.discount == r.q.discount);
}

TEST_SUITE("grid oracle") {
    TEST_CASE("one step equals the reward at grid points") {
        const Mdp m = gen_rand(2);
        const GridQ g = grid_dp_oracle(m, 1000, 1);
        REQUIRE(g.steps() == 1);
        for (int i = 0; i < 1000; ++i)
            for (Action a = 0; a < 2; ++a) REQUIRE(g.q[0][a][i] == m.reward(a)(g.state(i)));
    }

    TEST_CASE("parallel and serial agree exactly") {
        const Mdp m = gen_semirand(6);
        const GridQ a = grid_dp_oracle(m, 20'000), b = grid_dp_oracle_serial(m, 20'000);
        CHECK(a.q == b.q);
        CHECK_THROWS_AS(grid_dp_oracle(m, 1), std::invalid_argument);
    }

    TEST_CASE("exact DP lies within the grid bound") {
        for (std::uint64_t seed : {0, 1, 2}) {
            const Mdp m = gen_semirand(seed);
            const int n = 100'000;
            const GridQ g = grid_dp_oracle(m, n);
            const DpResult r = value_iteration(m);
            const double bound = grid_error_bound(m, n);
            REQUIRE(std::isfinite(bound));
            double err = 0.0;
            for (int i = 0; i < n; ++i)
                for (Action a = 0; a < 2; ++a) err = std::max(err, std::abs(g.q.back()[a][i] - r.q(g.state(i), a)));
            CHECK(err <= bound);
        }
    }

    TEST_CASE("discontinuous iterates give an infinite bound") {
        CHECK(std::isinf(grid_error_bound(make_fractal_mdp(4, 6), 1000)));
    }

    TEST_CASE("dyadic grid matches the closed-form optimum") {
        // Grid points i/2^12 are mapped onto the grid exactly, so only truncation remains.
        const int h = 4;
        const Mdp m = make_fractal_mdp(h);
        const int n = 1 << 12;
        const GridQ g = grid_dp_oracle(m, n);
        const double gamma = fractal_gamma(h);
        const double tol = std::pow(gamma, m.horizon().steps()) / (1 - gamma) + 1e-9;
        double err = 0.0;
        for (int i = 0; i < n; ++i)
            err = std::max(err, std::abs(g.value(g.steps() - 1, i) - closed_form_v_star_exact(h, g.state(i))));
        CHECK(err <= tol);
    }
}
