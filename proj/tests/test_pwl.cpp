#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "pwlmdp/mdp.hpp"
#include "pwlmdp/planner.hpp"
#include "pwlmdp/pwl.hpp"
#include "support.hpp"

using namespace pwlmdp;
using testing::near_breakpoint;
using testing::random_pwl;

namespace {

PwlFunction doubling() { return make_fractal_mdp(4).dynamics(0); }

double max_dev(const PwlFunction& f, const PwlFunction& g, int n = 10'001) {
    double d = 0.0;
    for (int i = 0; i < n; ++i) {
        const double s = static_cast<double>(i) / (n - 1);
        if (near_breakpoint(f, s) || near_breakpoint(g, s)) continue;
        d = std::max(d, std::abs(f(s) - g(s)));
    }
    return d;
}

}  // namespace

TEST_CASE("eval") {
    CHECK(PwlFunction::linear(1, 0)(0.3) == doctest::Approx(0.3));
    CHECK(doubling()(0.75) == doctest::Approx(0.5));
    CHECK(doubling()(0.3) == doctest::Approx(0.6));
    CHECK(eval(doubling(), 1.0) == doctest::Approx(1.0));
    CHECK_THROWS_AS(doubling()(1.5), DomainError);
    CHECK_THROWS_AS(doubling()(-1e-9), DomainError);
    CHECK_THROWS_AS(doubling()(std::nan("")), DomainError);
}

TEST_CASE("constructor validation") {
    CHECK_THROWS_AS(PwlFunction({0.0, 1.0}, {}, {}), std::invalid_argument);
    CHECK_THROWS_AS(PwlFunction({0.1, 1.0}, {0.0}, {0.0}), std::invalid_argument);
    CHECK_THROWS_AS(PwlFunction({0.0, 0.5, 0.5, 1.0}, {0, 0, 0}, {0, 0, 0}), std::invalid_argument);
    CHECK_THROWS_AS(PwlFunction({0.0, 1.0}, {INFINITY}, {0.0}), std::invalid_argument);
}

TEST_CASE("compose") {
    SUBCASE("inverse pair gives identity") {
        const auto h = simplify(compose(PwlFunction::linear(2, 0), PwlFunction::linear(0.5, 0)));
        CHECK(h.piece_count() == 1);
        CHECK(h.slopes()[0] == doctest::Approx(1.0));
        CHECK(h.intercepts()[0] == doctest::Approx(0.0));
    }
    SUBCASE("doubling twice is 4s mod 1") {
        const auto f = doubling();
        const auto h = simplify(compose(f, f));
        CHECK(h.piece_count() == 4);
        Rng rng(1);
        for (int i = 0; i < 100'000; ++i) {
            const double s = rng.uniform();
            if (near_breakpoint(h, s)) continue;
            REQUIRE(std::abs(h(s) - f(f(s))) <= 1e-9);
            REQUIRE(std::abs(h(s) - std::fmod(4 * s, 1.0)) <= 1e-9);
        }
    }
    SUBCASE("constant outer absorbs") {
        Rng rng(2);
        const auto h = simplify(compose(PwlFunction::constant(1.0), random_pwl(rng, 7)));
        CHECK(h.piece_count() == 1);
        CHECK(h(0.42) == 1.0);
    }
    SUBCASE("inner leaving the domain") {
        CHECK_THROWS_AS(compose(doubling(), PwlFunction::linear(2, 0)), RangeError);
    }
}

TEST_CASE("pointwise_max") {
    const auto x = PwlFunction::linear(1, 0);
    SUBCASE("symmetric crossing") {
        const auto m = simplify(pointwise_max(x, PwlFunction::linear(-1, 1)));
        REQUIRE(m.piece_count() == 2);
        CHECK(m.breakpoints()[1] == doctest::Approx(0.5));
        CHECK(m.slopes()[0] == doctest::Approx(-1));
        CHECK(m.slopes()[1] == doctest::Approx(1));
    }
    SUBCASE("single crossing with a constant") {
        const auto m = simplify(pointwise_max(PwlFunction::constant(0.2), x));
        REQUIRE(m.piece_count() == 2);
        CHECK(m.breakpoints()[1] == doctest::Approx(0.2));
        CHECK(m(0.1) == doctest::Approx(0.2));
        CHECK(m(0.7) == doctest::Approx(0.7));
    }
    SUBCASE("idempotent") {
        Rng rng(3);
        for (int t = 0; t < 20; ++t) {
            const auto f = simplify(random_pwl(rng, 9));
            CHECK(simplify(pointwise_max(f, f)) == f);
        }
    }
    SUBCASE("commutative") {
        Rng rng(4);
        for (int t = 0; t < 20; ++t) {
            const auto f = random_pwl(rng, 6), g = random_pwl(rng, 8);
            CHECK(max_dev(pointwise_max(f, g), pointwise_max(g, f)) <= 1e-12);
        }
    }
}

TEST_CASE("affine_combine") {
    Rng rng(5);
    const auto f = simplify(random_pwl(rng, 5));
    const auto g = random_pwl(rng, 4);
    CHECK(simplify(affine_combine(f, g, 1.0, 0.0)) == f);
    const auto x = PwlFunction::linear(1, 0);
    const auto half = simplify(affine_combine(x, x, 0.5, 0.5));
    CHECK(half.piece_count() == 1);
    CHECK(half(0.37) == doctest::Approx(0.37));
    const auto h = simplify(affine_combine(PwlFunction::constant(1), x, 1.0, 0.9));
    CHECK(h.piece_count() == 1);
    CHECK(h.slopes()[0] == doctest::Approx(0.9));
    CHECK(h.intercepts()[0] == doctest::Approx(1.0));
}

TEST_CASE("simplify") {
    SUBCASE("exact duplicate pieces merge") {
        const auto f = simplify(PwlFunction({0, 0.5, 1}, {1, 1}, {0, 0}));
        CHECK(f.piece_count() == 1);
    }
    SUBCASE("minimal function is a fixed point") {
        const PwlFunction f({0, 0.3, 0.6, 1}, {1, -2, 0.5}, {0, 0.9, 0.1});
        CHECK(simplify(f) == f);
    }
    SUBCASE("sliver removal") {
        const double a = 0.4, w = 1e-15;
        const PwlFunction f({0, a, a + w, 1}, {1, 0, -1}, {0, 7, 1});
        const auto g = simplify(f);
        CHECK(g.piece_count() == f.piece_count() - 1);
        double dev = 0.0;
        for (std::size_t i = 0; i < g.piece_count(); ++i)
            for (double s : {g.breakpoints()[i], 0.5 * (g.breakpoints()[i] + g.breakpoints()[i + 1])})
                if (s < a || s >= a + w) dev = std::max(dev, std::abs(f(s) - g(s)));
        CHECK(dev <= kCanonical.value);
    }
    SUBCASE("idempotent and faithful on random input") {
        Rng rng(6);
        for (int t = 0; t < 50; ++t) {
            const auto f = random_pwl(rng, 12);
            const auto g = simplify(f);
            CHECK(simplify(g) == g);
            CHECK(max_dev(f, g) <= 1e-9);
        }
    }
    CHECK_THROWS_AS(simplify(PwlFunction::constant(0), -1, 0, 0), std::invalid_argument);
}

TEST_CASE("piece_count") {
    CHECK(piece_count(PwlFunction::linear(1, 0)) == 1);
    CHECK(piece_count(simplify(make_fractal_mdp(4).dynamics(1))) == 3);
    CHECK(piece_count(construct_coarse_q(4, 2).per_action[0]) == 8);
}

TEST_CASE("integrate") {
    CHECK(integrate(PwlFunction::linear(1, 0)) == doctest::Approx(0.5));
    CHECK(integrate(PwlFunction::constant(0.37)) == doctest::Approx(0.37));
    CHECK(integrate(make_fractal_mdp(4).reward(0)) == doctest::Approx(0.5));
    Rng rng(7);
    for (int t = 0; t < 20; ++t) {
        const auto f = random_pwl(rng, 5), g = random_pwl(rng, 7);
        CHECK(integrate(affine_combine(f, g, 2.0, -0.5)) ==
              doctest::Approx(2.0 * integrate(f) - 0.5 * integrate(g)).epsilon(1e-12));
    }
}

TEST_CASE("sup_norm, max_abs_slope, max_jump") {
    const PwlFunction f({0, 0.5, 1}, {2, -1}, {0, 0.2});
    CHECK(sup_norm(f) == doctest::Approx(1.0));
    CHECK(max_abs_slope(f) == 2.0);
    CHECK(max_jump(f) == doctest::Approx(1.3));
    CHECK(max_jump(PwlFunction::interpolate(std::vector{0.0, 0.3, 1.0}, std::vector{0.0, 1.0, 0.5})) <= 1e-15);
}

TEST_CASE("argmax_select") {
    SUBCASE("single action") {
        Rng rng(8);
        const std::vector<PwlFunction> q{simplify(random_pwl(rng, 4))};
        const auto [pi, v] = argmax_select(q);
        CHECK(pi == PiecewisePolicy::constant(0));
        CHECK(v == q[0]);
    }
    SUBCASE("crossing, tie to the lower index") {
        const std::vector<PwlFunction> q{PwlFunction::linear(1, 0), PwlFunction::linear(-1, 1)};
        const auto [pi, v] = argmax_select(q);
        REQUIRE(pi.piece_count() == 2);
        CHECK(pi.actions()[0] == 1);
        CHECK(pi.actions()[1] == 0);
        CHECK(pi.breakpoints()[1] == doctest::Approx(0.5));
        CHECK(pi(0.5) == 0);
        CHECK(v(0.25) == doctest::Approx(0.75));
    }
    SUBCASE("one backup of the doubling-map family against a grid argmax") {
        const Mdp m = make_fractal_mdp(4);
        const double g = m.horizon().gamma_eff();
        std::vector<PwlFunction> q;
        for (Action a = 0; a < 2; ++a)
            q.push_back(simplify(affine_combine(m.reward(a), compose(m.reward(a), m.dynamics(a)), 1.0, g)));
        const auto [pi, v] = argmax_select(q);
        int checked = 0;
        for (int i = 0; i < 10'000; ++i) {
            const double s = (i + 0.5) / 10'000;
            if (near_breakpoint(q[0], s, 1e-9) || near_breakpoint(q[1], s, 1e-9)) continue;
            const double q0 = q[0](s), q1 = q[1](s);
            if (std::abs(q0 - q1) < 1e-9) continue;
            CHECK(pi(s) == (q1 > q0 ? 1u : 0u));
            CHECK(v(s) == doctest::Approx(std::max(q0, q1)));
            ++checked;
        }
        CHECK(checked > 9'000);
    }
    CHECK_THROWS_AS(argmax_select(std::vector<PwlFunction>{}), std::invalid_argument);
}

TEST_CASE("random pairs agree with pointwise evaluation") {
    Rng rng(9);
    for (int t = 0; t < 10; ++t) {
        const auto f = random_pwl(rng, 1 + static_cast<int>(rng.below(12)));
        const auto g = random_pwl(rng, 1 + static_cast<int>(rng.below(12)));
        const auto c = compose(f, g), mx = pointwise_max(f, g), af = affine_combine(f, g, 0.7, -1.3);
        const std::vector<PwlFunction> qs{f, g};
        const auto [pi, v] = argmax_select(qs);
        for (int i = 0; i < 10'000; ++i) {
            const double s = rng.uniform();
            if (near_breakpoint(f, s) || near_breakpoint(g, s) || near_breakpoint(c, s)) continue;
            REQUIRE(std::abs(c(s) - f(g(s))) <= 1e-9);
            REQUIRE(std::abs(mx(s) - std::max(f(s), g(s))) <= 1e-9);
            REQUIRE(std::abs(af(s) - (0.7 * f(s) - 1.3 * g(s))) <= 1e-9);
            if (near_breakpoint(v, s)) continue;
            REQUIRE(std::abs(v(s) - std::max(f(s), g(s))) <= 1e-9);
            if (std::abs(f(s) - g(s)) > 1e-9) REQUIRE(pi(s) == (g(s) > f(s) ? 1u : 0u));
        }
    }
}

TEST_CASE("compose is associative") {
    Rng rng(10);
    for (int t = 0; t < 20; ++t) {
        const auto f = random_pwl(rng, 5), g = random_pwl(rng, 5), h = random_pwl(rng, 5);
        const auto left = compose(compose(f, g), h), right = compose(f, compose(g, h));
        CHECK(max_dev(left, right) <= 1e-9);
    }
}

TEST_CASE("splice") {
    const std::vector<PwlFunction> per{PwlFunction::constant(1), PwlFunction::linear(1, 0)};
    const PiecewisePolicy pi({0, 0.3, 1}, {1, 0});
    const auto f = splice(pi, per);
    CHECK(f(0.2) == doctest::Approx(0.2));
    CHECK(f(0.5) == doctest::Approx(1.0));
    CHECK_THROWS_AS(splice(PiecewisePolicy::constant(2), per), std::invalid_argument);
}

TEST_CASE("json round trip") {
    Rng rng(11);
    const auto f = random_pwl(rng, 9);
    CHECK(pwl_from_json(to_json(f)) == f);
    CHECK(pwl_from_json(nlohmann::json::parse(to_json(f).dump())) == f);
    auto bad = to_json(f);
    bad.erase(bad.begin());
    CHECK_THROWS(pwl_from_json(bad));
}

TEST_CASE("policy") {
    const PiecewisePolicy p({0, 0.25, 0.25 + 1e-14, 0.5, 1}, {0, 1, 0, 0});
    const auto m = p.merged();
    CHECK(m.piece_count() == 1);
    CHECK(m(1.0) == 0);
    CHECK(p(1.0) == 0);
    CHECK(p.max_action() == 1);
    CHECK(policy_from_json(to_json(p)) == p);
    CHECK_THROWS(PiecewisePolicy({0, 1}, {}));
}
