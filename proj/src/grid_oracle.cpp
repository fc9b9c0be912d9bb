#include "pwlmdp/grid_oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "pwlmdp/dp.hpp"

namespace pwlmdp {

namespace {

struct RawPwl {
    std::vector<double> xs, a, b;

    explicit RawPwl(const PwlFunction& f)
        : xs(f.breakpoints().begin(), f.breakpoints().end()),
          a(f.slopes().begin(), f.slopes().end()),
          b(f.intercepts().begin(), f.intercepts().end()) {}

    double operator()(double s) const {
        auto it = std::upper_bound(xs.begin() + 1, xs.end() - 1, s);
        const auto i = static_cast<std::size_t>(it - xs.begin()) - 1;
        return a[i] * s + b[i];
    }
};

struct RawModel {
    std::vector<RawPwl> f, r;
    double gamma;
    int steps;
};

RawModel raw_model(const Mdp& mdp, int steps) {
    RawModel m{{}, {}, mdp.horizon().gamma_eff(), steps > 0 ? steps : mdp.horizon().steps()};
    for (Action a = 0; a < mdp.action_count(); ++a) {
        m.f.emplace_back(mdp.dynamics(a));
        m.r.emplace_back(mdp.reward(a));
    }
    return m;
}

GridQ solve(const Mdp& mdp, int grid_n, int steps, bool threaded) {
    if (grid_n < 2) throw std::invalid_argument("grid_dp_oracle: grid_n must be >= 2");
    const RawModel m = raw_model(mdp, steps);
    const std::size_t na = m.f.size();
    GridQ g;
    g.grid_n = grid_n;
    g.gamma = m.gamma;

    // Next-state index and reward per (a, i) do not change between steps.
    std::vector<std::vector<int>> next(na, std::vector<int>(grid_n));
    std::vector<std::vector<double>> rew(na, std::vector<double>(grid_n));
    std::vector<double> v(grid_n, 0.0);
    for (std::size_t a = 0; a < na; ++a) {
#pragma omp parallel for schedule(static) if (threaded)
        for (int i = 0; i < grid_n; ++i) {
            const double s = g.state(i);
            next[a][i] = g.nearest(std::clamp(m.f[a](s), 0.0, 1.0));
            rew[a][i] = m.r[a](s);
        }
    }
    for (int h = 0; h < m.steps; ++h) {
        std::vector<std::vector<double>> qh(na, std::vector<double>(grid_n));
        for (std::size_t a = 0; a < na; ++a) {
#pragma omp parallel for schedule(static) if (threaded)
            for (int i = 0; i < grid_n; ++i) qh[a][i] = rew[a][i] + m.gamma * v[next[a][i]];
        }
#pragma omp parallel for schedule(static) if (threaded)
        for (int i = 0; i < grid_n; ++i) {
            double best = qh[0][i];
            for (std::size_t a = 1; a < na; ++a) best = std::max(best, qh[a][i]);
            v[i] = best;
        }
        g.q.push_back(std::move(qh));
    }
    return g;
}

}  // namespace

int GridQ::nearest(double x) const {
    const long i = std::lround(x * grid_n);
    return static_cast<int>(std::clamp<long>(i, 0, grid_n - 1));
}

double GridQ::value(int h, int i) const {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& qa : q.at(h)) best = std::max(best, qa.at(i));
    return best;
}

GridQ grid_dp_oracle(const Mdp& mdp, int grid_n, int steps) { return solve(mdp, grid_n, steps, true); }

GridQ grid_dp_oracle_serial(const Mdp& mdp, int grid_n, int steps) { return solve(mdp, grid_n, steps, false); }

double grid_error_bound(const Mdp& mdp, int grid_n, int steps) {
    const int n = steps > 0 ? steps : mdp.horizon().steps();
    const double gamma = mdp.horizon().gamma_eff();
    // Error after h backups: e_h <= gamma * (e_{h-1} + Lip(V_{h-1}) / grid_n).
    double e = 0.0;
    QFunction q = zero_q(mdp);
    for (int h = 1; h <= n; ++h) {
        const PwlFunction v = argmax_select(q.per_action).second;
        const double lip = max_jump(v) > 1e-9 ? std::numeric_limits<double>::infinity() : max_abs_slope(v);
        e = gamma * (e + lip / grid_n);
        if (h < n) q = bellman_backup(mdp, q);
    }
    return e + 1e-9;
}

}  // namespace pwlmdp
