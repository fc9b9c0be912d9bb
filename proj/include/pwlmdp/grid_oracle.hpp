#pragma once

#include <vector>

#include "pwlmdp/mdp.hpp"

namespace pwlmdp {

/**
 * Brute-force DP on the grid s_i = i / grid_n, i = 0..grid_n-1.
 *
 * Next states are snapped to the nearest grid point (clamped). The model
 * functions are read into plain arrays and evaluated here, so nothing on the
 * PWL algebra path is shared with the exact solver.
 */
struct GridQ {
    int grid_n = 0;
    double gamma = 1.0;
    /// q[h][a][i]: Q with h+1 steps to go at grid point i.
    std::vector<std::vector<std::vector<double>>> q;

    double state(int i) const { return static_cast<double>(i) / grid_n; }
    int nearest(double x) const;
    /// max_a q[h][a][i]
    double value(int h, int i) const;
    int steps() const { return static_cast<int>(q.size()); }
};

/// steps = 0 uses the MDP's horizon length. Grid points run in parallel.
GridQ grid_dp_oracle(const Mdp& mdp, int grid_n, int steps = 0);

/// Single-threaded reference with identical output.
GridQ grid_dp_oracle_serial(const Mdp& mdp, int grid_n, int steps = 0);

/**
 * Upper bound on max_i |Q_grid(s_i,a) - Q(s_i,a)| after `steps` backups:
 * sum over backups of gamma^j * Lip(V_{h}) / grid_n, with the Lipschitz
 * constants of the exact value iterates. Infinite if some iterate jumps.
 */
double grid_error_bound(const Mdp& mdp, int grid_n, int steps = 0);

}  // namespace pwlmdp
