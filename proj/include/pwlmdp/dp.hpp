#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pwlmdp/mdp.hpp"

namespace pwlmdp {

/// One PWL function per action; steps_to_go counts the backups applied to Q = 0.
struct QFunction {
    std::vector<PwlFunction> per_action;
    int steps_to_go = 0;
    std::optional<double> discount;

    double operator()(double s, Action a) const { return per_action.at(a)(s); }
    std::size_t total_pieces() const;
    std::size_t max_pieces() const;
};

QFunction zero_q(const Mdp& mdp);

struct DpTraceRow {
    int iteration = 0;
    std::vector<std::size_t> pieces_per_action;
    std::size_t policy_pieces = 0;
    double residual = 0.0;  // sup |V_k - V_{k-1}|
};

struct DpTrace {
    std::vector<DpTraceRow> rows;
    /// iteration,pieces_a0,pieces_a1,...,policy_pieces,residual
    std::string to_csv() const;
};

class PieceCapExceeded : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct DpOptions {
    std::size_t piece_cap = 10'000'000;
    /// Number of backups; 0 means the horizon's H (finite) or T (discounted).
    int backups = 0;
};

struct DpResult {
    QFunction q;
    /// Greedy policy of q, i.e. the first-step policy for finite horizons.
    PiecewisePolicy policy;
    /// Greedy policies per decision step; index 0 has the most steps to go.
    std::vector<PiecewisePolicy> step_policies;
    PwlFunction value;
    /// Integral of value over the uniform start distribution.
    double eta = 0.0;
    DpTrace trace;
};

/// B[Q](s,a) = r(s,a) + gamma_eff * max_a' Q(f(s,a), a').
QFunction bellman_backup(const Mdp& mdp, const QFunction& q_next);

/// Exact value iteration from Q = 0. Throws PieceCapExceeded past options.piece_cap.
DpResult value_iteration(const Mdp& mdp, const DpOptions& options = {});

struct PolicyEvaluation {
    double eta = 0.0;
    PwlFunction value;
    /// gamma^T * max|r| / (1 - gamma) for discounted horizons, 0 otherwise.
    double truncation_bound = 0.0;
};

/**
 * Exact return of a policy from the uniform start distribution.
 *
 * per_step holds either one stationary policy or one policy per step
 * (index 0 = first decision).
 */
PolicyEvaluation evaluate_policy_exact(const Mdp& mdp, std::span<const PiecewisePolicy> per_step);
PolicyEvaluation evaluate_policy_exact(const Mdp& mdp, const PiecewisePolicy& stationary);

nlohmann::json to_json(const QFunction& q);
QFunction qfunction_from_json(const nlohmann::json& j);

}  // namespace pwlmdp
