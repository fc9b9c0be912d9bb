#include "pwlmdp/dp.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace pwlmdp {

namespace {

std::vector<PwlFunction> backup_from_value(const Mdp& mdp, const PwlFunction& v_next) {
    const double gamma = mdp.horizon().gamma_eff();
    std::vector<PwlFunction> out;
    out.reserve(mdp.action_count());
    for (Action a = 0; a < mdp.action_count(); ++a)
        out.push_back(affine_combine(mdp.reward(a), compose(v_next, mdp.dynamics(a)), 1.0, gamma));
    return out;
}

double sup_diff(const PwlFunction& f, const PwlFunction& g) { return sup_norm(affine_combine(f, g, 1.0, -1.0)); }

std::optional<double> discount_of(const Mdp& mdp) {
    if (mdp.horizon().is_finite()) return std::nullopt;
    return mdp.horizon().gamma_eff();
}

}  // namespace

std::size_t QFunction::total_pieces() const {
    std::size_t n = 0;
    for (const auto& f : per_action) n += f.piece_count();
    return n;
}

std::size_t QFunction::max_pieces() const {
    std::size_t n = 0;
    for (const auto& f : per_action) n = std::max(n, f.piece_count());
    return n;
}

QFunction zero_q(const Mdp& mdp) {
    return QFunction{std::vector<PwlFunction>(mdp.action_count(), PwlFunction::constant(0.0)), 0, discount_of(mdp)};
}

std::string DpTrace::to_csv() const {
    std::ostringstream os;
    os.precision(17);
    const std::size_t actions = rows.empty() ? 0 : rows.front().pieces_per_action.size();
    os << "iteration";
    for (std::size_t a = 0; a < actions; ++a) os << ",pieces_a" << a;
    os << ",policy_pieces,residual\n";
    for (const auto& r : rows) {
        os << r.iteration;
        for (auto p : r.pieces_per_action) os << ',' << p;
        os << ',' << r.policy_pieces << ',' << r.residual << '\n';
    }
    return os.str();
}

QFunction bellman_backup(const Mdp& mdp, const QFunction& q_next) {
    if (q_next.per_action.size() != mdp.action_count())
        throw std::invalid_argument("bellman_backup: Q action count does not match the MDP");
    const auto v_next = argmax_select(q_next.per_action).second;
    return QFunction{backup_from_value(mdp, v_next), q_next.steps_to_go + 1, discount_of(mdp)};
}

DpResult value_iteration(const Mdp& mdp, const DpOptions& options) {
    const int n = options.backups > 0 ? options.backups : mdp.horizon().steps();
    QFunction q = zero_q(mdp);
    auto [policy, value] = argmax_select(q.per_action);
    DpTrace trace;
    std::vector<PiecewisePolicy> policies;
    policies.reserve(static_cast<std::size_t>(n));

    for (int it = 1; it <= n; ++it) {
        q.per_action = backup_from_value(mdp, value);
        q.steps_to_go = it;
        for (Action a = 0; a < mdp.action_count(); ++a)
            if (q.per_action[a].piece_count() > options.piece_cap)
                throw PieceCapExceeded("value_iteration: Q for action " + std::to_string(a) + " reached " +
                                       std::to_string(q.per_action[a].piece_count()) + " pieces at iteration " +
                                       std::to_string(it) + " (cap " + std::to_string(options.piece_cap) + ")");
        auto [next_policy, next_value] = argmax_select(q.per_action);
        DpTraceRow row;
        row.iteration = it;
        for (const auto& f : q.per_action) row.pieces_per_action.push_back(f.piece_count());
        row.policy_pieces = next_policy.piece_count();
        row.residual = sup_diff(next_value, value);
        trace.rows.push_back(std::move(row));
        policies.push_back(next_policy);
        policy = std::move(next_policy);
        value = std::move(next_value);
    }
    std::reverse(policies.begin(), policies.end());
    const double eta = integrate(value);
    return DpResult{std::move(q), std::move(policy), std::move(policies), std::move(value), eta, std::move(trace)};
}

PolicyEvaluation evaluate_policy_exact(const Mdp& mdp, std::span<const PiecewisePolicy> per_step) {
    const int n = mdp.horizon().steps();
    if (per_step.empty()) throw std::invalid_argument("evaluate_policy_exact: no policy given");
    if (per_step.size() != 1 && per_step.size() != static_cast<std::size_t>(n))
        throw std::invalid_argument("evaluate_policy_exact: need 1 or " + std::to_string(n) + " policies");
    for (const auto& p : per_step)
        if (p.max_action() >= mdp.action_count())
            throw std::invalid_argument("evaluate_policy_exact: policy uses an action the MDP lacks");

    const double gamma = mdp.horizon().gamma_eff();
    PwlFunction v = PwlFunction::constant(0.0);
    for (int h = n - 1; h >= 0; --h) {
        const PiecewisePolicy& pi = per_step.size() == 1 ? per_step[0] : per_step[static_cast<std::size_t>(h)];
        std::vector<PwlFunction> q;
        q.reserve(mdp.action_count());
        for (Action a = 0; a < mdp.action_count(); ++a) {
            // Only actions the policy uses need a backup; others get a placeholder.
            const bool used = std::find(pi.actions().begin(), pi.actions().end(), a) != pi.actions().end();
            q.push_back(used ? affine_combine(mdp.reward(a), compose(v, mdp.dynamics(a)), 1.0, gamma)
                             : PwlFunction::constant(0.0));
        }
        v = splice(pi, q);
    }
    PolicyEvaluation out{integrate(v), v, 0.0};
    if (!mdp.horizon().is_finite()) {
        double rmax = 0.0;
        for (const auto& r : mdp.reward()) rmax = std::max(rmax, sup_norm(r));
        out.truncation_bound = std::pow(gamma, n) * rmax / (1.0 - gamma);
    }
    return out;
}

PolicyEvaluation evaluate_policy_exact(const Mdp& mdp, const PiecewisePolicy& stationary) {
    return evaluate_policy_exact(mdp, std::span<const PiecewisePolicy>(&stationary, 1));
}

nlohmann::json to_json(const QFunction& q) {
    nlohmann::json per = nlohmann::json::array();
    for (const auto& f : q.per_action) per.push_back(to_json(f));
    nlohmann::json j{{"per_action", per}, {"steps_to_go", q.steps_to_go}};
    j["discount"] = q.discount ? nlohmann::json(*q.discount) : nlohmann::json(nullptr);
    return j;
}

QFunction qfunction_from_json(const nlohmann::json& j) {
    QFunction q;
    for (const auto& f : j.at("per_action")) q.per_action.push_back(pwl_from_json(f));
    q.steps_to_go = j.at("steps_to_go").get<int>();
    if (j.contains("discount") && !j.at("discount").is_null()) q.discount = j.at("discount").get<double>();
    return q;
}

}  // namespace pwlmdp
