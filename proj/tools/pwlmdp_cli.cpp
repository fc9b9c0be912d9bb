// Command-line front end: gen, solve, eval, train, boots, verify, bench.
//
// Exit codes: 0 success, 1 usage error, 2 failed verification, 3 runtime abort.

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <omp.h>

#include <CLI11.hpp>
#include <json.hpp>

#include "pwlmdp/bench.hpp"
#include "pwlmdp/dp.hpp"
#include "pwlmdp/fractal.hpp"
#include "pwlmdp/io.hpp"
#include "pwlmdp/learner.hpp"
#include "pwlmdp/mdp.hpp"
#include "pwlmdp/planner.hpp"

namespace fs = std::filesystem;
using namespace pwlmdp;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitAssertion = 2;
constexpr int kExitRuntime = 3;

class UsageError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string utc_tag() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y%m%d-%H%M%S", &tm);
    return buf;
}

fs::path out_root() {
    const char* env = std::getenv("PWLMDP_OUT");
    return env && *env ? fs::path(env) : fs::path("out");
}

fs::path resolve_out(const std::string& explicit_dir, const std::string& experiment, const std::string& tag) {
    if (!explicit_dir.empty()) return explicit_dir;
    return out_root() / experiment / (tag.empty() ? utc_tag() : tag);
}

Mdp load_mdp(const std::string& spec) {
    try {
        return resolve_mdp(spec);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
}

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(10);
    os << v;
    return os.str();
}

struct Common {
    int jobs = 0;
};

// ---- gen -------------------------------------------------------------------

struct GenArgs {
    std::string method;
    std::uint64_t seed = 0;
    int horizon = 6;
    int truncation = 0;
    std::string out;
};

int cmd_gen(const GenArgs& a) {
    Mdp mdp = [&] {
        if (a.method == "rand") return gen_rand(a.seed);
        if (a.method == "semirand") return gen_semirand(a.seed);
        if (a.method == "reference") return semirand_reference();
        if (a.method == "fractal") return make_fractal_mdp(a.horizon, a.truncation);
        if (a.method == "lipschitz") return make_lipschitz_mdp(a.horizon, a.truncation);
        throw UsageError("unknown method '" + a.method + "'");
    }();
    write_json_atomic(a.out, to_json(mdp));
    std::cout << "label=" << mdp.label() << "\n";
    std::cout << "actions=" << mdp.action_count() << "\n";
    for (Action i = 0; i < mdp.action_count(); ++i)
        std::cout << "dynamics_pieces_a" << i << "=" << mdp.dynamics(i).piece_count() << " reward_pieces_a" << i << "="
                  << mdp.reward(i).piece_count() << "\n";
    std::cout << "range_check=ok\n";
    if (mdp.horizon().is_finite()) std::cout << "horizon=finite steps=" << mdp.horizon().steps() << "\n";
    else std::cout << "gamma=" << fmt(mdp.horizon().gamma_eff()) << " truncation=" << mdp.horizon().steps() << "\n";
    return kExitOk;
}

// ---- solve -----------------------------------------------------------------

struct SolveArgs {
    std::string mdp;
    std::string out;
    std::string tag;
    std::size_t piece_cap = DpOptions{}.piece_cap;
    int backups = 0;
};

int cmd_solve(const SolveArgs& a) {
    const Mdp mdp = load_mdp(a.mdp);
    const DpOptions opt{a.piece_cap, a.backups};
    const auto t0 = std::chrono::steady_clock::now();
    const DpResult r = value_iteration(mdp, opt);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const fs::path dir = resolve_out(a.out, "solve", a.tag);
    const json summary{{"policy_pieces", r.policy.piece_count()},
                       {"q_pieces", r.q.max_pieces()},
                       {"q_pieces_total", r.q.total_pieces()},
                       {"value_pieces", r.value.piece_count()},
                       {"eta_opt", r.eta},
                       {"backups", r.trace.rows.size()}};
    write_json_atomic(dir / "config.json", {{"mdp", a.mdp}, {"piece_cap", a.piece_cap}, {"backups", a.backups}});
    write_json_atomic(dir / "q.json", to_json(r.q));
    write_json_atomic(dir / "policy.json", to_json(r.policy));
    json steps = json::array();
    for (const auto& p : r.step_policies) steps.push_back(to_json(p));
    write_json_atomic(dir / "step_policies.json", steps);
    write_json_atomic(dir / "value.json", to_json(r.value));
    write_file_atomic(dir / "trace.csv", r.trace.to_csv());
    write_json_atomic(dir / "results.json", summary);
    write_json_atomic(dir / "timing.json", {{"wall_clock_s", secs}});
    std::cout << "policy_pieces=" << r.policy.piece_count() << " q_pieces=" << r.q.max_pieces()
              << " eta_opt=" << fmt(r.eta) << "\n";
    std::cout << "output=" << dir.string() << "\n";
    return kExitOk;
}

// ---- eval ------------------------------------------------------------------

struct EvalArgs {
    std::string mdp;
    std::string policy;
    int mc = 0;
    std::uint64_t seed = 0;
};

int cmd_eval(const EvalArgs& a) {
    const Mdp mdp = load_mdp(a.mdp);
    // A JSON array holds one policy per decision step, first decision first.
    const json pj = read_json_file(a.policy);
    std::vector<PiecewisePolicy> per_step;
    if (pj.is_array())
        for (const auto& p : pj) per_step.push_back(policy_from_json(p));
    else
        per_step.push_back(policy_from_json(pj));
    const PolicyEvaluation ev = evaluate_policy_exact(mdp, per_step);
    std::cout << "eta=" << fmt(ev.eta);
    if (ev.truncation_bound > 0.0) std::cout << " truncation_bound=" << fmt(ev.truncation_bound);
    std::cout << "\n";
    if (a.mc > 0) {
        Rng rng = Rng::child(a.seed, 0);
        std::vector<double> starts(static_cast<std::size_t>(a.mc));
        for (auto& s : starts) s = rng.uniform();
        const ActFn act = [per_step](double s, int t) {
            return per_step.size() == 1 ? per_step[0](s) : per_step[static_cast<std::size_t>(t)](s);
        };
        const auto r = rollout_returns(mdp, act, starts, mdp.horizon().steps(), mdp.horizon().gamma_eff());
        double mean = 0.0, sq = 0.0;
        for (double x : r) mean += x;
        mean /= static_cast<double>(r.size());
        for (double x : r) sq += (x - mean) * (x - mean);
        const double se = r.size() > 1 ? std::sqrt(sq / static_cast<double>(r.size() - 1) / r.size()) : 0.0;
        std::cout << "mc_mean=" << fmt(mean) << " mc_stderr=" << fmt(se) << " mc_n=" << a.mc << "\n";
    }
    return kExitOk;
}

// ---- train / boots ---------------------------------------------------------

struct TrainArgs {
    std::string mdp = "reference";
    std::string config;
    int width = 64;
    int episodes = -1;
    std::uint64_t seed = 0;
    std::string out;
    std::string tag;
};

TrainConfig load_train_config(const TrainArgs& a) {
    TrainConfig c;
    if (!a.config.empty()) {
        try {
            c = train_config_from_json(read_json_file(a.config));
        } catch (const std::invalid_argument& e) {
            throw UsageError(e.what());
        }
    }
    if (a.episodes >= 0) c.episodes = a.episodes;
    c.seed = a.seed;
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    return c;
}

int cmd_train(const TrainArgs& a) {
    const Mdp mdp = load_mdp(a.mdp);
    const TrainConfig c = load_train_config(a);
    const DqnResult r = dqn_train(mdp, a.width, c);
    const fs::path dir = resolve_out(a.out, "train", a.tag);
    write_json_atomic(dir / "config.json", {{"mdp", a.mdp}, {"width", a.width}, {"train", to_json(c)}});
    write_json_atomic(dir / "net.json", to_json(r.net));
    write_file_atomic(dir / "curve.csv", curve_csv(r.curve));
    write_json_atomic(dir / "results.json", {{"final_return", r.final_return}, {"evaluations", r.curve.size()}});
    std::cout << "final_return=" << fmt(r.final_return) << "\n";
    std::cout << "output=" << dir.string() << "\n";
    return kExitOk;
}

struct BootsArgs {
    TrainArgs train;
    int k = 3;
    std::string dynamics = "learned";
    int model_hidden = 32;
    std::string model_config;
};

int cmd_boots(const BootsArgs& a) {
    const Mdp mdp = load_mdp(a.train.mdp);
    const TrainConfig c = load_train_config(a.train);
    TrainConfig mc;
    mc.optimizer = OptimizerKind::adam;
    if (!a.model_config.empty()) {
        try {
            mc = train_config_from_json(read_json_file(a.model_config), mc);
        } catch (const std::invalid_argument& e) {
            throw UsageError(std::string("model config: ") + e.what());
        }
    }
    mc.seed = a.train.seed;
    if (a.dynamics != "learned" && a.dynamics != "true") throw UsageError("--dynamics must be 'learned' or 'true'");

    const DqnResult r = dqn_train(mdp, a.train.width, c);
    const int steps = mdp.horizon().steps();
    const double gamma = mdp.horizon().gamma_eff();
    std::optional<DynamicsFit> fit;
    if (a.dynamics == "learned") fit = fit_dynamics(r.buffer, a.model_hidden, mc, mdp);
    const DynModel model = fit ? fit->model : DynModel::from_mdp(mdp);
    const auto starts = midpoint_grid(c.eval_starts);
    const double ret = mean_return(mdp, boots_actor(model, q_from_net(r.net), gamma, a.k, steps), starts, steps, gamma);

    const fs::path dir = resolve_out(a.train.out, "boots", a.train.tag);
    json res{{"return", ret}, {"dqn_return", r.final_return}, {"k", a.k}, {"dynamics", a.dynamics}};
    if (fit) res["model_rmse"] = fit->heldout_rmse;
    write_json_atomic(dir / "config.json", {{"mdp", a.train.mdp},
                                            {"width", a.train.width},
                                            {"k", a.k},
                                            {"dynamics", a.dynamics},
                                            {"model_hidden", a.model_hidden},
                                            {"train", to_json(c)},
                                            {"model_train", to_json(mc)}});
    write_json_atomic(dir / "results.json", res);
    std::cout << "return=" << fmt(ret) << " dqn_return=" << fmt(r.final_return) << " k=" << a.k << "\n";
    std::cout << "output=" << dir.string() << "\n";
    return kExitOk;
}

// ---- verify ----------------------------------------------------------------

struct VerifyArgs {
    std::string family = "fractal";
    int horizon = 6;
    int samples = 10'000;
    int n_terms = 0;
    std::vector<int> ks;
    int starts = 1000;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_verify(const VerifyArgs& a) {
    ExperimentConfig c;
    c.kind = ExperimentKind::theory_verify;
    c.base_seed = a.seed;
    c.n_samples = a.samples;
    c.n_terms = a.n_terms;
    c.coarse_starts = a.starts;
    c.horizons.clear();
    c.lipschitz_horizons.clear();
    if (a.family == "fractal") {
        c.horizons = {a.horizon};
        c.run_coarse = false;
    } else if (a.family == "lipschitz") {
        c.lipschitz_horizons = {a.horizon};
        c.run_coarse = false;
    } else if (a.family == "coarse") {
        c.horizons = {a.horizon};
        c.run_bellman = false;
        if (!a.ks.empty()) c.coarse_ks = a.ks;
    } else {
        throw UsageError("--family must be fractal, lipschitz or coarse");
    }
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    const ResultRecord rec = run_experiment(c);
    for (const auto& row : rec.per_seed) std::cout << row.dump() << "\n";
    std::cout << "all_pass=" << (rec.passed ? "true" : "false") << "\n";
    if (!a.out.empty()) write_outputs(a.out, c, rec);
    return rec.passed ? kExitOk : kExitAssertion;
}

// ---- bench -----------------------------------------------------------------

struct BenchArgs {
    std::string kind;
    std::string config;
    std::string method;
    int n = -1;
    std::optional<std::uint64_t> seed;
    std::string mdp;
    std::vector<std::uint64_t> seeds;
    std::vector<int> widths;
    std::vector<int> ks;
    int episodes = -1;
    std::string out;
    std::string tag;
};

int cmd_bench(const BenchArgs& a) {
    ExperimentConfig c;
    try {
        json j = a.config.empty() ? json::object() : read_json_file(a.config);
        if (!a.kind.empty()) j["kind"] = a.kind;
        if (!a.method.empty()) j["method"] = a.method;
        if (a.n >= 0) j["n_mdps"] = a.n;
        if (a.seed) j["base_seed"] = *a.seed;
        if (!a.mdp.empty()) j["mdp"] = a.mdp;
        if (!a.seeds.empty()) j["seeds"] = a.seeds;
        if (!a.widths.empty()) j["widths"] = a.widths;
        if (!a.ks.empty()) j["ks"] = a.ks;
        if (a.episodes >= 0) j["train"]["episodes"] = a.episodes;
        c = experiment_config_from_json(j);
    } catch (const std::invalid_argument& e) {
        throw UsageError(e.what());
    }
    const ResultRecord rec = run_experiment(c);
    const fs::path dir = resolve_out(a.out, to_string(c.kind), a.tag);
    write_outputs(dir, c, rec);
    if (c.kind == ExperimentKind::histogram) {
        const auto& s = rec.summary;
        std::cout << "method=" << c.method << " n=" << s.at("n").get<int>()
                  << " frac_gt_100=" << fmt(s.at("frac_gt_100").get<double>())
                  << " frac_gt_1000=" << fmt(s.at("frac_gt_1000").get<double>())
                  << " capped=" << s.at("capped").get<int>() << "\n";
    } else {
        std::cout << rec.summary.dump() << "\n";
    }
    std::cout << "output=" << dir.string() << "\n";
    return rec.passed ? kExitOk : kExitAssertion;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Exact piecewise-linear MDP solver and bootstrapped planner"};
    app.require_subcommand(1);
    app.fallthrough();
    Common common;
    app.add_option("--jobs", common.jobs, "Worker threads (0 = OpenMP default)")->check(CLI::NonNegativeNumber);

    GenArgs gen;
    auto* g = app.add_subcommand("gen", "Generate an MDP file");
    g->add_option("--method", gen.method, "rand | semirand | reference | fractal | lipschitz")
        ->required()
        ->check(CLI::IsMember({"rand", "semirand", "reference", "fractal", "lipschitz"}));
    g->add_option("--seed", gen.seed, "Generator seed");
    g->add_option("--H", gen.horizon, "Effective horizon for fractal/lipschitz")->check(CLI::Range(3, 60));
    g->add_option("--T", gen.truncation, "Discounted truncation (0 = 8H)")->check(CLI::NonNegativeNumber);
    g->add_option("-o,--out", gen.out, "Output MDP JSON")->required();

    SolveArgs solve;
    auto* s = app.add_subcommand("solve", "Exact value iteration");
    s->add_option("mdp", solve.mdp, "MDP file, 'reference', 'rand:<seed>' or 'semirand:<seed>'")->required();
    s->add_option("-o,--out", solve.out, "Output directory");
    s->add_option("--tag", solve.tag, "Run tag under the output root");
    s->add_option("--piece-cap", solve.piece_cap, "Abort when a Q component exceeds this many pieces");
    s->add_option("--backups", solve.backups, "Number of backups (0 = horizon)")->check(CLI::NonNegativeNumber);
    std::uint64_t solve_seed = 0;
    s->add_option("--seed", solve_seed, "Unused; accepted for uniformity");

    EvalArgs ev;
    auto* e = app.add_subcommand("eval", "Exact return of a policy");
    e->add_option("mdp", ev.mdp, "MDP file or name")->required();
    e->add_option("--policy", ev.policy, "Policy JSON (object, or array of per-step policies)")->required()->check(CLI::ExistingFile);
    e->add_option("--mc", ev.mc, "Also run this many Monte Carlo rollouts")->check(CLI::NonNegativeNumber);
    e->add_option("--seed", ev.seed, "Seed for Monte Carlo starts");

    auto add_train = [](CLI::App* cmd, TrainArgs& t) {
        cmd->add_option("--mdp", t.mdp, "MDP file or name");
        cmd->add_option("--config", t.config, "Training config JSON")->check(CLI::ExistingFile);
        cmd->add_option("--width", t.width, "Hidden width of the Q-net")->check(CLI::PositiveNumber);
        cmd->add_option("--episodes", t.episodes, "Episode budget");
        cmd->add_option("--seed", t.seed, "Training seed");
        cmd->add_option("-o,--out", t.out, "Output directory");
        cmd->add_option("--tag", t.tag, "Run tag under the output root");
    };
    TrainArgs train;
    auto* t = app.add_subcommand("train", "Train a DQN");
    add_train(t, train);

    BootsArgs boots;
    auto* b = app.add_subcommand("boots", "Train a DQN, then plan with BOOTS on top of it");
    add_train(b, boots.train);
    b->add_option("--k", boots.k, "Lookahead depth")->check(CLI::NonNegativeNumber);
    b->add_option("--dynamics", boots.dynamics, "learned | true")->check(CLI::IsMember({"learned", "true"}));
    b->add_option("--model-hidden", boots.model_hidden, "Hidden width of dynamics nets")->check(CLI::PositiveNumber);
    b->add_option("--model-config", boots.model_config, "Dynamics training config JSON")->check(CLI::ExistingFile);

    VerifyArgs ver;
    auto* v = app.add_subcommand("verify", "Check closed-form optimality results");
    v->add_option("--family", ver.family, "fractal | lipschitz | coarse")
        ->check(CLI::IsMember({"fractal", "lipschitz", "coarse"}));
    v->add_option("--H", ver.horizon, "Effective horizon")->check(CLI::Range(3, 20));
    v->add_option("--samples", ver.samples, "Sampled states")->check(CLI::PositiveNumber);
    v->add_option("--n-terms", ver.n_terms, "Series terms (0 = 4H, capped at 52-H)");
    v->add_option("--k", ver.ks, "Lookahead depths for coarse");
    v->add_option("--starts", ver.starts, "Rollout starts for coarse")->check(CLI::PositiveNumber);
    v->add_option("--seed", ver.seed, "Sampling seed");
    v->add_option("-o,--out", ver.out, "Optional output directory");

    BenchArgs bench;
    auto* bn = app.add_subcommand("bench", "Run an experiment");
    bn->add_option("kind", bench.kind, "histogram | expressivity | boots_sweep | theory_verify");
    bn->add_option("--config", bench.config, "Experiment config JSON")->check(CLI::ExistingFile);
    bn->add_option("--method", bench.method, "Histogram generator");
    bn->add_option("--n", bench.n, "Histogram instance count");
    bn->add_option("--seed", bench.seed, "Base seed");
    bn->add_option("--mdp", bench.mdp, "MDP for learning experiments");
    bn->add_option("--seeds", bench.seeds, "Training seeds");
    bn->add_option("--widths", bench.widths, "Q-net widths");
    bn->add_option("--ks", bench.ks, "Lookahead depths");
    bn->add_option("--episodes", bench.episodes, "Episode budget");
    bn->add_option("-o,--out", bench.out, "Output directory");
    bn->add_option("--tag", bench.tag, "Run tag under the output root");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& err) {
        const int code = app.exit(err);
        return code == 0 ? kExitOk : kExitUsage;
    }
    if (common.jobs > 0) omp_set_num_threads(common.jobs);

    try {
        if (*g) return cmd_gen(gen);
        if (*s) return cmd_solve(solve);
        if (*e) return cmd_eval(ev);
        if (*t) return cmd_train(train);
        if (*b) return cmd_boots(boots);
        if (*v) return cmd_verify(ver);
        if (*bn) return cmd_bench(bench);
    } catch (const UsageError& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
