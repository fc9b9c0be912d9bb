#include "pwlmdp/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include "pwlmdp/fractal.hpp"
#include "pwlmdp/io.hpp"
#include "pwlmdp/planner.hpp"

namespace pwlmdp {

namespace {

struct HistogramRow {
    std::uint64_t seed = 0;
    std::size_t policy_pieces = 0;
    std::size_t q_pieces = 0;
    double eta = 0.0;
    bool capped = false;
};

HistogramRow histogram_instance(const std::string& method, std::uint64_t seed, std::size_t piece_cap) {
    const Mdp mdp = method == "rand" ? gen_rand(seed) : gen_semirand(seed);
    HistogramRow row;
    row.seed = seed;
    try {
        const DpResult r = value_iteration(mdp, DpOptions{piece_cap, 0});
        row.policy_pieces = r.policy.piece_count();
        row.q_pieces = r.q.max_pieces();
        row.eta = r.eta;
    } catch (const PieceCapExceeded&) {
        row.capped = true;
    }
    return row;
}

ResultRecord histogram_record(const std::string& method, const std::vector<HistogramRow>& rows) {
    ResultRecord rec;
    rec.kind = "histogram";
    std::vector<std::size_t> pieces;
    std::ostringstream inst;
    inst.precision(17);
    inst << "index,seed,policy_pieces,q_pieces,eta,capped\n";
    int capped = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        const auto& r = rows[i];
        rec.per_seed.push_back({{"index", i},
                                {"seed", r.seed},
                                {"policy_pieces", r.policy_pieces},
                                {"q_pieces", r.q_pieces},
                                {"eta", r.eta},
                                {"capped", r.capped}});
        inst << i << ',' << r.seed << ',' << r.policy_pieces << ',' << r.q_pieces << ',' << r.eta << ','
             << (r.capped ? 1 : 0) << '\n';
        if (r.capped) ++capped;
        else pieces.push_back(r.policy_pieces);
    }
    std::vector<std::size_t> sorted = pieces;
    std::sort(sorted.begin(), sorted.end());
    rec.summary = {{"method", method},
                   {"n", rows.size()},
                   {"capped", capped},
                   {"frac_gt_100", fraction_above(pieces, 100)},
                   {"frac_gt_1000", fraction_above(pieces, 1000)},
                   {"median_policy_pieces", sorted.empty() ? 0 : sorted[(sorted.size() - 1) / 2]},
                   {"max_policy_pieces", sorted.empty() ? 0 : sorted.back()}};
    rec.csv["instances.csv"] = inst.str();
    rec.csv["histogram.csv"] = decade_histogram_csv(pieces);
    return rec;
}

void check_method(const std::string& method) {
    if (method != "rand" && method != "semirand")
        throw std::invalid_argument("histogram method must be 'rand' or 'semirand', got '" + method + "'");
}

double median(std::vector<double> v) {
    if (v.empty()) return 0.0;
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

template <class T>
void read_field(const nlohmann::json& j, const char* key, T& field) {
    if (!j.contains(key)) return;
    try {
        field = j.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
        throw std::invalid_argument(std::string("config field '") + key + "' has the wrong type");
    }
}

int default_terms(int horizon) { return std::min(4 * horizon, kMaxBit - horizon); }

}  // namespace

ExperimentKind experiment_kind_from_string(const std::string& name) {
    if (name == "histogram") return ExperimentKind::histogram;
    if (name == "expressivity") return ExperimentKind::expressivity;
    if (name == "boots_sweep") return ExperimentKind::boots_sweep;
    if (name == "theory_verify") return ExperimentKind::theory_verify;
    throw std::invalid_argument("config field 'kind': unknown experiment '" + name +
                                "' (histogram, expressivity, boots_sweep, theory_verify)");
}

std::string to_string(ExperimentKind k) {
    switch (k) {
        case ExperimentKind::histogram: return "histogram";
        case ExperimentKind::expressivity: return "expressivity";
        case ExperimentKind::boots_sweep: return "boots_sweep";
        case ExperimentKind::theory_verify: return "theory_verify";
    }
    return "unknown";
}

void ExperimentConfig::validate() const {
    switch (kind) {
        case ExperimentKind::histogram:
            if (method != "rand" && method != "semirand")
                throw std::invalid_argument("config field 'method' must be 'rand' or 'semirand'");
            if (n_mdps < 1) throw std::invalid_argument("config field 'n_mdps' must be >= 1");
            break;
        case ExperimentKind::expressivity:
            if (seeds.empty()) throw std::invalid_argument("config field 'seeds' must not be empty");
            if (widths.empty()) throw std::invalid_argument("config field 'widths' must not be empty");
            for (int w : widths)
                if (w < 1) throw std::invalid_argument("config field 'widths' entries must be positive");
            break;
        case ExperimentKind::boots_sweep:
            if (seeds.empty()) throw std::invalid_argument("config field 'seeds' must not be empty");
            if (ks.empty()) throw std::invalid_argument("config field 'ks' must not be empty");
            for (int k : ks)
                if (k < 0) throw std::invalid_argument("config field 'ks' entries must be >= 0");
            if (width < 1) throw std::invalid_argument("config field 'width' must be positive");
            if (model_hidden < 1) throw std::invalid_argument("config field 'model_hidden' must be positive");
            break;
        case ExperimentKind::theory_verify:
            for (int h : horizons)
                if (h < 3 || h > 20) throw std::invalid_argument("config field 'horizons' entries must lie in [3,20]");
            for (int h : lipschitz_horizons)
                if (h < 3 || h > 20)
                    throw std::invalid_argument("config field 'lipschitz_horizons' entries must lie in [3,20]");
            if (n_samples < 1) throw std::invalid_argument("config field 'n_samples' must be >= 1");
            if (coarse_starts < 1) throw std::invalid_argument("config field 'coarse_starts' must be >= 1");
            break;
    }
    train.validate();
    model_train.validate();
}

nlohmann::json to_json(const ExperimentConfig& c) {
    return {{"kind", to_string(c.kind)},
            {"method", c.method},
            {"n_mdps", c.n_mdps},
            {"base_seed", c.base_seed},
            {"piece_cap", c.piece_cap},
            {"mdp", c.mdp},
            {"seeds", c.seeds},
            {"widths", c.widths},
            {"ks", c.ks},
            {"width", c.width},
            {"model_hidden", c.model_hidden},
            {"train", to_json(c.train)},
            {"model_train", to_json(c.model_train)},
            {"horizons", c.horizons},
            {"lipschitz_horizons", c.lipschitz_horizons},
            {"n_samples", c.n_samples},
            {"n_terms", c.n_terms},
            {"coarse_ks", c.coarse_ks},
            {"coarse_starts", c.coarse_starts},
            {"run_bellman", c.run_bellman},
            {"run_coarse", c.run_coarse}};
}

ExperimentConfig experiment_config_from_json(const nlohmann::json& j) {
    if (!j.is_object()) throw std::invalid_argument("experiment config must be a JSON object");
    static const char* known[] = {"kind",     "method",       "n_mdps",      "base_seed",    "piece_cap",
                                  "mdp",      "seeds",        "widths",      "ks",           "width",
                                  "model_hidden", "train",    "model_train", "horizons",     "lipschitz_horizons",
                                  "n_samples", "n_terms",     "coarse_ks",    "coarse_starts", "run_bellman",
                                  "run_coarse", "hash"};
    for (const auto& [key, _] : j.items())
        if (std::find(std::begin(known), std::end(known), key) == std::end(known))
            throw std::invalid_argument("config field '" + key + "' is not recognised");

    ExperimentConfig c;
    if (!j.contains("kind")) throw std::invalid_argument("config field 'kind' is required");
    c.kind = experiment_kind_from_string(j.at("kind").get<std::string>());
    read_field(j, "method", c.method);
    read_field(j, "n_mdps", c.n_mdps);
    read_field(j, "base_seed", c.base_seed);
    read_field(j, "piece_cap", c.piece_cap);
    read_field(j, "mdp", c.mdp);
    read_field(j, "seeds", c.seeds);
    read_field(j, "widths", c.widths);
    read_field(j, "ks", c.ks);
    read_field(j, "width", c.width);
    read_field(j, "model_hidden", c.model_hidden);
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
    if (j.contains("model_train")) c.model_train = train_config_from_json(j.at("model_train"), c.model_train);
    read_field(j, "horizons", c.horizons);
    read_field(j, "lipschitz_horizons", c.lipschitz_horizons);
    read_field(j, "n_samples", c.n_samples);
    read_field(j, "n_terms", c.n_terms);
    read_field(j, "coarse_ks", c.coarse_ks);
    read_field(j, "coarse_starts", c.coarse_starts);
    read_field(j, "run_bellman", c.run_bellman);
    read_field(j, "run_coarse", c.run_coarse);
    c.validate();
    return c;
}

std::string config_hash(const ExperimentConfig& c) { return fnv1a_hex(to_json(c).dump()); }

Mdp resolve_mdp(const std::string& spec) {
    if (spec == "reference") return semirand_reference();
    auto seed_of = [&spec](std::size_t colon) {
        try {
            return static_cast<std::uint64_t>(std::stoull(spec.substr(colon + 1)));
        } catch (const std::exception&) {
            throw std::invalid_argument("config field 'mdp': bad seed in '" + spec + "'");
        }
    };
    if (spec.rfind("rand:", 0) == 0) return gen_rand(seed_of(4));
    if (spec.rfind("semirand:", 0) == 0) return gen_semirand(seed_of(8));
    if (std::filesystem::exists(spec)) return mdp_from_json(read_json_file(spec));
    throw std::invalid_argument("config field 'mdp': '" + spec +
                                "' is neither reference, rand:<seed>, semirand:<seed> nor an existing file");
}

nlohmann::json results_json(const ResultRecord& r) {
    return {{"kind", r.kind},
            {"config_hash", r.config_hash},
            {"passed", r.passed},
            {"summary", r.summary},
            {"per_seed", r.per_seed}};
}

double fraction_above(const std::vector<std::size_t>& values, std::size_t threshold) {
    if (values.empty()) return 0.0;
    const auto n = std::count_if(values.begin(), values.end(), [threshold](std::size_t v) { return v > threshold; });
    return static_cast<double>(n) / static_cast<double>(values.size());
}

std::string decade_histogram_csv(const std::vector<std::size_t>& values) {
    std::vector<std::size_t> counts;
    for (std::size_t v : values) {
        std::size_t bin = 0;
        for (std::size_t hi = 10; v >= hi; hi *= 10) ++bin;
        if (counts.size() <= bin) counts.resize(bin + 1, 0);
        ++counts[bin];
    }
    std::ostringstream os;
    os << "bin_lo,bin_hi,count\n";
    std::size_t lo = 1;
    for (std::size_t c : counts) {
        os << lo << ',' << lo * 10 << ',' << c << '\n';
        lo *= 10;
    }
    return os.str();
}

ResultRecord run_histogram(const std::string& method, int n_mdps, std::uint64_t base_seed, std::size_t piece_cap) {
    check_method(method);
    std::vector<HistogramRow> rows(static_cast<std::size_t>(std::max(n_mdps, 0)));
#pragma omp parallel for schedule(dynamic, 1)
    for (int i = 0; i < n_mdps; ++i)
        rows[i] = histogram_instance(method, Rng::child_seed(base_seed, static_cast<std::uint64_t>(i)), piece_cap);
    return histogram_record(method, rows);
}

ResultRecord run_histogram_serial(const std::string& method, int n_mdps, std::uint64_t base_seed,
                                  std::size_t piece_cap) {
    check_method(method);
    std::vector<HistogramRow> rows;
    for (int i = 0; i < n_mdps; ++i)
        rows.push_back(histogram_instance(method, Rng::child_seed(base_seed, static_cast<std::uint64_t>(i)), piece_cap));
    return histogram_record(method, rows);
}

ResultRecord run_expressivity(const Mdp& mdp, const std::vector<int>& widths, const std::vector<std::uint64_t>& seeds,
                              const TrainConfig& train) {
    const double eta = value_iteration(mdp).eta;
    const std::size_t n = widths.size() * seeds.size();
    std::vector<double> finals(n);
    std::vector<std::string> curves(n);
    std::vector<std::string> errors(n);
#pragma omp parallel for schedule(dynamic, 1)
    for (long job = 0; job < static_cast<long>(n); ++job) {
        const int w = widths[static_cast<std::size_t>(job) / seeds.size()];
        TrainConfig c = train;
        c.seed = seeds[static_cast<std::size_t>(job) % seeds.size()];
        try {
            const DqnResult r = dqn_train(mdp, w, c);
            finals[job] = r.final_return;
            curves[job] = curve_csv(r.curve);
        } catch (const std::exception& e) {
            errors[job] = e.what();
        }
    }

    ResultRecord rec;
    rec.kind = "expressivity";
    nlohmann::json by_width = nlohmann::json::array();
    for (std::size_t wi = 0; wi < widths.size(); ++wi) {
        std::vector<double> ratios;
        for (std::size_t si = 0; si < seeds.size(); ++si) {
            const std::size_t job = wi * seeds.size() + si;
            nlohmann::json row{{"width", widths[wi]}, {"seed", seeds[si]}};
            if (errors[job].empty()) {
                row["final_return"] = finals[job];
                row["ratio"] = finals[job] / eta;
                ratios.push_back(finals[job] / eta);
                rec.csv["curve_w" + std::to_string(widths[wi]) + "_s" + std::to_string(seeds[si]) + ".csv"] =
                    curves[job];
            } else {
                row["error"] = errors[job];
            }
            rec.per_seed.push_back(row);
        }
        by_width.push_back({{"width", widths[wi]}, {"median_ratio", median(ratios)}, {"runs", ratios.size()}});
    }
    rec.summary = {{"eta_opt", eta}, {"widths", by_width}};
    return rec;
}

ResultRecord run_boots_sweep(const Mdp& mdp, const std::vector<int>& ks, const std::vector<std::uint64_t>& seeds,
                             int width, int model_hidden, const TrainConfig& train, const TrainConfig& model_train) {
    const double eta = value_iteration(mdp).eta;
    const int steps = mdp.horizon().steps();
    const double gamma = mdp.horizon().gamma_eff();
    const std::size_t ns = seeds.size();
    std::vector<nlohmann::json> rows(ns);

#pragma omp parallel for schedule(dynamic, 1)
    for (std::size_t si = 0; si < ns; ++si) {
        TrainConfig c = train;
        c.seed = seeds[si];
        TrainConfig mc = model_train;
        mc.seed = seeds[si];
        nlohmann::json row{{"seed", seeds[si]}};
        try {
            const DqnResult r = dqn_train(mdp, width, c);
            const DynamicsFit fit = fit_dynamics(r.buffer, model_hidden, mc, mdp);
            const auto starts = midpoint_grid(train.eval_starts);
            const TerminalQ q = q_from_net(r.net);
            row["dqn_return"] = r.final_return;
            row["model_rmse"] = fit.heldout_rmse;
            nlohmann::json learned = nlohmann::json::object();
            nlohmann::json oracle = nlohmann::json::object();
            for (int k : ks) {
                learned[std::to_string(k)] = mean_return(mdp, boots_actor(fit.model, q, gamma, k, steps), starts,
                                                         steps, gamma);
                oracle[std::to_string(k)] = mean_return(mdp, boots_actor(DynModel::from_mdp(mdp), q, gamma, k, steps),
                                                        starts, steps, gamma);
            }
            row["learned"] = learned;
            row["oracle"] = oracle;
        } catch (const std::exception& e) {
            row["error"] = e.what();
        }
        rows[si] = row;
    }

    ResultRecord rec;
    rec.kind = "boots_sweep";
    std::vector<double> dqn;
    for (const auto& r : rows) {
        rec.per_seed.push_back(r);
        if (!r.contains("error")) dqn.push_back(r.at("dqn_return").get<double>());
    }
    nlohmann::json per_k = nlohmann::json::array();
    for (int k : ks) {
        const std::string key = std::to_string(k);
        std::vector<double> learned, oracle;
        int beats = 0;
        for (const auto& r : rows) {
            if (r.contains("error")) continue;
            const double l = r.at("learned").at(key).get<double>();
            learned.push_back(l);
            oracle.push_back(r.at("oracle").at(key).get<double>());
            if (l >= r.at("dqn_return").get<double>()) ++beats;
        }
        per_k.push_back({{"k", k},
                         {"median_learned", median(learned)},
                         {"median_oracle", median(oracle)},
                         {"median_learned_ratio", median(learned) / eta},
                         {"median_oracle_ratio", median(oracle) / eta},
                         {"seeds_boots_ge_dqn", beats}});
    }
    rec.summary = {{"eta_opt", eta},
                   {"median_dqn", median(dqn)},
                   {"median_dqn_ratio", median(dqn) / eta},
                   {"runs", dqn.size()},
                   {"per_k", per_k}};

    std::ostringstream csv;
    csv.precision(17);
    csv << "seed,k,dqn_return,learned_return,oracle_return\n";
    for (const auto& r : rows) {
        if (r.contains("error")) continue;
        for (int k : ks)
            csv << r.at("seed").get<std::uint64_t>() << ',' << k << ',' << r.at("dqn_return").get<double>() << ','
                << r.at("learned").at(std::to_string(k)).get<double>() << ','
                << r.at("oracle").at(std::to_string(k)).get<double>() << '\n';
    }
    rec.csv["boots.csv"] = csv.str();
    return rec;
}

ResultRecord run_theory_verify(const ExperimentConfig& config) {
    ResultRecord rec;
    rec.kind = "theory_verify";
    int failures = 0;
    auto bellman = [&](int h, Family fam) {
        const int terms = config.n_terms > 0 ? config.n_terms : default_terms(h);
        const BellmanReport r = verify_bellman(h, config.n_samples, terms, fam, config.base_seed);
        nlohmann::json row = to_json(r);
        row["check"] = "bellman";
        const bool ok = r.passed() && r.greedy_match_fraction() >= 0.999;
        row["ok"] = ok;
        if (!ok) ++failures;
        rec.per_seed.push_back(row);
    };
    if (config.run_bellman) {
        for (int h : config.horizons) bellman(h, Family::fractal);
        for (int h : config.lipschitz_horizons) bellman(h, Family::lipschitz);
    }

    for (int h : config.run_coarse ? config.horizons : std::vector<int>{}) {
        const Mdp mdp = make_fractal_mdp(h);
        const double gamma = mdp.horizon().gamma_eff();
        const int steps = mdp.horizon().steps();
        const double tol = 3.0 * std::pow(gamma, steps) / (1.0 - gamma);
        Rng rng = Rng::child(config.base_seed, 1000 + static_cast<std::uint64_t>(h));
        std::vector<double> starts(static_cast<std::size_t>(config.coarse_starts));
        for (auto& s : starts) s = sample_dyadic_state(rng);
        for (int k : config.coarse_ks) {
            if (k < 1 || k > h) continue;
            const QFunction q = construct_coarse_q(h, k);
            const std::size_t pieces = q.per_action[0].piece_count();
            const std::size_t expected = std::size_t{1} << (h - k + 1);
            const DynModel model = DynModel::from_mdp(mdp);
            const TerminalQ tq = TerminalQ::from_qfunction(q);
            const ActFn act = [model, tq, gamma, k](double s, int) { return boots_policy(model, tq, gamma, k, s); };
            const auto returns = rollout_returns(mdp, act, starts, steps, gamma);
            double max_dev = 0.0, mean_ret = 0.0, mean_opt = 0.0;
            int mismatches = 0;
            for (std::size_t i = 0; i < starts.size(); ++i) {
                const double v = closed_form_v_star_exact(h, starts[i]);
                max_dev = std::max(max_dev, std::abs(returns[i] - v));
                mean_ret += returns[i];
                mean_opt += v;
                if (act(starts[i], 0) != closed_form_pi_star(h, starts[i])) ++mismatches;
            }
            mean_ret /= static_cast<double>(starts.size());
            mean_opt /= static_cast<double>(starts.size());
            const bool ok = pieces == expected && max_dev <= tol;
            if (!ok) ++failures;
            rec.per_seed.push_back({{"check", "coarse"},
                                    {"H", h},
                                    {"k", k},
                                    {"pieces", pieces},
                                    {"expected_pieces", expected},
                                    {"mean_return", mean_ret},
                                    {"mean_optimal", mean_opt},
                                    {"max_abs_deviation", max_dev},
                                    {"tolerance", tol},
                                    {"first_action_mismatches", mismatches},
                                    {"ok", ok}});
        }
    }
    rec.passed = failures == 0;
    rec.summary = {{"checks", rec.per_seed.size()}, {"failures", failures}, {"all_pass", rec.passed}};
    return rec;
}

ResultRecord run_experiment(const ExperimentConfig& config) {
    config.validate();
    const auto t0 = std::chrono::steady_clock::now();
    ResultRecord rec;
    switch (config.kind) {
        case ExperimentKind::histogram:
            rec = run_histogram(config.method, config.n_mdps, config.base_seed, config.piece_cap);
            break;
        case ExperimentKind::expressivity:
            rec = run_expressivity(resolve_mdp(config.mdp), config.widths, config.seeds, config.train);
            break;
        case ExperimentKind::boots_sweep:
            rec = run_boots_sweep(resolve_mdp(config.mdp), config.ks, config.seeds, config.width, config.model_hidden,
                                  config.train, config.model_train);
            break;
        case ExperimentKind::theory_verify:
            rec = run_theory_verify(config);
            break;
    }
    rec.config_hash = config_hash(config);
    rec.wall_clock_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return rec;
}

void write_outputs(const std::filesystem::path& dir, const ExperimentConfig& config, const ResultRecord& record) {
    nlohmann::json cfg = to_json(config);
    cfg["hash"] = config_hash(config);
    write_json_atomic(dir / "config.json", cfg);
    write_json_atomic(dir / "results.json", results_json(record));
    for (const auto& [name, text] : record.csv) write_file_atomic(dir / name, text);
    write_json_atomic(dir / "timing.json", {{"wall_clock_s", record.wall_clock_s}});
}

}  // namespace pwlmdp
