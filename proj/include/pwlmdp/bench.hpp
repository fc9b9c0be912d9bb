#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "pwlmdp/dp.hpp"
#include "pwlmdp/learner.hpp"
#include "pwlmdp/mdp.hpp"

namespace pwlmdp {

enum class ExperimentKind { histogram, expressivity, boots_sweep, theory_verify };

ExperimentKind experiment_kind_from_string(const std::string& name);
std::string to_string(ExperimentKind k);

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::histogram;

    // histogram
    std::string method = "rand";
    int n_mdps = 1000;
    std::uint64_t base_seed = 0;
    std::size_t piece_cap = DpOptions{}.piece_cap;

    // expressivity / boots_sweep
    /// "reference", "rand:<seed>", "semirand:<seed>", or a path to an MDP file.
    std::string mdp = "reference";
    std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
    std::vector<int> widths{64};
    std::vector<int> ks{0, 1, 2, 3};
    int width = 64;
    int model_hidden = 32;
    TrainConfig train{};
    TrainConfig model_train = [] {
        TrainConfig c;
        c.optimizer = OptimizerKind::adam;
        return c;
    }();

    // theory_verify
    std::vector<int> horizons{4, 6, 8, 10};
    std::vector<int> lipschitz_horizons{4, 6, 8};
    int n_samples = 10'000;
    /// 0 means 4H, capped so that H + n_terms <= 52.
    int n_terms = 0;
    std::vector<int> coarse_ks{1, 3, 5, 8};
    int coarse_starts = 1000;
    bool run_bellman = true;
    bool run_coarse = true;

    void validate() const;
};

nlohmann::json to_json(const ExperimentConfig& c);
/// Missing keys keep their defaults; validation errors name the offending field.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);

/// Hash of the resolved config (FNV-1a over its compact JSON dump).
std::string config_hash(const ExperimentConfig& c);

/// Resolves ExperimentConfig::mdp.
Mdp resolve_mdp(const std::string& spec);

struct ResultRecord {
    std::string kind;
    std::string config_hash;
    /// One entry per instance or seed, in a fixed order independent of scheduling.
    nlohmann::json per_seed = nlohmann::json::array();
    nlohmann::json summary = nlohmann::json::object();
    /// Extra tabular outputs, file name -> CSV text.
    std::map<std::string, std::string> csv;
    double wall_clock_s = 0.0;
    bool passed = true;
};

/// Everything except wall-clock time, so re-runs compare byte for byte.
nlohmann::json results_json(const ResultRecord& r);

/// Fraction of values strictly above the threshold.
double fraction_above(const std::vector<std::size_t>& values, std::size_t threshold);

/// Decade bins [1,10), [10,100), ... as CSV "bin_lo,bin_hi,count".
std::string decade_histogram_csv(const std::vector<std::size_t>& values);

/// Exact DP on n generated MDPs; instance i uses child seed i of base_seed.
ResultRecord run_histogram(const std::string& method, int n_mdps, std::uint64_t base_seed,
                           std::size_t piece_cap = DpOptions{}.piece_cap);
/// Same records computed on one thread.
ResultRecord run_histogram_serial(const std::string& method, int n_mdps, std::uint64_t base_seed,
                                  std::size_t piece_cap = DpOptions{}.piece_cap);

ResultRecord run_expressivity(const Mdp& mdp, const std::vector<int>& widths, const std::vector<std::uint64_t>& seeds,
                              const TrainConfig& train);

ResultRecord run_boots_sweep(const Mdp& mdp, const std::vector<int>& ks, const std::vector<std::uint64_t>& seeds,
                             int width, int model_hidden, const TrainConfig& train, const TrainConfig& model_train);

ResultRecord run_theory_verify(const ExperimentConfig& config);

/// Dispatches on config.kind and stamps the config hash.
ResultRecord run_experiment(const ExperimentConfig& config);

/// config.json, results.json, timing.json and CSVs under dir, each written atomically.
void write_outputs(const std::filesystem::path& dir, const ExperimentConfig& config, const ResultRecord& record);

}  // namespace pwlmdp
