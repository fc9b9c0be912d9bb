#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "pwlmdp/mdp.hpp"
#include "pwlmdp/planner.hpp"
#include "pwlmdp/rng.hpp"

namespace pwlmdp {

/**
 * Fully connected ReLU network with scalar input.
 *
 * Parameters live in one flat vector; layer l stores its weight matrix
 * (row-major, out x in) followed by its bias. Hidden layers use ReLU, the
 * output layer is linear.
 */
class MlpNet {
public:
    /// Zero-initialised. widths = {1, hidden..., outputs}.
    explicit MlpNet(std::vector<int> widths);
    /// Weights and biases uniform in +-1/sqrt(fan_in).
    static MlpNet random(std::vector<int> widths, Rng& rng);

    const std::vector<int>& widths() const { return widths_; }
    std::size_t layer_count() const { return widths_.size() - 1; }
    int outputs() const { return widths_.back(); }

    std::vector<double>& params() { return params_; }
    const std::vector<double>& params() const { return params_; }
    std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
    std::size_t bias_offset(std::size_t layer) const;
    double weight(std::size_t layer, int out, int in) const;
    double bias(std::size_t layer, int out) const;

    /// Activations of every layer, input first; reused across calls.
    struct Cache {
        std::vector<std::vector<double>> act;
    };

    std::vector<double> forward(double s) const;
    const std::vector<double>& forward(double s, Cache& cache) const;
    /// Adds d(loss)/d(params) to grad given d(loss)/d(outputs) for the cached input.
    void backward(const Cache& cache, std::span<const double> d_out, std::span<double> grad) const;

    bool operator==(const MlpNet&) const = default;

private:
    std::vector<int> widths_;
    std::vector<std::size_t> offsets_;
    std::vector<double> params_;
};

/// Exact PWL form of each output of a one-hidden-layer net on [0,1].
std::vector<PwlFunction> mlp_to_pwl(const MlpNet& net);

nlohmann::json to_json(const MlpNet& net);
MlpNet mlp_from_json(const nlohmann::json& j);

class NonFiniteGradient : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SgdState {
    std::vector<double> velocity;
};

struct AdamState {
    std::vector<double> m, v;
    long t = 0;
};

/// v = momentum * v + g; p -= lr * v.
void sgd_step(MlpNet& net, std::span<const double> grad, SgdState& state, double lr, double momentum);
void adam_step(MlpNet& net, std::span<const double> grad, AdamState& state, double lr, double beta1 = 0.9,
               double beta2 = 0.999, double eps = 1e-8);

enum class OptimizerKind { sgd, adam };

struct TrainConfig {
    OptimizerKind optimizer = OptimizerKind::sgd;
    double lr = 1e-3;
    double momentum = 0.9;
    double beta1 = 0.9;
    double beta2 = 0.999;
    int batch = 128;
    int target_period = 50;
    /// epsilon = eps_floor + eps_scale * exp(-episode / eps_decay)
    double eps_floor = 0.01;
    double eps_scale = 0.89;
    double eps_decay = 200.0;
    int episodes = 2000;
    int eval_period = 100;
    int eval_starts = 256;
    int buffer_capacity = 10'000;
    /// Passes over the data for supervised fits.
    int epochs = 1000;
    double l1 = 1e-5;
    bool zero_init = false;
    std::uint64_t seed = 0;

    void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
/// Missing keys keep their defaults; errors name the offending field.
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

/// Tracks the update rule chosen in a TrainConfig.
class Optimizer {
public:
    Optimizer(const TrainConfig& config, std::size_t n_params);
    void step(MlpNet& net, std::span<const double> grad);

private:
    TrainConfig config_;
    SgdState sgd_;
    AdamState adam_;
};

struct Transition {
    double s = 0.0;
    Action a = 0;
    double r = 0.0;
    double next = 0.0;
    int step_index = 0;
    bool terminal = false;
};

/// FIFO ring buffer.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);
    void push(const Transition& t);
    std::size_t size() const { return data_.size(); }
    std::size_t capacity() const { return capacity_; }
    /// i-th oldest stored transition.
    const Transition& at(std::size_t i) const;

private:
    std::size_t capacity_;
    std::size_t head_ = 0;
    std::vector<Transition> data_;
};

struct CurvePoint {
    int episode = 0;
    double eval_return = 0.0;
    double epsilon = 0.0;
    double loss = 0.0;
};

std::string curve_csv(std::span<const CurvePoint> curve);

struct DqnResult {
    MlpNet net;
    std::vector<CurvePoint> curve;
    ReplayBuffer buffer;
    double final_return = 0.0;
};

TerminalQ q_from_net(MlpNet net);

/// Mean greedy return of a Q-net over the midpoint start grid.
double greedy_return(const Mdp& mdp, const MlpNet& net, int n_starts);

/**
 * One-step TD Q-learning with replay and a target network. Requires a finite
 * horizon; the last step of an episode is terminal.
 */
DqnResult dqn_train(const Mdp& mdp, int width, const TrainConfig& config);

struct DynamicsFit {
    DynModel model;
    std::vector<MlpNet> nets;
    double heldout_rmse = 0.0;
};

/**
 * One scalar net per action regressing s' on s (Adam on squared error), with
 * the last 10% of each action's transitions held out. The reward oracle is
 * taken from the MDP (rewards are known).
 */
DynamicsFit fit_dynamics(const ReplayBuffer& buffer, int hidden, const TrainConfig& config, const Mdp& reward_source);

struct OracleFitResult {
    double return_ratio = 0.0;
    std::size_t policy_pieces = 0;
    std::size_t q_pieces = 0;
    double train_loss = 0.0;
};

/**
 * Fits a one-hidden-layer net to exact optimal Q values of the doubling-map
 * family at n random states (squared error plus l1 * |params|_1), then scores
 * its greedy policy against the optimum by rollout.
 */
OracleFitResult oracle_fit_experiment(int horizon, int n, int width, const TrainConfig& config);

}  // namespace pwlmdp
