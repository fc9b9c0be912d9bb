#include "pwlmdp/learner.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>
#include <sstream>

#include "pwlmdp/fractal.hpp"

namespace pwlmdp {

namespace {

void check_finite(std::span<const double> grad) {
    for (std::size_t i = 0; i < grad.size(); ++i)
        if (!std::isfinite(grad[i]))
            throw NonFiniteGradient("non-finite gradient entry at parameter " + std::to_string(i));
}

void check_size(const MlpNet& net, std::span<const double> grad) {
    if (grad.size() != net.params().size())
        throw std::invalid_argument("optimizer: gradient size does not match the parameter count");
}

Action argmax(const std::vector<double>& v) {
    return static_cast<Action>(std::max_element(v.begin(), v.end()) - v.begin());
}

// Stream ids for the independent random sources of a training run.
enum : std::uint64_t { kInitStream = 1, kEnvStream = 2, kBatchStream = 3, kDataStream = 4, kEvalStream = 5 };

}  // namespace

MlpNet::MlpNet(std::vector<int> widths) : widths_(std::move(widths)) {
    if (widths_.size() < 2) throw std::invalid_argument("MlpNet needs at least input and output widths");
    if (widths_.front() != 1) throw std::invalid_argument("MlpNet input width must be 1");
    for (int w : widths_)
        if (w < 1) throw std::invalid_argument("MlpNet widths must be positive");
    std::size_t n = 0;
    for (std::size_t l = 0; l + 1 < widths_.size(); ++l) {
        offsets_.push_back(n);
        n += static_cast<std::size_t>(widths_[l + 1]) * (widths_[l] + 1);
    }
    params_.assign(n, 0.0);
}

MlpNet MlpNet::random(std::vector<int> widths, Rng& rng) {
    MlpNet net(std::move(widths));
    for (std::size_t l = 0; l < net.layer_count(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(net.widths_[l]));
        const std::size_t begin = net.offsets_[l];
        const std::size_t end = begin + static_cast<std::size_t>(net.widths_[l + 1]) * (net.widths_[l] + 1);
        for (std::size_t i = begin; i < end; ++i) net.params_[i] = rng.uniform(-bound, bound);
    }
    return net;
}

std::size_t MlpNet::bias_offset(std::size_t layer) const {
    return offsets_[layer] + static_cast<std::size_t>(widths_[layer + 1]) * widths_[layer];
}

double MlpNet::weight(std::size_t layer, int out, int in) const {
    return params_[offsets_[layer] + static_cast<std::size_t>(out) * widths_[layer] + in];
}

double MlpNet::bias(std::size_t layer, int out) const { return params_[bias_offset(layer) + out]; }

std::vector<double> MlpNet::forward(double s) const {
    Cache c;
    return forward(s, c);
}

const std::vector<double>& MlpNet::forward(double s, Cache& cache) const {
    cache.act.resize(widths_.size());
    cache.act[0].assign(1, s);
    for (std::size_t l = 0; l < layer_count(); ++l) {
        const int nin = widths_[l];
        const int nout = widths_[l + 1];
        const double* w = params_.data() + offsets_[l];
        const double* b = params_.data() + bias_offset(l);
        const auto& in = cache.act[l];
        auto& out = cache.act[l + 1];
        out.resize(static_cast<std::size_t>(nout));
        const bool hidden = l + 1 < layer_count();
        for (int o = 0; o < nout; ++o) {
            double z = b[o];
            const double* row = w + static_cast<std::size_t>(o) * nin;
            for (int i = 0; i < nin; ++i) z += row[i] * in[i];
            out[o] = hidden ? std::max(z, 0.0) : z;
        }
    }
    return cache.act.back();
}

void MlpNet::backward(const Cache& cache, std::span<const double> d_out, std::span<double> grad) const {
    if (d_out.size() != static_cast<std::size_t>(outputs())) throw std::invalid_argument("backward: d_out size");
    if (grad.size() != params_.size()) throw std::invalid_argument("backward: grad size");
    std::vector<double> delta(d_out.begin(), d_out.end());
    std::vector<double> prev;
    for (std::size_t l = layer_count(); l-- > 0;) {
        const int nin = widths_[l];
        const int nout = widths_[l + 1];
        const double* w = params_.data() + offsets_[l];
        double* gw = grad.data() + offsets_[l];
        double* gb = grad.data() + bias_offset(l);
        const auto& in = cache.act[l];
        prev.assign(static_cast<std::size_t>(nin), 0.0);
        for (int o = 0; o < nout; ++o) {
            const double d = delta[o];
            if (d == 0.0) continue;
            gb[o] += d;
            const double* row = w + static_cast<std::size_t>(o) * nin;
            double* grow = gw + static_cast<std::size_t>(o) * nin;
            for (int i = 0; i < nin; ++i) {
                grow[i] += d * in[i];
                prev[i] += d * row[i];
            }
        }
        // ReLU derivative of the layer below (the input layer has none).
        if (l > 0)
            for (int i = 0; i < nin; ++i)
                if (in[i] <= 0.0) prev[i] = 0.0;
        delta.swap(prev);
    }
}

std::vector<PwlFunction> mlp_to_pwl(const MlpNet& net) {
    if (net.layer_count() != 2) throw std::invalid_argument("mlp_to_pwl: only one-hidden-layer nets are supported");
    const int d = net.widths()[1];
    const int nout = net.outputs();
    std::vector<double> xs{0.0};
    for (int i = 0; i < d; ++i) {
        const double w = net.weight(0, i, 0);
        if (w == 0.0) continue;
        const double x = -net.bias(0, i) / w;
        if (x > 0.0 && x < 1.0) xs.push_back(x);
    }
    xs.push_back(1.0);
    std::sort(xs.begin(), xs.end());
    xs.erase(std::unique(xs.begin(), xs.end()), xs.end());

    const std::size_t pieces = xs.size() - 1;
    std::vector<std::vector<double>> slopes(nout, std::vector<double>(pieces));
    std::vector<std::vector<double>> intercepts(nout, std::vector<double>(pieces));
    for (std::size_t p = 0; p < pieces; ++p) {
        const double mid = 0.5 * (xs[p] + xs[p + 1]);
        for (int o = 0; o < nout; ++o) {
            double a = 0.0;
            double b = net.bias(1, o);
            for (int i = 0; i < d; ++i) {
                const double w = net.weight(0, i, 0);
                const double c = net.bias(0, i);
                if (w * mid + c <= 0.0) continue;
                const double v = net.weight(1, o, i);
                a += v * w;
                b += v * c;
            }
            slopes[o][p] = a;
            intercepts[o][p] = b;
        }
    }
    std::vector<PwlFunction> out;
    for (int o = 0; o < nout; ++o) out.push_back(simplify(PwlFunction(xs, slopes[o], intercepts[o])));
    return out;
}

nlohmann::json to_json(const MlpNet& net) { return {{"widths", net.widths()}, {"params", net.params()}}; }

MlpNet mlp_from_json(const nlohmann::json& j) {
    MlpNet net(j.at("widths").get<std::vector<int>>());
    auto p = j.at("params").get<std::vector<double>>();
    if (p.size() != net.params().size())
        throw std::invalid_argument("net json: 'params' has " + std::to_string(p.size()) + " entries, expected " +
                                    std::to_string(net.params().size()));
    net.params() = std::move(p);
    return net;
}

void sgd_step(MlpNet& net, std::span<const double> grad, SgdState& state, double lr, double momentum) {
    check_size(net, grad);
    check_finite(grad);
    auto& p = net.params();
    if (state.velocity.empty()) state.velocity.assign(p.size(), 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) {
        state.velocity[i] = momentum * state.velocity[i] + grad[i];
        p[i] -= lr * state.velocity[i];
    }
}

void adam_step(MlpNet& net, std::span<const double> grad, AdamState& state, double lr, double beta1, double beta2,
               double eps) {
    check_size(net, grad);
    check_finite(grad);
    auto& p = net.params();
    if (state.m.empty()) {
        state.m.assign(p.size(), 0.0);
        state.v.assign(p.size(), 0.0);
    }
    ++state.t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < p.size(); ++i) {
        state.m[i] = beta1 * state.m[i] + (1.0 - beta1) * grad[i];
        state.v[i] = beta2 * state.v[i] + (1.0 - beta2) * grad[i] * grad[i];
        p[i] -= lr * (state.m[i] / c1) / (std::sqrt(state.v[i] / c2) + eps);
    }
}

void TrainConfig::validate() const {
    auto positive = [](double v, const char* name) {
        if (!(v > 0.0)) throw std::invalid_argument(std::string("train.") + name + " must be positive");
    };
    positive(lr, "lr");
    positive(batch, "batch");
    positive(target_period, "target_period");
    positive(eps_decay, "eps_decay");
    positive(eval_period, "eval_period");
    positive(eval_starts, "eval_starts");
    positive(buffer_capacity, "buffer_capacity");
    if (episodes < 0) throw std::invalid_argument("train.episodes must be >= 0");
    if (epochs < 0) throw std::invalid_argument("train.epochs must be >= 0");
    if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("train.momentum must lie in [0,1)");
    if (l1 < 0.0) throw std::invalid_argument("train.l1 must be >= 0");
}

nlohmann::json to_json(const TrainConfig& c) {
    return {{"optimizer", c.optimizer == OptimizerKind::sgd ? "sgd" : "adam"},
            {"lr", c.lr},
            {"momentum", c.momentum},
            {"beta1", c.beta1},
            {"beta2", c.beta2},
            {"batch", c.batch},
            {"target_period", c.target_period},
            {"eps_floor", c.eps_floor},
            {"eps_scale", c.eps_scale},
            {"eps_decay", c.eps_decay},
            {"episodes", c.episodes},
            {"eval_period", c.eval_period},
            {"eval_starts", c.eval_starts},
            {"buffer_capacity", c.buffer_capacity},
            {"epochs", c.epochs},
            {"l1", c.l1},
            {"zero_init", c.zero_init},
            {"seed", c.seed}};
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
    if (!j.is_object()) throw std::invalid_argument("train config must be a JSON object");
    const nlohmann::json known = to_json(TrainConfig{});
    for (const auto& item : j.items())
        if (!known.contains(item.key())) throw std::invalid_argument("train." + item.key() + " is not a known field");
    auto read = [&j](const char* key, auto& field) {
        if (!j.contains(key)) return;
        try {
            field = j.at(key).get<std::decay_t<decltype(field)>>();
        } catch (const nlohmann::json::exception&) {
            throw std::invalid_argument(std::string("train.") + key + " has the wrong type");
        }
    };
    if (j.contains("optimizer")) {
        const auto kind = j.at("optimizer").get<std::string>();
        if (kind == "sgd") c.optimizer = OptimizerKind::sgd;
        else if (kind == "adam") c.optimizer = OptimizerKind::adam;
        else throw std::invalid_argument("train.optimizer must be 'sgd' or 'adam', got '" + kind + "'");
    }
    read("lr", c.lr);
    read("momentum", c.momentum);
    read("beta1", c.beta1);
    read("beta2", c.beta2);
    read("batch", c.batch);
    read("target_period", c.target_period);
    read("eps_floor", c.eps_floor);
    read("eps_scale", c.eps_scale);
    read("eps_decay", c.eps_decay);
    read("episodes", c.episodes);
    read("eval_period", c.eval_period);
    read("eval_starts", c.eval_starts);
    read("buffer_capacity", c.buffer_capacity);
    read("epochs", c.epochs);
    read("l1", c.l1);
    read("zero_init", c.zero_init);
    read("seed", c.seed);
    c.validate();
    return c;
}

Optimizer::Optimizer(const TrainConfig& config, std::size_t n_params) : config_(config) {
    sgd_.velocity.assign(n_params, 0.0);
    adam_.m.assign(n_params, 0.0);
    adam_.v.assign(n_params, 0.0);
}

void Optimizer::step(MlpNet& net, std::span<const double> grad) {
    if (config_.optimizer == OptimizerKind::sgd) sgd_step(net, grad, sgd_, config_.lr, config_.momentum);
    else adam_step(net, grad, adam_, config_.lr, config_.beta1, config_.beta2);
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity_ == 0) throw std::invalid_argument("ReplayBuffer capacity must be positive");
    data_.reserve(capacity_);
}

void ReplayBuffer::push(const Transition& t) {
    if (data_.size() < capacity_) {
        data_.push_back(t);
        return;
    }
    data_[head_] = t;
    head_ = (head_ + 1) % capacity_;
}

const Transition& ReplayBuffer::at(std::size_t i) const {
    if (i >= data_.size()) throw std::out_of_range("ReplayBuffer::at");
    return data_[(head_ + i) % data_.size()];
}

std::string curve_csv(std::span<const CurvePoint> curve) {
    std::ostringstream os;
    os.precision(17);
    os << "episode,eval_return,epsilon,loss\n";
    for (const auto& p : curve) os << p.episode << ',' << p.eval_return << ',' << p.epsilon << ',' << p.loss << '\n';
    return os.str();
}

TerminalQ q_from_net(MlpNet net) {
    auto shared = std::make_shared<const MlpNet>(std::move(net));
    return TerminalQ(static_cast<std::size_t>(shared->outputs()),
                     [shared](double s, Action a) { return shared->forward(s)[a]; });
}

double greedy_return(const Mdp& mdp, const MlpNet& net, int n_starts) {
    const auto starts = midpoint_grid(n_starts);
    const ActFn act = greedy_actor(q_from_net(net));
    return mean_return(mdp, act, starts, mdp.horizon().steps(), mdp.horizon().gamma_eff());
}

DqnResult dqn_train(const Mdp& mdp, int width, const TrainConfig& config) {
    config.validate();
    if (!mdp.horizon().is_finite()) throw std::invalid_argument("dqn_train: needs a finite-horizon MDP");
    if (width < 1) throw std::invalid_argument("dqn_train: width must be positive");
    const int horizon = mdp.horizon().steps();
    const int na = static_cast<int>(mdp.action_count());
    const double gamma = mdp.horizon().gamma_eff();

    Rng init = Rng::child(config.seed, kInitStream);
    Rng env = Rng::child(config.seed, kEnvStream);
    Rng sampler = Rng::child(config.seed, kBatchStream);
    MlpNet net = config.zero_init ? MlpNet({1, width, na}) : MlpNet::random({1, width, na}, init);
    MlpNet target = net;
    Optimizer opt(config, net.params().size());
    ReplayBuffer buffer(static_cast<std::size_t>(config.buffer_capacity));

    std::vector<CurvePoint> curve;
    std::vector<double> grad(net.params().size());
    std::vector<double> d_out(static_cast<std::size_t>(na));
    MlpNet::Cache cache, target_cache;
    long updates = 0;
    double loss_sum = 0.0;
    long loss_count = 0;

    for (int ep = 0; ep < config.episodes; ++ep) {
        const double eps = config.eps_floor + config.eps_scale * std::exp(-ep / config.eps_decay);
        double s = env.uniform();
        for (int t = 0; t < horizon; ++t) {
            Action a;
            if (env.uniform() < eps) a = static_cast<Action>(env.below(static_cast<std::uint64_t>(na)));
            else a = argmax(net.forward(s, cache));
            const auto [next, r] = step(mdp, s, a);
            buffer.push({s, a, r, next, t, t == horizon - 1});
            s = next;

            if (buffer.size() < static_cast<std::size_t>(config.batch)) continue;
            std::fill(grad.begin(), grad.end(), 0.0);
            double loss = 0.0;
            for (int b = 0; b < config.batch; ++b) {
                const Transition& tr = buffer.at(sampler.below(buffer.size()));
                double y = tr.r;
                if (!tr.terminal) {
                    const auto& qn = target.forward(tr.next, target_cache);
                    y += gamma * *std::max_element(qn.begin(), qn.end());
                }
                const auto& q = net.forward(tr.s, cache);
                const double err = q[tr.a] - y;
                loss += err * err;
                std::fill(d_out.begin(), d_out.end(), 0.0);
                d_out[tr.a] = 2.0 * err / config.batch;
                net.backward(cache, d_out, grad);
            }
            loss /= config.batch;
            if (!std::isfinite(loss))
                throw NonFiniteGradient("dqn_train: loss became non-finite at episode " + std::to_string(ep) +
                                        ", update " + std::to_string(updates));
            opt.step(net, grad);
            loss_sum += loss;
            ++loss_count;
            if (++updates % config.target_period == 0) target = net;
        }
        if ((ep + 1) % config.eval_period == 0) {
            CurvePoint p;
            p.episode = ep + 1;
            p.eval_return = greedy_return(mdp, net, config.eval_starts);
            p.epsilon = eps;
            p.loss = loss_count > 0 ? loss_sum / loss_count : 0.0;
            loss_sum = 0.0;
            loss_count = 0;
            curve.push_back(p);
        }
    }
    const double final_return = greedy_return(mdp, net, config.eval_starts);
    return DqnResult{std::move(net), std::move(curve), std::move(buffer), final_return};
}

DynamicsFit fit_dynamics(const ReplayBuffer& buffer, int hidden, const TrainConfig& config, const Mdp& reward_source) {
    config.validate();
    const std::size_t na = reward_source.action_count();
    std::vector<std::vector<std::pair<double, double>>> data(na);
    for (std::size_t i = 0; i < buffer.size(); ++i) {
        const Transition& t = buffer.at(i);
        if (t.a >= na) throw std::invalid_argument("fit_dynamics: transition action outside the MDP");
        data[t.a].emplace_back(t.s, t.next);
    }
    for (std::size_t a = 0; a < na; ++a)
        if (data[a].size() < 2)
            throw std::invalid_argument("fit_dynamics: buffer lacks transitions for action " + std::to_string(a));

    std::vector<MlpNet> nets;
    double sq = 0.0;
    std::size_t held = 0;
    for (std::size_t a = 0; a < na; ++a) {
        Rng init = Rng::child(config.seed, (a << 8) | kInitStream);
        Rng shuffle = Rng::child(config.seed, (a << 8) | kBatchStream);
        MlpNet net = MlpNet::random({1, hidden, 1}, init);
        AdamState state;
        const auto& d = data[a];
        const std::size_t n_test = std::max<std::size_t>(1, d.size() / 10);
        const std::size_t n_train = d.size() - n_test;
        std::vector<std::size_t> order(n_train);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::vector<double> grad(net.params().size());
        MlpNet::Cache cache;
        double d_out = 0.0;
        for (int epoch = 0; epoch < config.epochs; ++epoch) {
            for (std::size_t i = n_train; i > 1; --i) std::swap(order[i - 1], order[shuffle.below(i)]);
            for (std::size_t start = 0; start < n_train; start += static_cast<std::size_t>(config.batch)) {
                const std::size_t end = std::min(n_train, start + static_cast<std::size_t>(config.batch));
                std::fill(grad.begin(), grad.end(), 0.0);
                for (std::size_t i = start; i < end; ++i) {
                    const auto [s, next] = d[order[i]];
                    d_out = 2.0 * (net.forward(s, cache)[0] - next) / static_cast<double>(end - start);
                    net.backward(cache, std::span<const double>(&d_out, 1), grad);
                }
                adam_step(net, grad, state, config.lr, config.beta1, config.beta2);
            }
        }
        for (std::size_t i = n_train; i < d.size(); ++i) {
            const double e = std::clamp(net.forward(d[i].first)[0], 0.0, 1.0) - d[i].second;
            sq += e * e;
            ++held;
        }
        nets.push_back(std::move(net));
    }

    auto shared_nets = std::make_shared<const std::vector<MlpNet>>(nets);
    auto mdp = std::make_shared<const Mdp>(reward_source);
    DynModel model(
        na, [shared_nets](double s, Action a) { return (*shared_nets)[a].forward(s)[0]; },
        [mdp](double s, Action a) { return mdp->reward(a)(s); });
    return DynamicsFit{std::move(model), std::move(nets), std::sqrt(sq / static_cast<double>(held))};
}

OracleFitResult oracle_fit_experiment(int horizon, int n, int width, const TrainConfig& config) {
    config.validate();
    if (horizon > 20) throw std::invalid_argument("oracle_fit_experiment: H must be <= 20");
    if (n < 0) throw std::invalid_argument("oracle_fit_experiment: n must be >= 0");
    const Mdp mdp = make_fractal_mdp(horizon);
    const double gamma = mdp.horizon().gamma_eff();

    Rng data_rng = Rng::child(config.seed, kDataStream);
    std::vector<double> xs(static_cast<std::size_t>(n));
    std::vector<std::array<double, 2>> ys(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        xs[i] = sample_dyadic_state(data_rng);
        for (Action a = 0; a < 2; ++a) {
            const auto [next, r] = step(mdp, xs[i], a);
            ys[i][a] = r + gamma * closed_form_v_star_exact(horizon, next);
        }
    }

    Rng init = Rng::child(config.seed, kInitStream);
    MlpNet net = config.zero_init ? MlpNet({1, width, 2}) : MlpNet::random({1, width, 2}, init);
    AdamState state;
    std::vector<double> grad(net.params().size());
    MlpNet::Cache cache;
    std::array<double, 2> d_out{};
    double loss = 0.0;
    // Full-batch descent: squared error plus an l1 penalty on all parameters.
    for (int epoch = 0; n > 0 && epoch < config.epochs; ++epoch) {
        std::fill(grad.begin(), grad.end(), 0.0);
        loss = 0.0;
        for (int i = 0; i < n; ++i) {
            const auto& q = net.forward(xs[i], cache);
            for (int a = 0; a < 2; ++a) {
                const double e = q[a] - ys[i][a];
                loss += e * e / n;
                d_out[a] = 2.0 * e / n;
            }
            net.backward(cache, d_out, grad);
        }
        for (std::size_t p = 0; p < grad.size(); ++p) {
            const double w = net.params()[p];
            grad[p] += config.l1 * (w > 0.0 ? 1.0 : (w < 0.0 ? -1.0 : 0.0));
        }
        adam_step(net, grad, state, config.lr, config.beta1, config.beta2);
    }

    const auto q = mlp_to_pwl(net);
    const auto [policy, value] = argmax_select(q);
    OracleFitResult out;
    out.policy_pieces = policy.piece_count();
    out.q_pieces = std::max(q[0].piece_count(), q[1].piece_count());
    out.train_loss = loss;

    Rng eval = Rng::child(config.seed, kEvalStream);
    std::vector<double> starts(static_cast<std::size_t>(config.eval_starts));
    double optimal = 0.0;
    for (auto& s : starts) {
        s = sample_dyadic_state(eval);
        optimal += closed_form_v_star_exact(horizon, s);
    }
    const ActFn act = [policy = policy](double s, int) { return policy(s); };
    const double achieved =
        mean_return(mdp, act, starts, mdp.horizon().steps(), gamma) * static_cast<double>(starts.size());
    out.return_ratio = achieved / optimal;
    return out;
}

}  // namespace pwlmdp
