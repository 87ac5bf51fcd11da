// Attackable agents.
//
// Both learners expose one introspection surface to the attack side:
//   - preferences(s): per-expert scores (Q-values for the value learner,
//     policy logits for the discrete actor-critic, log-densities of the grid
//     actions for the continuous one)
//   - adversarial_input_gradient(s): input gradient of the misclassification
//     loss used by the signed-gradient noise
//   - act(s, rng): rng == nullptr means greedy evaluation play
//
// DqnAgent: replay ring + target network + epsilon-greedy, squared TD error.
// A3cAgent: one network with policy and value heads, n-step advantage
// updates applied atomically; workers run on independent env instances.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <istream>
#include <memory>
#include <mutex>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "rlta/core.hpp"
#include "rlta/envs.hpp"
#include "rlta/numerics.hpp"

namespace rlta {

// ---------------------------------------------------------------------------
// Discretization of continuous action spaces (and a passthrough for discrete
// ones): experts-are-actions needs a finite action table everywhere.
// ---------------------------------------------------------------------------

struct ActionGrid {
    ActionSpace::Kind kind = ActionSpace::Kind::discrete;
    std::vector<std::vector<double>> points;  // continuous: one raw action per entry
    int discrete_count = 0;

    int size() const {
        return kind == ActionSpace::Kind::discrete ? discrete_count
                                                   : static_cast<int>(points.size());
    }

    ActionValue to_action(int id) const {
        if (id < 0 || id >= size()) throw std::out_of_range("ActionGrid: id out of range");
        if (kind == ActionSpace::Kind::discrete) return ActionValue::make_discrete(id);
        return ActionValue::make_continuous(points[static_cast<std::size_t>(id)]);
    }

    static ActionGrid discrete(int d) {
        if (d < 2) throw std::invalid_argument("ActionGrid: need at least 2 actions");
        ActionGrid g;
        g.kind = ActionSpace::Kind::discrete;
        g.discrete_count = d;
        return g;
    }

    static ActionGrid continuous(std::vector<std::vector<double>> pts) {
        if (pts.size() < 2) throw std::invalid_argument("ActionGrid: need at least 2 actions");
        for (const auto& p : pts)
            for (double v : p)
                if (v < -1.0 || v > 1.0)
                    throw std::invalid_argument("ActionGrid: entries must lie in [-1,1]");
        ActionGrid g;
        g.kind = ActionSpace::Kind::continuous;
        g.points = std::move(pts);
        return g;
    }

    // 3x3 torque grid over the two effective reacher joints, encoded in the
    // raw 4-dim action as (t1, 0, t2, 0)
    static ActionGrid reacher_default() {
        std::vector<std::vector<double>> pts;
        for (double t1 : {-1.0, 0.0, 1.0})
            for (double t2 : {-1.0, 0.0, 1.0}) pts.push_back({t1, 0.0, t2, 0.0});
        return continuous(std::move(pts));
    }

    // 7-point steering grid for the car
    static ActionGrid car_default() {
        std::vector<std::vector<double>> pts;
        for (int i = 0; i < 7; ++i) pts.push_back({-1.0 + i * (2.0 / 6.0)});
        return continuous(std::move(pts));
    }

    static ActionGrid for_env(EnvKind kind) {
        switch (kind) {
            case EnvKind::reacher: return reacher_default();
            case EnvKind::collector: return discrete(4);
            case EnvKind::car: return car_default();
        }
        throw std::invalid_argument("ActionGrid: unknown env kind");
    }
};

// ---------------------------------------------------------------------------
// Victim interface consumed by the attack side.
// ---------------------------------------------------------------------------

class Victim {
  public:
    virtual ~Victim() = default;
    virtual const char* kind() const = 0;
    /// Number of experts d seen by the timing attackers.
    virtual int expert_count() const = 0;
    /// True when preferences derive from a policy head rather than Q-values
    /// (selects the policy flavor of the attack potential).
    virtual bool policy_based() const = 0;
    /// Greedy action when rng is null; exploration/sampling play otherwise.
    virtual ActionValue act(const StateVec& state, RngStream* rng) const = 0;
    /// Per-expert scores: Q-values, policy logits, or grid-action log-densities.
    virtual std::vector<double> preferences(const StateVec& state) const = 0;
    /// d(cross-entropy(softmax(logits), argmax logits))/d(input).
    virtual std::vector<double> adversarial_input_gradient(const StateVec& state) const = 0;
    virtual void save(std::ostream& os) const = 0;
};

inline std::unique_ptr<Victim> load_victim(std::istream& is);

/// Signed-gradient attack on any victim: state + epsilon * sign(dJ/dstate).
/// Defined here (not with the other noise ops) because it needs the victim.
inline StateVec fgsm_attack(const Victim& victim, const StateVec& state, double epsilon) {
    std::vector<double> g = victim.adversarial_input_gradient(state);
    StateVec out(state.size());
    for (std::size_t i = 0; i < state.size(); ++i) {
        double s = g[i] > 0.0 ? 1.0 : (g[i] < 0.0 ? -1.0 : 0.0);
        out[i] = state[i] + epsilon * s;
    }
    return out;
}

// ---------------------------------------------------------------------------
// DQN
// ---------------------------------------------------------------------------

struct DqnConfig {
    std::vector<int> hidden = {64, 64};
    HiddenActivation activation = HiddenActivation::tanh_fn;
    double gamma = 0.99;
    double lr = 1e-3;
    int replay_capacity = 50000;
    int batch_size = 64;
    int target_sync = 1000;  // optimizer steps between target refreshes
    double eps_start = 1.0;
    double eps_end = 0.05;
    int eps_decay_steps = 50000;  // env steps to anneal over
    int train_every = 4;          // env steps per optimizer step
    int warmup_steps = 1000;      // env steps before learning starts

    void validate() const {
        if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("DqnConfig: gamma in [0,1]");
        if (batch_size < 1 || replay_capacity < batch_size)
            throw std::invalid_argument("DqnConfig: replay must hold at least one batch");
        if (eps_start < eps_end) throw std::invalid_argument("DqnConfig: eps_start < eps_end");
        if (target_sync < 1 || train_every < 1 || eps_decay_steps < 1)
            throw std::invalid_argument("DqnConfig: periods must be positive");
    }
};

class DqnAgent final : public Victim {
  public:
    DqnAgent(int obs_dim, ActionGrid grid, DqnConfig cfg, std::uint64_t seed)
        : grid_(std::move(grid)), cfg_(cfg), rng_(derive_seed(seed, 0xd02)) {
        cfg_.validate();
        MlpSpec spec;
        spec.layer_sizes.push_back(obs_dim);
        for (int h : cfg_.hidden) spec.layer_sizes.push_back(h);
        spec.layer_sizes.push_back(grid_.size());
        spec.hidden = cfg_.activation;
        spec.output = OutputActivation::identity;
        RngStream init(derive_seed(seed, 0xd01));
        online_ = init_mlp(spec, init);
        target_ = online_;
        opt_ = make_adam(online_, cfg_.lr);
        replay_.reserve(static_cast<std::size_t>(cfg_.replay_capacity));
    }

    const char* kind() const override { return "dqn"; }
    int expert_count() const override { return grid_.size(); }
    bool policy_based() const override { return false; }

    std::vector<double> q_values(const StateVec& state) const { return mlp_forward(online_, state); }
    std::vector<double> preferences(const StateVec& state) const override { return q_values(state); }

    ActionValue act(const StateVec& state, RngStream* rng) const override {
        if (rng != nullptr && rng_uniform(*rng) < epsilon())
            return grid_.to_action(rng_below(*rng, grid_.size()));
        return grid_.to_action(argmax_lowest(q_values(state)));
    }

    int greedy_id(const StateVec& state) const { return argmax_lowest(q_values(state)); }

    std::vector<double> adversarial_input_gradient(const StateVec& state) const override {
        std::vector<double> q = q_values(state);
        CeResult ce = cross_entropy_grad(softmax(q), argmax_lowest(q));
        return mlp_backward(online_, state, ce.grad_at_logits).input_grad;
    }

    /// Linear anneal over env steps, floored at eps_end.
    double epsilon() const {
        double frac = std::min(1.0, static_cast<double>(env_steps_) / cfg_.eps_decay_steps);
        return cfg_.eps_start + (cfg_.eps_end - cfg_.eps_start) * frac;
    }

    /// Stores a transition whose action field holds the grid id.
    void observe(const StateVec& s, int action_id, double reward, const StateVec& next,
                 bool done) {
        Transition t;
        t.state = s;
        t.action = ActionValue::make_discrete(action_id);
        t.reward = reward;
        t.next_state = next;
        t.done = done;
        if (static_cast<int>(replay_.size()) < cfg_.replay_capacity) {
            replay_.push_back(std::move(t));
        } else {
            replay_[replay_head_] = std::move(t);
            replay_head_ = (replay_head_ + 1) % static_cast<std::size_t>(cfg_.replay_capacity);
        }
        env_steps_ += 1;
    }

    /// One optimizer step on a uniformly sampled batch; empty when the replay
    /// cannot fill a batch yet or the warmup has not elapsed.
    std::optional<double> train_step() {
        if (static_cast<int>(replay_.size()) < cfg_.batch_size || env_steps_ < cfg_.warmup_steps)
            return std::nullopt;
        std::vector<Transition> batch;
        batch.reserve(static_cast<std::size_t>(cfg_.batch_size));
        for (int i = 0; i < cfg_.batch_size; ++i)
            batch.push_back(replay_[static_cast<std::size_t>(
                rng_below(rng_, static_cast<int>(replay_.size())))]);
        return train_on_batch(batch);
    }

    /// Squared TD error against the frozen target network; returns batch loss.
    double train_on_batch(const std::vector<Transition>& batch) {
        if (batch.empty()) throw std::invalid_argument("DqnAgent: empty batch");
        MlpGrads grads = zero_grads_like(online_);
        double loss = 0.0;
        const double scale = 1.0 / static_cast<double>(batch.size());
        for (const Transition& t : batch) {
            std::vector<double> q = mlp_forward(online_, t.state);
            double y = t.reward;
            if (!t.done) {
                std::vector<double> qn = mlp_forward(target_, t.next_state);
                y += cfg_.gamma * *std::max_element(qn.begin(), qn.end());
            }
            int a = t.action.discrete_id;
            double err = q[static_cast<std::size_t>(a)] - y;
            loss += err * err * scale;
            std::vector<double> out_grad(q.size(), 0.0);
            out_grad[static_cast<std::size_t>(a)] = 2.0 * err * scale;
            mlp_backward_acc(online_, t.state, out_grad, grads);
        }
        adam_step(opt_, online_, grads);
        train_steps_ += 1;
        if (train_steps_ % cfg_.target_sync == 0) target_ = online_;
        return loss;
    }

    void sync_target() { target_ = online_; }

    const MlpParams& online_net() const { return online_; }
    const MlpParams& target_net() const { return target_; }
    const ActionGrid& grid() const { return grid_; }
    const DqnConfig& config() const { return cfg_; }
    long env_steps() const { return env_steps_; }
    long train_steps() const { return train_steps_; }
    int replay_size() const { return static_cast<int>(replay_.size()); }

    void save(std::ostream& os) const override;

  private:
    friend std::unique_ptr<Victim> load_victim(std::istream& is);

    ActionGrid grid_;
    DqnConfig cfg_;
    MlpParams online_;
    MlpParams target_;
    AdamState opt_;
    std::vector<Transition> replay_;
    std::size_t replay_head_ = 0;
    long env_steps_ = 0;
    long train_steps_ = 0;
    RngStream rng_;
};

// ---------------------------------------------------------------------------
// A3C-style advantage actor-critic: one network, policy head plus value head.
// Discrete head: d logits. Continuous head: k pre-squash means, fixed stddev.
// ---------------------------------------------------------------------------

struct A3cConfig {
    std::vector<int> hidden = {64, 64};
    HiddenActivation activation = HiddenActivation::tanh_fn;
    double gamma = 0.99;
    double lr = 1e-3;
    int n_step = 5;
    double entropy_coef = 0.01;
    double action_sigma = 0.1;  // continuous exploration stddev
    int n_workers = 1;

    void validate() const {
        if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("A3cConfig: gamma in [0,1]");
        if (n_step < 1) throw std::invalid_argument("A3cConfig: n_step must be positive");
        if (!(action_sigma > 0.0)) throw std::invalid_argument("A3cConfig: action_sigma > 0");
        if (n_workers < 1) throw std::invalid_argument("A3cConfig: need at least one worker");
    }
};

struct A3cStep {
    StateVec state;
    ActionValue action;
    double reward = 0.0;
};

class A3cAgent final : public Victim {
  public:
    A3cAgent(int obs_dim, ActionSpace action_space, ActionGrid grid, A3cConfig cfg,
             std::uint64_t seed)
        : space_(action_space), grid_(std::move(grid)), cfg_(cfg) {
        cfg_.validate();
        MlpSpec spec;
        spec.layer_sizes.push_back(obs_dim);
        for (int h : cfg_.hidden) spec.layer_sizes.push_back(h);
        spec.layer_sizes.push_back(policy_dim() + 1);  // heads share the trunk
        spec.hidden = cfg_.activation;
        spec.output = OutputActivation::identity;
        RngStream init(derive_seed(seed, 0xa3c));
        params_ = init_mlp(spec, init);
        opt_ = make_adam(params_, cfg_.lr);
    }

    const char* kind() const override { return "a3c"; }
    bool policy_based() const override { return true; }
    bool continuous() const { return space_.kind == ActionSpace::Kind::continuous; }
    int policy_dim() const { return continuous() ? space_.size : grid_.size(); }
    int expert_count() const override { return grid_.size(); }

    /// Discrete: action probabilities. Continuous: tanh-squashed means.
    std::vector<double> policy(const StateVec& state) const {
        std::vector<double> out = net_forward(state);
        out.pop_back();
        if (continuous()) {
            for (double& m : out) m = std::tanh(m);
            return out;
        }
        return softmax(out);
    }

    double value(const StateVec& state) const { return net_forward(state).back(); }

    ActionValue act(const StateVec& state, RngStream* rng) const override {
        if (continuous()) {
            std::vector<double> means = policy(state);
            if (rng != nullptr)
                for (double& m : means) m += rng_gaussian(*rng, 0.0, cfg_.action_sigma);
            return ActionValue::make_continuous(std::move(means));
        }
        std::vector<double> pi = policy(state);
        if (rng == nullptr) return ActionValue::make_discrete(argmax_lowest(pi));
        double u = rng_uniform(*rng);
        double cum = 0.0;
        for (std::size_t i = 0; i < pi.size(); ++i) {
            cum += pi[i];
            if (u < cum) return ActionValue::make_discrete(static_cast<int>(i));
        }
        return ActionValue::make_discrete(static_cast<int>(pi.size()) - 1);
    }

    /// Policy logits (discrete) or log-density of each grid action under the
    /// current Gaussian policy (continuous): the experts the timers compare.
    std::vector<double> preferences(const StateVec& state) const override {
        std::vector<double> out = net_forward(state);
        out.pop_back();
        if (!continuous()) return out;
        std::vector<double> means = out;
        for (double& m : means) m = std::tanh(m);
        std::vector<double> prefs(static_cast<std::size_t>(grid_.size()));
        const double var = cfg_.action_sigma * cfg_.action_sigma;
        const double log_norm = std::log(cfg_.action_sigma * std::sqrt(2.0 * M_PI));
        for (int i = 0; i < grid_.size(); ++i) {
            const std::vector<double>& a = grid_.points[static_cast<std::size_t>(i)];
            double lp = 0.0;
            for (std::size_t d = 0; d < means.size(); ++d) {
                double diff = a[d] - means[d];
                lp += -diff * diff / (2.0 * var) - log_norm;
            }
            prefs[static_cast<std::size_t>(i)] = lp;
        }
        return prefs;
    }

    std::vector<double> adversarial_input_gradient(const StateVec& state) const override {
        std::vector<double> out = net_forward(state);
        std::vector<double> logits(out.begin(), out.end() - 1);  // pre-squash for continuous
        CeResult ce = cross_entropy_grad(softmax(logits), argmax_lowest(logits));
        std::vector<double> out_grad = ce.grad_at_logits;
        out_grad.push_back(0.0);  // nothing flows through the value head
        std::lock_guard<std::mutex> lock(mu_);
        return mlp_backward(params_, state, out_grad).input_grad;
    }

    /// Snapshot of the shared parameters plus their version.
    std::pair<MlpParams, long> snapshot() const {
        std::lock_guard<std::mutex> lock(mu_);
        return {params_, version_};
    }

    long version() const {
        std::lock_guard<std::mutex> lock(mu_);
        return version_;
    }

    /// n-step advantage update. Gradients are computed against `view` (a
    /// worker snapshot; pass the live params for synchronous use) and applied
    /// atomically to the shared parameters. Returns the scalar loss under the
    /// view. `bootstrap` is ignored for terminal fragments.
    double apply_fragment(const std::vector<A3cStep>& frag, const StateVec& bootstrap,
                          bool terminal, const MlpParams& view) {
        if (frag.empty()) throw std::invalid_argument("A3cAgent: empty fragment");
        if (static_cast<int>(frag.size()) > cfg_.n_step)
            throw std::invalid_argument("A3cAgent: fragment longer than n_step");
        MlpGrads grads = zero_grads_like(view);
        double ret = terminal ? 0.0 : mlp_forward(view, bootstrap).back();
        double loss = 0.0;
        for (int i = static_cast<int>(frag.size()) - 1; i >= 0; --i) {
            const A3cStep& st = frag[static_cast<std::size_t>(i)];
            ret = st.reward + cfg_.gamma * ret;
            std::vector<double> out = mlp_forward(view, st.state);
            double v = out.back();
            double adv = ret - v;
            std::vector<double> out_grad(out.size(), 0.0);
            if (continuous()) {
                // -log N(a | tanh(z), sigma) * adv, gradient through the squash
                const double var = cfg_.action_sigma * cfg_.action_sigma;
                for (int d = 0; d < policy_dim(); ++d) {
                    double m = std::tanh(out[static_cast<std::size_t>(d)]);
                    double a = st.action.continuous[static_cast<std::size_t>(d)];
                    double diff = m - a;
                    loss += adv * diff * diff / (2.0 * var);
                    out_grad[static_cast<std::size_t>(d)] =
                        adv * (diff / var) * (1.0 - m * m);
                }
            } else {
                std::vector<double> logits(out.begin(), out.end() - 1);
                std::vector<double> pi = softmax(logits);
                int a = st.action.discrete_id;
                double ent = 0.0;
                for (double p : pi) ent -= p * std::log(std::max(p, 1e-300));
                loss += -std::log(std::max(pi[static_cast<std::size_t>(a)], 1e-300)) * adv -
                        cfg_.entropy_coef * ent;
                for (int j = 0; j < policy_dim(); ++j) {
                    double pj = pi[static_cast<std::size_t>(j)];
                    double g = adv * (pj - (j == a ? 1.0 : 0.0));
                    g += cfg_.entropy_coef * pj * (std::log(std::max(pj, 1e-300)) + ent);
                    out_grad[static_cast<std::size_t>(j)] = g;
                }
            }
            loss += 0.5 * adv * adv;
            out_grad.back() = v - ret;  // d(0.5 (ret - v)^2)/dv
            mlp_backward_acc(view, st.state, out_grad, grads);
        }
        std::lock_guard<std::mutex> lock(mu_);
        adam_step(opt_, params_, grads);
        version_ += 1;
        return loss;
    }

    double apply_fragment(const std::vector<A3cStep>& frag, const StateVec& bootstrap,
                          bool terminal) {
        return apply_fragment(frag, bootstrap, terminal, snapshot().first);
    }

    const ActionGrid& grid() const { return grid_; }
    const A3cConfig& config() const { return cfg_; }
    const ActionSpace& action_space() const { return space_; }
    MlpParams params_copy() const { return snapshot().first; }

    void save(std::ostream& os) const override;

  private:
    friend std::unique_ptr<Victim> load_victim(std::istream& is);

    std::vector<double> net_forward(const StateVec& state) const {
        std::lock_guard<std::mutex> lock(mu_);
        return mlp_forward(params_, state);
    }

    ActionSpace space_;
    ActionGrid grid_;
    A3cConfig cfg_;
    MlpParams params_;
    AdamState opt_;
    long version_ = 0;
    mutable std::mutex mu_;
};

// ---------------------------------------------------------------------------
// Checkpoints: numerics net format plus an agent header and the action table.
// ---------------------------------------------------------------------------

namespace detail {

inline void save_grid(std::ostream& os, const ActionGrid& g) {
    if (g.kind == ActionSpace::Kind::discrete) {
        os << "grid discrete " << g.discrete_count << "\n";
        return;
    }
    os << "grid continuous " << g.points.size() << " "
       << (g.points.empty() ? 0 : g.points.front().size()) << "\n";
    for (const auto& p : g.points) {
        for (std::size_t i = 0; i < p.size(); ++i) os << (i ? " " : "") << fmt_double(p[i]);
        os << "\n";
    }
}

inline ActionGrid load_grid(std::istream& is) {
    std::string tag, kind;
    is >> tag >> kind;
    if (tag != "grid") throw std::runtime_error("checkpoint: expected grid section");
    if (kind == "discrete") {
        int d = 0;
        is >> d;
        return ActionGrid::discrete(d);
    }
    if (kind != "continuous") throw std::runtime_error("checkpoint: bad grid kind");
    std::size_t n = 0, dim = 0;
    is >> n >> dim;
    std::vector<std::vector<double>> pts(n, std::vector<double>(dim));
    for (auto& p : pts)
        for (double& v : p) is >> v;
    return ActionGrid::continuous(std::move(pts));
}

}  // namespace detail

inline constexpr const char* kCheckpointMagic = "RLTA-CKPT";

inline void DqnAgent::save(std::ostream& os) const {
    os << kCheckpointMagic << " 1\n";
    os << "agent dqn\n";
    detail::save_grid(os, grid_);
    os << "gamma " << fmt_double(cfg_.gamma) << "\n";
    save_mlp(os, online_);
}

inline void A3cAgent::save(std::ostream& os) const {
    os << kCheckpointMagic << " 1\n";
    os << "agent a3c\n";
    os << "action " << (continuous() ? "continuous" : "discrete") << " " << space_.size << " "
       << fmt_double(cfg_.action_sigma) << "\n";
    detail::save_grid(os, grid_);
    std::lock_guard<std::mutex> lock(mu_);
    save_mlp(os, params_);
}

/// Rebuilds a victim from a checkpoint stream. The loaded agent plays and
/// exposes attack introspection; optimizer state starts fresh.
inline std::unique_ptr<Victim> load_victim(std::istream& is) {
    std::string magic;
    int version = 0;
    is >> magic >> version;
    if (magic != kCheckpointMagic || version != 1)
        throw std::runtime_error("checkpoint: bad magic/version");
    std::string tag, agent;
    is >> tag >> agent;
    if (tag != "agent") throw std::runtime_error("checkpoint: expected agent line");
    if (agent == "dqn") {
        ActionGrid grid = detail::load_grid(is);
        std::string gtag;
        double gamma = 0.0;
        is >> gtag >> gamma;
        if (gtag != "gamma") throw std::runtime_error("checkpoint: expected gamma line");
        MlpParams net = load_mlp(is);
        DqnConfig cfg;
        cfg.gamma = gamma;
        cfg.activation = net.spec.hidden;
        cfg.hidden.assign(net.spec.layer_sizes.begin() + 1, net.spec.layer_sizes.end() - 1);
        auto out = std::make_unique<DqnAgent>(net.spec.input_dim(), std::move(grid), cfg, 0);
        out->online_ = net;
        out->target_ = std::move(net);
        out->opt_ = make_adam(out->online_, cfg.lr);
        return out;
    }
    if (agent == "a3c") {
        std::string atag, akind;
        int asize = 0;
        double sigma = 0.0;
        is >> atag >> akind >> asize >> sigma;
        if (atag != "action") throw std::runtime_error("checkpoint: expected action line");
        ActionSpace space;
        space.kind = akind == "continuous" ? ActionSpace::Kind::continuous
                                           : ActionSpace::Kind::discrete;
        space.size = asize;
        ActionGrid grid = detail::load_grid(is);
        MlpParams net = load_mlp(is);
        A3cConfig cfg;
        cfg.action_sigma = sigma;
        cfg.activation = net.spec.hidden;
        cfg.hidden.assign(net.spec.layer_sizes.begin() + 1, net.spec.layer_sizes.end() - 1);
        auto out = std::make_unique<A3cAgent>(net.spec.input_dim(), space, std::move(grid), cfg, 0);
        {
            std::lock_guard<std::mutex> lock(out->mu_);
            out->params_ = std::move(net);
            out->opt_ = make_adam(out->params_, cfg.lr);
        }
        return out;
    }
    throw std::runtime_error("checkpoint: unknown agent kind: " + agent);
}

// ---------------------------------------------------------------------------
// Training loops.
// ---------------------------------------------------------------------------

enum class AlgoKind { dqn, a3c };

inline const char* algo_kind_name(AlgoKind k) { return k == AlgoKind::dqn ? "dqn" : "a3c"; }

inline AlgoKind parse_algo_kind(const std::string& name) {
    if (name == "dqn") return AlgoKind::dqn;
    if (name == "a3c") return AlgoKind::a3c;
    throw std::invalid_argument("unknown algo: " + name);
}

struct TrainResult {
    std::unique_ptr<Victim> agent;
    std::vector<double> episode_returns;  // one entry per completed episode
};

inline void check_return_finite(double ret, long episode) {
    if (!std::isfinite(ret)) {
        std::ostringstream msg;
        msg << "training diverged: non-finite return " << ret << " at episode " << episode;
        throw std::runtime_error(msg.str());
    }
}

/// Environment-stepping DQN training for a fixed env-step budget.
inline TrainResult train_dqn(const EnvFactory& make, EnvKind env_kind, DqnConfig cfg,
                             long total_steps, std::uint64_t seed) {
    auto env = make();
    ActionGrid grid = ActionGrid::for_env(env_kind);
    auto agent = std::make_unique<DqnAgent>(env->contract().observation_dim, grid, cfg, seed);
    RngStream explore(derive_seed(seed, 0xe));
    std::vector<double> curve;
    long steps = 0;
    long episode = 0;
    while (steps < total_steps) {
        StateVec s = env->reset(derive_seed(seed, 0x100 + static_cast<std::uint64_t>(episode)));
        double ep_return = 0.0;
        bool done = false;
        while (!done && steps < total_steps) {
            int id = rng_uniform(explore) < agent->epsilon()
                         ? rng_below(explore, agent->grid().size())
                         : agent->greedy_id(s);
            ActionValue a = agent->grid().to_action(id);
            StepResult r = env->step(a);
            agent->observe(s, id, r.reward, r.observation, r.done);
            if (agent->env_steps() % cfg.train_every == 0) agent->train_step();
            ep_return += r.reward;
            s = std::move(r.observation);
            done = r.done;
            steps += 1;
        }
        if (done) {
            check_return_finite(ep_return, episode);
            curve.push_back(ep_return);
            episode += 1;
        }
    }
    return {std::move(agent), std::move(curve)};
}

/// Multi-worker actor-critic training. Workers roll fragments on snapshots
/// and apply their gradients atomically; with one worker the schedule is
/// fully deterministic.
inline TrainResult train_a3c(const EnvFactory& make, EnvKind env_kind, A3cConfig cfg,
                             long total_steps, std::uint64_t seed) {
    auto probe = make();
    ActionGrid grid = ActionGrid::for_env(env_kind);
    auto agent = std::make_unique<A3cAgent>(probe->contract().observation_dim,
                                            probe->contract().action_space, grid, cfg, seed);
    std::vector<double> curve;
    std::mutex curve_mu;
    std::atomic<long> steps{0};
    std::atomic<bool> failed{false};
    std::string fail_msg;

    auto worker = [&](int wid) {
        try {
            auto env = make();
            RngStream explore(derive_seed(seed, 0x1000 + static_cast<std::uint64_t>(wid)));
            long episode = 0;
            while (steps.load() < total_steps && !failed.load()) {
                StateVec s = env->reset(derive_seed(
                    seed, 0x2000 + static_cast<std::uint64_t>(wid) * 1000003 +
                              static_cast<std::uint64_t>(episode)));
                double ep_return = 0.0;
                bool done = false;
                while (!done && steps.load() < total_steps && !failed.load()) {
                    auto [view, version] = agent->snapshot();
                    (void)version;
                    std::vector<A3cStep> frag;
                    StateVec cursor = s;
                    for (int i = 0; i < cfg.n_step && !done; ++i) {
                        std::vector<double> out = mlp_forward(view, cursor);
                        ActionValue a;
                        if (agent->continuous()) {
                            std::vector<double> means(out.begin(), out.end() - 1);
                            for (double& m : means)
                                m = std::tanh(m) + rng_gaussian(explore, 0.0, cfg.action_sigma);
                            a = ActionValue::make_continuous(std::move(means));
                        } else {
                            std::vector<double> logits(out.begin(), out.end() - 1);
                            std::vector<double> pi = softmax(logits);
                            double u = rng_uniform(explore);
                            double cum = 0.0;
                            int pick = static_cast<int>(pi.size()) - 1;
                            for (std::size_t j = 0; j < pi.size(); ++j) {
                                cum += pi[j];
                                if (u < cum) {
                                    pick = static_cast<int>(j);
                                    break;
                                }
                            }
                            a = ActionValue::make_discrete(pick);
                        }
                        StepResult r = env->step(a);
                        frag.push_back({cursor, a, r.reward});
                        ep_return += r.reward;
                        cursor = std::move(r.observation);
                        done = r.done;
                        steps.fetch_add(1);
                    }
                    agent->apply_fragment(frag, cursor, done, view);
                    s = std::move(cursor);
                }
                if (done) {
                    check_return_finite(ep_return, episode);
                    std::lock_guard<std::mutex> lock(curve_mu);
                    curve.push_back(ep_return);
                    episode += 1;
                }
            }
        } catch (const std::exception& e) {
            failed.store(true);
            std::lock_guard<std::mutex> lock(curve_mu);
            fail_msg = e.what();
        }
    };

    if (cfg.n_workers == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < cfg.n_workers; ++w) pool.emplace_back(worker, w);
        for (std::thread& t : pool) t.join();
    }
    if (failed.load()) throw std::runtime_error("a3c training failed: " + fail_msg);
    return {std::move(agent), std::move(curve)};
}

struct VictimTrainConfig {
    DqnConfig dqn;
    A3cConfig a3c;
    long total_steps = 200000;
};

inline TrainResult train_victim(const EnvFactory& make, EnvKind env_kind, AlgoKind algo,
                                const VictimTrainConfig& cfg, std::uint64_t seed) {
    if (algo == AlgoKind::dqn) return train_dqn(make, env_kind, cfg.dqn, cfg.total_steps, seed);
    return train_a3c(make, env_kind, cfg.a3c, cfg.total_steps, seed);
}

/// Greedy evaluation returns on `episodes` seeded episodes.
inline std::vector<double> greedy_returns(const Victim& victim, const EnvFactory& make,
                                          int episodes, std::uint64_t seed) {
    std::vector<double> out;
    auto env = make();
    for (int e = 0; e < episodes; ++e) {
        StateVec s = env->reset(derive_seed(seed, static_cast<std::uint64_t>(e)));
        double total = 0.0;
        bool done = false;
        while (!done) {
            StepResult r = env->step(victim.act(s, nullptr));
            total += r.reward;
            s = std::move(r.observation);
            done = r.done;
        }
        out.push_back(total);
    }
    return out;
}

/// Uniform-random play on the same seeded episodes (the sanity floor).
inline std::vector<double> random_policy_returns(const EnvFactory& make, int episodes,
                                                 std::uint64_t seed) {
    std::vector<double> out;
    auto env = make();
    RngStream rng(derive_seed(seed, 0xbad));
    for (int e = 0; e < episodes; ++e) {
        StateVec s = env->reset(derive_seed(seed, static_cast<std::uint64_t>(e)));
        double total = 0.0;
        bool done = false;
        while (!done) {
            const ActionSpace& sp = env->contract().action_space;
            ActionValue a;
            if (sp.kind == ActionSpace::Kind::discrete) {
                a = ActionValue::make_discrete(rng_below(rng, sp.size));
            } else {
                std::vector<double> v(static_cast<std::size_t>(sp.size));
                for (double& x : v) x = 2.0 * rng_uniform(rng) - 1.0;
                a = ActionValue::make_continuous(std::move(v));
            }
            StepResult r = env->step(a);
            total += r.reward;
            s = std::move(r.observation);
            done = r.done;
        }
        out.push_back(total);
    }
    return out;
}

}  // namespace rlta
