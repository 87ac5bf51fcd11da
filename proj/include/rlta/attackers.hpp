// Attack timing policies: the "when" of an attack.
//
//   RandomTimer   fixed count of uniformly drawn frames
//   lin_decide    softmax-gap threshold on the victim's preferences
//   WmaTimer      multiplicative-weights experts over actions; attacks when
//                 the weighted potential gap clears a threshold, and verifies
//                 the external-regret bound of the update it runs
//   PepgPolicy    black-box attacker trained by parameter-exploring policy
//                 gradients against the environmental reward
//
// Every timer runs under the same per-episode attack budget.
#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "rlta/core.hpp"
#include "rlta/envs.hpp"
#include "rlta/numerics.hpp"

namespace rlta {

// ---------------------------------------------------------------------------
// Budget and decisions
// ---------------------------------------------------------------------------

struct AttackBudget {
    int cap = 40;
    int used = 0;

    bool available() const { return used < cap; }
    /// Consumes one attack slot; false (and no change) when exhausted.
    bool try_consume() {
        if (!available()) return false;
        used += 1;
        return true;
    }
    void reset() { used = 0; }
};

struct AttackDecision {
    bool attack = false;
    double potential = 0.0;  // the c value behind the decision, when one exists
};

// ---------------------------------------------------------------------------
// Expert weights (multiplicative-weights state)
// ---------------------------------------------------------------------------

/// Positive unnormalized weights; decisions always use the normalized view,
/// so any positive rescaling of the internal state is behavior-preserving.
struct ExpertWeights {
    std::vector<double> raw;

    explicit ExpertWeights(int d) : raw(static_cast<std::size_t>(d), 1.0) {
        if (d < 2) throw std::invalid_argument("ExpertWeights: need d >= 2 experts");
    }

    int size() const { return static_cast<int>(raw.size()); }

    double total() const {
        double z = 0.0;
        for (double w : raw) z += w;
        return z;
    }

    std::vector<double> normalized() const {
        double z = total();
        std::vector<double> out(raw.size());
        for (std::size_t i = 0; i < raw.size(); ++i) out[i] = raw[i] / z;
        return out;
    }
};

/// Per-round min-max rescaling of preference values into [0,1] losses;
/// a constant vector maps to all-zero losses.
inline std::vector<double> minmax_normalize(const std::vector<double>& v) {
    if (v.empty()) return {};
    double lo = v[0], hi = v[0];
    for (double x : v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    std::vector<double> out(v.size(), 0.0);
    if (hi - lo <= 0.0) return out;
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - lo) / (hi - lo);
    return out;
}

/// Multiplicative-weights step: raw_i *= exp(-eta * loss_i). Losses must
/// already be in [0,1] (rescale preferences first). Rescales the internal
/// state when it drifts toward the underflow range.
inline void hedge_update(ExpertWeights& w, const std::vector<double>& losses, double eta) {
    if (static_cast<int>(losses.size()) != w.size())
        throw std::invalid_argument("hedge_update: loss/weight dimension mismatch");
    if (!(eta > 0.0)) throw std::invalid_argument("hedge_update: eta must be > 0");
    for (double l : losses)
        if (!(l >= 0.0 && l <= 1.0))
            throw std::logic_error("hedge_update: loss outside [0,1] after normalization");
    double peak = 0.0;
    for (std::size_t i = 0; i < w.raw.size(); ++i) {
        w.raw[i] *= std::exp(-eta * losses[i]);
        peak = std::max(peak, w.raw[i]);
    }
    if (peak < 1e-150)
        for (double& x : w.raw) x /= peak;
}

inline double hedge_eta(int d, int horizon) {
    if (d < 2 || horizon < 1) throw std::invalid_argument("hedge_eta: need d >= 2, horizon >= 1");
    return std::sqrt(2.0 * std::log(static_cast<double>(d)) / horizon);
}

/// Upper bound sqrt(2 ln(d) T) on the external regret of the update above.
inline double hedge_bound(int d, int horizon) {
    if (d < 2 || horizon < 1)
        throw std::invalid_argument("hedge_bound: need d >= 2, horizon >= 1");
    return std::sqrt(2.0 * std::log(static_cast<double>(d)) * horizon);
}

// ---------------------------------------------------------------------------
// Attack potentials
// ---------------------------------------------------------------------------

struct PotentialResult {
    double c = 0.0;
    int a_max = 0;
    int a_min = 0;
};

/// Value-learner potential: u_i = w_i exp(-q_i) (computed shift-stabilized),
/// p = u / sum(u), c = p[a_max] - p[a_min] with ties to the lowest index.
inline PotentialResult potential_energy_c(const ExpertWeights& w, const std::vector<double>& q) {
    const int d = static_cast<int>(q.size());
    if (d < 2) throw std::invalid_argument("potential_energy_c: need d >= 2");
    if (w.size() != d) throw std::invalid_argument("potential_energy_c: weight/q size mismatch");
    double qmin = q[0];
    for (double x : q) {
        if (!std::isfinite(x)) throw std::invalid_argument("potential_energy_c: non-finite q");
        qmin = std::min(qmin, x);
    }
    std::vector<double> u(q.size());
    double z = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) {
        u[i] = w.raw[i] * std::exp(-(q[i] - qmin));  // shift cancels after normalization
        z += u[i];
    }
    PotentialResult r;
    for (int i = 1; i < d; ++i) {
        if (u[static_cast<std::size_t>(i)] > u[static_cast<std::size_t>(r.a_max)]) r.a_max = i;
        if (u[static_cast<std::size_t>(i)] < u[static_cast<std::size_t>(r.a_min)]) r.a_min = i;
    }
    r.c = (u[static_cast<std::size_t>(r.a_max)] - u[static_cast<std::size_t>(r.a_min)]) / z;
    return r;
}

/// Policy-learner potential: v_i = w_norm_i * pi_i, c = max v - min v.
inline PotentialResult policy_potential_c(const ExpertWeights& w, const std::vector<double>& pi) {
    const int d = static_cast<int>(pi.size());
    if (d < 2) throw std::invalid_argument("policy_potential_c: need d >= 2");
    if (w.size() != d) throw std::invalid_argument("policy_potential_c: weight/pi size mismatch");
    double sum = 0.0;
    for (double p : pi) {
        if (!(p >= 0.0) || !std::isfinite(p))
            throw std::invalid_argument("policy_potential_c: pi entries must be >= 0");
        sum += p;
    }
    if (std::fabs(sum - 1.0) > 1e-6)
        throw std::invalid_argument("policy_potential_c: pi must sum to 1");
    std::vector<double> wn = w.normalized();
    PotentialResult r;
    std::vector<double> v(pi.size());
    for (std::size_t i = 0; i < pi.size(); ++i) v[i] = wn[i] * pi[i];
    for (int i = 1; i < d; ++i) {
        if (v[static_cast<std::size_t>(i)] > v[static_cast<std::size_t>(r.a_max)]) r.a_max = i;
        if (v[static_cast<std::size_t>(i)] < v[static_cast<std::size_t>(r.a_min)]) r.a_min = i;
    }
    r.c = v[static_cast<std::size_t>(r.a_max)] - v[static_cast<std::size_t>(r.a_min)];
    return r;
}

// ---------------------------------------------------------------------------
// Regret accounting
// ---------------------------------------------------------------------------

struct RegretRound {
    std::vector<double> weights;  // normalized weights used this round
    std::vector<double> losses;   // [0,1] losses fed to the update
    std::vector<double> raw_prefs;
    double z = 0.0;  // sum of unnormalized weights before the update
};

struct RegretLedger {
    int d = 0;
    double eta = 0.0;
    std::vector<RegretRound> rounds;

    void record(const ExpertWeights& w, const std::vector<double>& losses,
                const std::vector<double>& raw_prefs) {
        RegretRound r;
        r.weights = w.normalized();
        r.losses = losses;
        r.raw_prefs = raw_prefs;
        r.z = w.total();
        rounds.push_back(std::move(r));
    }
};

/// External regret sum_t <w_t, l_t> - min_i sum_t l_t^i over the recorded
/// rounds. Requires T > 2 ln d (the regime where the bound statement holds).
inline double empirical_regret(const RegretLedger& ledger) {
    const int T = static_cast<int>(ledger.rounds.size());
    if (ledger.d < 2) throw std::invalid_argument("empirical_regret: need d >= 2");
    if (!(static_cast<double>(T) > 2.0 * std::log(static_cast<double>(ledger.d))))
        throw std::invalid_argument("empirical_regret: too few rounds (need T > 2 ln d)");
    double algo = 0.0;
    std::vector<double> per_expert(static_cast<std::size_t>(ledger.d), 0.0);
    for (const RegretRound& r : ledger.rounds) {
        for (int i = 0; i < ledger.d; ++i) {
            algo += r.weights[static_cast<std::size_t>(i)] * r.losses[static_cast<std::size_t>(i)];
            per_expert[static_cast<std::size_t>(i)] += r.losses[static_cast<std::size_t>(i)];
        }
    }
    double best = per_expert[0];
    for (double x : per_expert) best = std::min(best, x);
    return algo - best;
}

/// The raw exponential form of the regret expression (weights paired with
/// exp(-pref)/Z terms). Logged for diagnostics only; the bound is asserted on
/// empirical_regret, never on this quantity.
inline double raw_exponential_regret(const RegretLedger& ledger) {
    if (ledger.rounds.empty()) return 0.0;
    double algo = 0.0;
    std::vector<double> per_expert(static_cast<std::size_t>(ledger.d), 0.0);
    for (const RegretRound& r : ledger.rounds) {
        for (int i = 0; i < ledger.d; ++i) {
            double e = std::exp(-r.raw_prefs[static_cast<std::size_t>(i)]);
            algo += r.weights[static_cast<std::size_t>(i)] * e;
            per_expert[static_cast<std::size_t>(i)] += e / r.z;
        }
    }
    double best = per_expert[0];
    for (double x : per_expert) best = std::min(best, x);
    return algo - best;
}

// ---------------------------------------------------------------------------
// Timers
// ---------------------------------------------------------------------------

/// Attacks on a fixed number of frames drawn uniformly without replacement
/// from the episode horizon.
class RandomTimer {
  public:
    RandomTimer(int budget, int horizon, std::uint64_t seed) {
        if (budget < 0 || horizon < 0) throw std::invalid_argument("RandomTimer: negative sizes");
        int take = std::min(budget, horizon);
        std::vector<int> frames(static_cast<std::size_t>(horizon));
        for (int i = 0; i < horizon; ++i) frames[static_cast<std::size_t>(i)] = i;
        RngStream rng(derive_seed(seed, 0x7a7));
        selected_.assign(static_cast<std::size_t>(horizon), false);
        for (int i = 0; i < take; ++i) {  // partial Fisher-Yates: first `take` entries
            int j = i + rng_below(rng, horizon - i);
            std::swap(frames[static_cast<std::size_t>(i)], frames[static_cast<std::size_t>(j)]);
            selected_[static_cast<std::size_t>(frames[static_cast<std::size_t>(i)])] = true;
        }
    }

    AttackDecision decide(int frame, AttackBudget& budget) {
        AttackDecision d;
        if (frame < 0 || frame >= static_cast<int>(selected_.size())) return d;
        if (selected_[static_cast<std::size_t>(frame)] && budget.try_consume()) d.attack = true;
        return d;
    }

    int planned_attacks() const {
        int n = 0;
        for (bool b : selected_) n += b ? 1 : 0;
        return n;
    }

  private:
    std::vector<bool> selected_;
};

/// Softmax-gap baseline: attack when the spread of softmax(preferences)
/// clears beta.
inline AttackDecision lin_decide(const std::vector<double>& prefs, double beta,
                                 AttackBudget& budget) {
    std::vector<double> p = softmax(prefs);
    double lo = p[0], hi = p[0];
    for (double x : p) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    AttackDecision d;
    d.potential = hi - lo;
    if (d.potential > beta && budget.try_consume()) d.attack = true;
    return d;
}

struct WmaConfig {
    double beta = 0.3;
    int budget = 40;
};

/// Multiplicative-weights timer (experts are the victim's actions).
///
/// Per frame: compute the potential gap c from the current weights and the
/// victim's preferences on the true state, attack when c > beta under the
/// budget, then always apply the multiplicative update with the min-max
/// rescaled preferences as losses. Weights, eta and the budget are
/// per-episode state; the ledger records every round for regret checks.
class WmaTimer {
  public:
    WmaTimer(int d, int horizon, WmaConfig cfg = {})
        : cfg_(cfg), weights_(d), eta_(hedge_eta(d, horizon)) {
        budget_.cap = cfg.budget;
        ledger_.d = d;
        ledger_.eta = eta_;
    }

    /// `prefs` are the victim's raw per-expert scores on the current frame;
    /// `policy_flavor` selects the policy-potential (softmaxed prefs) reading.
    AttackDecision decide(const std::vector<double>& prefs, bool policy_flavor) {
        PotentialResult pot = policy_flavor ? policy_potential_c(weights_, softmax(prefs))
                                            : potential_energy_c(weights_, prefs);
        AttackDecision d;
        d.potential = pot.c;
        if (pot.c > cfg_.beta && budget_.try_consume()) d.attack = true;
        std::vector<double> losses = minmax_normalize(prefs);
        ledger_.record(weights_, losses, prefs);
        hedge_update(weights_, losses, eta_);
        return d;
    }

    const ExpertWeights& weights() const { return weights_; }
    const RegretLedger& ledger() const { return ledger_; }
    const AttackBudget& budget() const { return budget_; }
    double eta() const { return eta_; }

  private:
    WmaConfig cfg_;
    ExpertWeights weights_;
    double eta_;
    AttackBudget budget_;
    RegretLedger ledger_;
};

// ---------------------------------------------------------------------------
// PEPG attacker (black box)
// ---------------------------------------------------------------------------

struct PepgLogGrad {
    std::vector<double> d_mu;
    std::vector<double> d_sigma;
};

struct PepgDistribution {
    std::vector<double> mu;
    std::vector<double> sigma;
    double sigma_min = 1e-3;

    static PepgDistribution init(int n_params, double sigma0) {
        if (n_params < 1 || !(sigma0 > 0.0))
            throw std::invalid_argument("PepgDistribution: bad init");
        PepgDistribution d;
        d.mu.assign(static_cast<std::size_t>(n_params), 0.0);
        d.sigma.assign(static_cast<std::size_t>(n_params), sigma0);
        return d;
    }

    std::vector<double> sample(RngStream& rng) const {
        std::vector<double> theta(mu.size());
        for (std::size_t i = 0; i < mu.size(); ++i)
            theta[i] = mu[i] + sigma[i] * rng_gaussian(rng, 0.0, 1.0);
        return theta;
    }
};

/// Gradient of log N(theta | mu, sigma^2) in each coordinate.
inline PepgLogGrad pepg_log_grad(const std::vector<double>& theta, const PepgDistribution& d) {
    if (theta.size() != d.mu.size())
        throw std::invalid_argument("pepg_log_grad: dimension mismatch");
    PepgLogGrad g;
    g.d_mu.resize(theta.size());
    g.d_sigma.resize(theta.size());
    for (std::size_t i = 0; i < theta.size(); ++i) {
        double diff = theta[i] - d.mu[i];
        double s = d.sigma[i];
        g.d_mu[i] = diff / (s * s);
        g.d_sigma[i] = (diff * diff - s * s) / (s * s * s);
    }
    return g;
}

/// Population estimate of the fitness gradient wrt (mu, sigma): the mean of
/// log-density gradients weighted by (fitness - b). With `baseline` the
/// batch-mean fitness is subtracted (pure variance reduction); without it the
/// weighting is the raw fitness.
inline PepgLogGrad pepg_gradient_estimate(const std::vector<std::vector<double>>& thetas,
                                          const std::vector<double>& fitness,
                                          const PepgDistribution& d, bool baseline = true) {
    const std::size_t n = thetas.size();
    if (n < 2) throw std::invalid_argument("pepg_gradient_estimate: need at least 2 samples");
    if (fitness.size() != n)
        throw std::invalid_argument("pepg_gradient_estimate: fitness/theta count mismatch");
    double b = 0.0;
    if (baseline) {
        for (double f : fitness) b += f;
        b /= static_cast<double>(n);
    }
    PepgLogGrad acc;
    acc.d_mu.assign(d.mu.size(), 0.0);
    acc.d_sigma.assign(d.mu.size(), 0.0);
    for (std::size_t k = 0; k < n; ++k) {
        PepgLogGrad g = pepg_log_grad(thetas[k], d);
        double w = fitness[k] - b;
        for (std::size_t i = 0; i < d.mu.size(); ++i) {
            acc.d_mu[i] += g.d_mu[i] * w;
            acc.d_sigma[i] += g.d_sigma[i] * w;
        }
    }
    for (std::size_t i = 0; i < d.mu.size(); ++i) {
        acc.d_mu[i] /= static_cast<double>(n);
        acc.d_sigma[i] /= static_cast<double>(n);
    }
    return acc;
}

struct PepgConfig {
    int population = 32;
    int generations = 200;
    double alpha_mu = 0.1;
    double alpha_sigma = 0.05;
    double sigma0 = 1.0;
    std::vector<int> hidden = {16};
    int budget = 40;
    bool baseline = true;
    double max_update_step = 1.0;  // per-coordinate cap on alpha * gradient

    void validate() const {
        if (population < 2) throw std::invalid_argument("PepgConfig: population >= 2");
        if (generations < 1) throw std::invalid_argument("PepgConfig: generations >= 1");
        if (!(sigma0 > 0.0)) throw std::invalid_argument("PepgConfig: sigma0 > 0");
        if (budget < 0) throw std::invalid_argument("PepgConfig: budget >= 0");
    }
};

/// The trained attacker: a network from observation to one attack logit.
struct PepgPolicy {
    MlpParams net;

    AttackDecision decide(const StateVec& state, AttackBudget& budget) const {
        double logit = mlp_forward(net, state)[0];
        double p = 1.0 / (1.0 + std::exp(-logit));
        AttackDecision d;
        d.potential = p;
        if (p > 0.5 && budget.try_consume()) d.attack = true;  // strict: 0.5 passes
        return d;
    }
};

/// Environmental reward seen by the attacker: always the negative magnitude.
inline double adversarial_reward(double env_reward) { return -std::fabs(env_reward); }

/// The victim as the black-box attacker sees it: a state-to-action map.
using BlackBoxVictim = std::function<ActionValue(const StateVec&)>;
/// Applied to the observation on attacked frames.
using NoiseApplier = std::function<StateVec(const StateVec&)>;

struct PepgTrainResult {
    PepgPolicy policy;
    std::vector<double> mean_fitness;  // one entry per generation
    PepgDistribution distribution;
};

/// Population training of the attack timer. Each generation draws
/// `population` parameter vectors, rolls one episode per member (all members
/// share the generation's env seed), scores them by accumulated adversarial
/// reward, and ascends the estimated fitness gradient. The victim is only
/// ever queried through its action map.
inline PepgTrainResult pepg_asa_train(const EnvFactory& make, const BlackBoxVictim& victim,
                                      const NoiseApplier& noise, PepgConfig cfg,
                                      std::uint64_t seed) {
    cfg.validate();
    auto probe = make();
    const int obs_dim = probe->contract().observation_dim;
    MlpSpec spec;
    spec.layer_sizes.push_back(obs_dim);
    for (int h : cfg.hidden) spec.layer_sizes.push_back(h);
    spec.layer_sizes.push_back(1);
    spec.hidden = HiddenActivation::tanh_fn;
    spec.output = OutputActivation::identity;
    spec.validate();

    MlpParams shape;
    {
        RngStream tmp(1);
        shape = init_mlp(spec, tmp);
    }
    const int n_params = mlp_param_count(spec);
    PepgDistribution dist = PepgDistribution::init(n_params, cfg.sigma0);
    RngStream rng(derive_seed(seed, 0x9e9));

    auto rollout_fitness = [&](const std::vector<double>& theta, std::uint64_t env_seed,
                               std::vector<int>* attacked) {
        MlpParams net = shape;
        mlp_from_vector(net, theta);
        PepgPolicy pol{std::move(net)};
        AttackBudget budget;
        budget.cap = cfg.budget;
        auto env = make();
        StateVec s = env->reset(env_seed);
        double fitness = 0.0;
        bool done = false;
        int frame = 0;
        while (!done) {
            AttackDecision d = pol.decide(s, budget);
            StateVec seen = d.attack ? noise(s) : s;
            if (d.attack && attacked != nullptr) attacked->push_back(frame);
            StepResult r = env->step(victim(seen));
            fitness += adversarial_reward(r.reward);
            s = std::move(r.observation);
            done = r.done;
            frame += 1;
        }
        return fitness;
    };

    PepgTrainResult out;
    for (int g = 0; g < cfg.generations; ++g) {
        // all members face the same episode draw: fitness differences come
        // from the attack policy, not from env luck
        std::uint64_t env_seed = derive_seed(seed, 0x500 + static_cast<std::uint64_t>(g));
        std::vector<std::vector<double>> thetas;
        std::vector<double> fitness;
        thetas.reserve(static_cast<std::size_t>(cfg.population));
        for (int n = 0; n < cfg.population; ++n) {
            thetas.push_back(dist.sample(rng));
            double f = rollout_fitness(thetas.back(), env_seed, nullptr);
            if (!std::isfinite(f)) throw std::runtime_error("pepg: non-finite fitness; diverged");
            fitness.push_back(f);
        }
        PepgLogGrad grad = pepg_gradient_estimate(thetas, fitness, dist, cfg.baseline);
        for (std::size_t i = 0; i < dist.mu.size(); ++i) {
            double step_mu = clamp(cfg.alpha_mu * grad.d_mu[i], -cfg.max_update_step,
                                   cfg.max_update_step);
            double step_sigma = clamp(cfg.alpha_sigma * grad.d_sigma[i], -cfg.max_update_step,
                                      cfg.max_update_step);
            dist.mu[i] += step_mu;
            dist.sigma[i] = std::max(dist.sigma_min, dist.sigma[i] + step_sigma);
        }
        double mean = 0.0;
        for (double f : fitness) mean += f;
        out.mean_fitness.push_back(mean / static_cast<double>(cfg.population));
    }

    MlpParams net = shape;
    mlp_from_vector(net, dist.mu);  // the distribution mean is the policy
    out.policy = PepgPolicy{std::move(net)};
    out.distribution = std::move(dist);
    return out;
}

}  // namespace rlta
