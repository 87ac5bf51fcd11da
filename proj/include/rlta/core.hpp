// Shared value types, the seeded randomness contract, and episode trace
// recording used by every other part of the library.
//
// Randomness: a single fixed generator (splitmix64) is used everywhere so
// that equal seeds give bit-identical traces across runs and platforms.
#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace rlta {

/// Fixed-length vector of real sensor readings; the per-frame observation.
using StateVec = std::vector<double>;

/// Discrete action id or a continuous action vector with entries in [-1, 1].
struct ActionValue {
    enum class Kind { discrete, continuous };
    Kind kind = Kind::discrete;
    int discrete_id = 0;
    std::vector<double> continuous;

    static ActionValue make_discrete(int id) {
        if (id < 0) throw std::invalid_argument("ActionValue: negative discrete id");
        ActionValue a;
        a.kind = Kind::discrete;
        a.discrete_id = id;
        return a;
    }
    static ActionValue make_continuous(std::vector<double> v) {
        ActionValue a;
        a.kind = Kind::continuous;
        for (double& x : v) x = x < -1.0 ? -1.0 : (x > 1.0 ? 1.0 : x);
        a.continuous = std::move(v);
        return a;
    }
};

struct Transition {
    StateVec state;
    ActionValue action;
    double reward = 0.0;
    StateVec next_state;
    bool done = false;
};

/// One rollout: ordered transitions plus the set of attacked frame indices.
struct EpisodeTrace {
    std::vector<Transition> transitions;
    std::vector<int> attacked_frames;  // sorted, unique, within [0, size())
    std::uint64_t seed = 0;
};

/// Deterministic 64-bit counter-based generator (splitmix64).
///
/// Chosen over the platform default so traces reproduce bit-for-bit
/// independent of the standard library implementation.
class RngStream {
  public:
    explicit RngStream(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state() const { return state_; }

  private:
    std::uint64_t state_;
};

/// Derives an independent child seed from a master seed and an index.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (index + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// One draw in [0, 1); advances the stream exactly one step.
inline double rng_uniform(RngStream& stream) {
    return static_cast<double>(stream.next_u64() >> 11) * 0x1.0p-53;
}

/// One Gaussian draw via Box-Muller; advances the stream exactly two steps.
inline double rng_gaussian(RngStream& stream, double mean, double stddev) {
    if (!(stddev > 0.0)) throw std::invalid_argument("rng_gaussian: stddev must be > 0");
    const double u1 = rng_uniform(stream);
    const double u2 = rng_uniform(stream);
    const double r = std::sqrt(-2.0 * std::log1p(-u1));
    return mean + stddev * r * std::cos(2.0 * M_PI * u2);
}

/// Uniform integer in [0, n).
inline int rng_below(RngStream& stream, int n) {
    if (n <= 0) throw std::invalid_argument("rng_below: n must be positive");
    return static_cast<int>(rng_uniform(stream) * n);
}

/// Sum of rewards over the whole trace.
inline double episode_return(const EpisodeTrace& trace) {
    if (trace.transitions.empty()) throw std::invalid_argument("episode_return: empty trace");
    double total = 0.0;
    for (const Transition& tr : trace.transitions) total += tr.reward;
    return total;
}

/// Shortest decimal form that round-trips the exact double value.
inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
}

inline std::string fmt_action(const ActionValue& a) {
    if (a.kind == ActionValue::Kind::discrete) return std::to_string(a.discrete_id);
    std::string out;
    for (std::size_t i = 0; i < a.continuous.size(); ++i) {
        if (i) out += ';';
        out += fmt_double(a.continuous[i]);
    }
    return out;
}

/// Line-oriented CSV: columns t, action, reward, done, attacked (0/1).
inline void write_trace_csv(const EpisodeTrace& trace, std::ostream& os) {
    os << "t,action,reward,done,attacked\n";
    std::size_t ai = 0;
    for (std::size_t t = 0; t < trace.transitions.size(); ++t) {
        const Transition& tr = trace.transitions[t];
        bool attacked = ai < trace.attacked_frames.size() &&
                        trace.attacked_frames[ai] == static_cast<int>(t);
        if (attacked) ++ai;
        os << t << ',' << fmt_action(tr.action) << ',' << fmt_double(tr.reward) << ','
           << (tr.done ? 1 : 0) << ',' << (attacked ? 1 : 0) << '\n';
    }
}

inline double clamp(double x, double lo, double hi) {
    return x < lo ? lo : (x > hi ? hi : x);
}

}  // namespace rlta
