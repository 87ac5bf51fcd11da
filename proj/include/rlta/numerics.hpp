// Minimal dense neural-network kernel: forward pass, parameter and input
// gradients, softmax / cross-entropy, and an Adam optimizer. Everything is
// 64-bit and allocation-explicit; there is no autodiff graph beyond the
// fixed MLP shape.
#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "rlta/core.hpp"

namespace rlta {

enum class HiddenActivation { tanh_fn, relu };
enum class OutputActivation { identity, tanh_fn };

struct MlpSpec {
    std::vector<int> layer_sizes;  // input dim first, output dim last
    HiddenActivation hidden = HiddenActivation::tanh_fn;
    OutputActivation output = OutputActivation::identity;

    void validate() const {
        if (layer_sizes.size() < 2) throw std::invalid_argument("MlpSpec: need at least 2 layer sizes");
        for (int s : layer_sizes)
            if (s <= 0) throw std::invalid_argument("MlpSpec: layer sizes must be positive");
    }
    int input_dim() const { return layer_sizes.front(); }
    int output_dim() const { return layer_sizes.back(); }
    int layer_count() const { return static_cast<int>(layer_sizes.size()) - 1; }
};

/// Row-major weight matrix (out x in) plus bias vector (out).
struct LayerParams {
    int out = 0, in = 0;
    std::vector<double> w;  // w[r*in + c]
    std::vector<double> b;
};

struct MlpParams {
    MlpSpec spec;
    std::vector<LayerParams> layers;
};

using MlpGrads = std::vector<LayerParams>;  // same shapes as MlpParams::layers

inline MlpGrads zero_grads_like(const MlpParams& p) {
    MlpGrads g(p.layers.size());
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        g[l].out = p.layers[l].out;
        g[l].in = p.layers[l].in;
        g[l].w.assign(p.layers[l].w.size(), 0.0);
        g[l].b.assign(p.layers[l].b.size(), 0.0);
    }
    return g;
}

/// Glorot-uniform initialization, bounds sqrt(6 / (fan_in + fan_out)).
inline MlpParams init_mlp(const MlpSpec& spec, RngStream& rng) {
    spec.validate();
    MlpParams p;
    p.spec = spec;
    p.layers.resize(spec.layer_count());
    for (int l = 0; l < spec.layer_count(); ++l) {
        LayerParams& lp = p.layers[l];
        lp.in = spec.layer_sizes[l];
        lp.out = spec.layer_sizes[l + 1];
        lp.w.resize(static_cast<std::size_t>(lp.out) * lp.in);
        lp.b.assign(lp.out, 0.0);
        const double bound = std::sqrt(6.0 / (lp.in + lp.out));
        for (double& w : lp.w) w = (2.0 * rng_uniform(rng) - 1.0) * bound;
    }
    return p;
}

inline int mlp_param_count(const MlpSpec& spec) {
    int n = 0;
    for (int l = 0; l < spec.layer_count(); ++l)
        n += spec.layer_sizes[l] * spec.layer_sizes[l + 1] + spec.layer_sizes[l + 1];
    return n;
}

inline std::vector<double> mlp_to_vector(const MlpParams& p) {
    std::vector<double> v;
    for (const LayerParams& lp : p.layers) {
        v.insert(v.end(), lp.w.begin(), lp.w.end());
        v.insert(v.end(), lp.b.begin(), lp.b.end());
    }
    return v;
}

inline void mlp_from_vector(MlpParams& p, const std::vector<double>& v) {
    std::size_t k = 0;
    for (LayerParams& lp : p.layers) {
        for (double& w : lp.w) w = v.at(k++);
        for (double& b : lp.b) b = v.at(k++);
    }
    if (k != v.size()) throw std::invalid_argument("mlp_from_vector: size mismatch");
}

namespace detail {

inline double activate(double z, HiddenActivation a) {
    return a == HiddenActivation::tanh_fn ? std::tanh(z) : (z > 0.0 ? z : 0.0);
}
inline double activate_grad_from_out(double y, double z, HiddenActivation a) {
    return a == HiddenActivation::tanh_fn ? 1.0 - y * y : (z > 0.0 ? 1.0 : 0.0);
}

// Forward pass keeping pre-activations and activations per layer.
struct ForwardTape {
    std::vector<std::vector<double>> pre;   // per layer, length out
    std::vector<std::vector<double>> post;  // post[0] is the input
};

inline void forward_tape(const MlpParams& p, const StateVec& input, ForwardTape& tape) {
    if (static_cast<int>(input.size()) != p.spec.input_dim())
        throw std::invalid_argument("mlp_forward: input length does not match first layer size");
    const int L = p.spec.layer_count();
    tape.pre.resize(L);
    tape.post.resize(L + 1);
    tape.post[0] = input;
    for (int l = 0; l < L; ++l) {
        const LayerParams& lp = p.layers[l];
        const std::vector<double>& a = tape.post[l];
        std::vector<double>& z = tape.pre[l];
        z.assign(lp.out, 0.0);
        for (int r = 0; r < lp.out; ++r) {
            double s = lp.b[r];
            const double* wr = &lp.w[static_cast<std::size_t>(r) * lp.in];
            for (int c = 0; c < lp.in; ++c) s += wr[c] * a[c];
            z[r] = s;
        }
        std::vector<double>& y = tape.post[l + 1];
        y.resize(lp.out);
        if (l + 1 < L) {
            for (int r = 0; r < lp.out; ++r) y[r] = activate(z[r], p.spec.hidden);
        } else if (p.spec.output == OutputActivation::tanh_fn) {
            for (int r = 0; r < lp.out; ++r) y[r] = std::tanh(z[r]);
        } else {
            y = z;
        }
    }
}

}  // namespace detail

inline std::vector<double> mlp_forward(const MlpParams& p, const StateVec& input) {
    detail::ForwardTape tape;
    detail::forward_tape(p, input, tape);
    return tape.post.back();
}

struct BackwardResult {
    MlpGrads param_grads;
    std::vector<double> input_grad;
};

/// Backprop of a scalar loss. `loss_grad_at_output` is dL/dy at the network
/// output (after the output activation). Accumulates into `acc`.
inline std::vector<double> mlp_backward_acc(const MlpParams& p, const StateVec& input,
                                            const std::vector<double>& loss_grad_at_output,
                                            MlpGrads& acc) {
    if (static_cast<int>(loss_grad_at_output.size()) != p.spec.output_dim())
        throw std::invalid_argument("mlp_backward: output gradient length mismatch");
    detail::ForwardTape tape;
    detail::forward_tape(p, input, tape);
    const int L = p.spec.layer_count();

    // delta = dL/dz at the current layer
    std::vector<double> delta(loss_grad_at_output);
    if (p.spec.output == OutputActivation::tanh_fn) {
        const std::vector<double>& y = tape.post[L];
        for (std::size_t i = 0; i < delta.size(); ++i) delta[i] *= 1.0 - y[i] * y[i];
    }
    std::vector<double> prev;
    for (int l = L - 1; l >= 0; --l) {
        const LayerParams& lp = p.layers[l];
        const std::vector<double>& a = tape.post[l];
        LayerParams& g = acc[l];
        for (int r = 0; r < lp.out; ++r) {
            const double d = delta[r];
            g.b[r] += d;
            double* gw = &g.w[static_cast<std::size_t>(r) * lp.in];
            for (int c = 0; c < lp.in; ++c) gw[c] += d * a[c];
        }
        prev.assign(lp.in, 0.0);
        for (int r = 0; r < lp.out; ++r) {
            const double d = delta[r];
            const double* wr = &lp.w[static_cast<std::size_t>(r) * lp.in];
            for (int c = 0; c < lp.in; ++c) prev[c] += d * wr[c];
        }
        if (l > 0) {
            const std::vector<double>& y = tape.post[l];   // output of layer l-1
            const std::vector<double>& z = tape.pre[l - 1];
            for (int c = 0; c < lp.in; ++c)
                prev[c] *= detail::activate_grad_from_out(y[c], z[c], p.spec.hidden);
        }
        delta.swap(prev);
    }
    return delta;  // dL/dinput
}

inline BackwardResult mlp_backward(const MlpParams& p, const StateVec& input,
                                   const std::vector<double>& loss_grad_at_output) {
    BackwardResult res;
    res.param_grads = zero_grads_like(p);
    res.input_grad = mlp_backward_acc(p, input, loss_grad_at_output, res.param_grads);
    return res;
}

/// Numerically-stable softmax (max shift before exponentiation).
inline std::vector<double> softmax(const std::vector<double>& logits) {
    if (logits.empty()) throw std::invalid_argument("softmax: empty logits");
    const double m = *std::max_element(logits.begin(), logits.end());
    std::vector<double> p(logits.size());
    double z = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        z += p[i];
    }
    for (double& x : p) x /= z;
    return p;
}

struct CeResult {
    double loss = 0.0;
    std::vector<double> grad_at_logits;  // probs - onehot(target)
};

inline CeResult cross_entropy_grad(const std::vector<double>& probs, int target_id) {
    if (target_id < 0 || target_id >= static_cast<int>(probs.size()))
        throw std::out_of_range("cross_entropy_grad: target out of range");
    CeResult r;
    r.loss = -std::log(std::max(probs[target_id], 1e-300));
    if (probs[target_id] >= 1.0) r.loss = 0.0;
    r.grad_at_logits = probs;
    r.grad_at_logits[target_id] -= 1.0;
    return r;
}

/// Index of the maximum entry; ties broken by lowest index.
inline int argmax_lowest(const std::vector<double>& v) {
    if (v.empty()) throw std::invalid_argument("argmax_lowest: empty vector");
    int best = 0;
    for (int i = 1; i < static_cast<int>(v.size()); ++i)
        if (v[i] > v[best]) best = i;
    return best;
}

struct AdamState {
    MlpGrads m, v;
    long step = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

inline AdamState make_adam(const MlpParams& p, double lr = 1e-3) {
    AdamState s;
    s.m = zero_grads_like(p);
    s.v = zero_grads_like(p);
    s.lr = lr;
    return s;
}

/// One Adam update with bias correction; mutates params and state in place.
inline void adam_step(AdamState& st, MlpParams& params, const MlpGrads& grads) {
    if (grads.size() != params.layers.size())
        throw std::invalid_argument("adam_step: gradient shape mismatch");
    st.step += 1;
    const double bc1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.step));
    const double bc2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.step));
    for (std::size_t l = 0; l < params.layers.size(); ++l) {
        auto update = [&](std::vector<double>& p, std::vector<double>& m, std::vector<double>& v,
                          const std::vector<double>& g) {
            for (std::size_t i = 0; i < p.size(); ++i) {
                m[i] = st.beta1 * m[i] + (1.0 - st.beta1) * g[i];
                v[i] = st.beta2 * v[i] + (1.0 - st.beta2) * g[i] * g[i];
                const double mh = m[i] / bc1;
                const double vh = v[i] / bc2;
                p[i] -= st.lr * mh / (std::sqrt(vh) + st.eps);
            }
        };
        update(params.layers[l].w, st.m[l].w, st.v[l].w, grads[l].w);
        update(params.layers[l].b, st.m[l].b, st.v[l].b, grads[l].b);
    }
}

// ---------------------------------------------------------------------------
// Checkpoint format (text, versioned):
//   RLTA-MLP 1
//   spec <n_sizes> <sizes...> <tanh|relu> <identity|tanh>
//   layer <idx> <out> <in>
//   <out*in weights row-major> <out biases>
// Numbers use %.17g so a save/load round trip is bit-exact.
// ---------------------------------------------------------------------------

inline void save_mlp(std::ostream& os, const MlpParams& p) {
    os << "RLTA-MLP 1\n";
    os << "spec " << p.spec.layer_sizes.size();
    for (int s : p.spec.layer_sizes) os << ' ' << s;
    os << ' ' << (p.spec.hidden == HiddenActivation::tanh_fn ? "tanh" : "relu");
    os << ' ' << (p.spec.output == OutputActivation::identity ? "identity" : "tanh") << '\n';
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const LayerParams& lp = p.layers[l];
        os << "layer " << l << ' ' << lp.out << ' ' << lp.in << '\n';
        for (std::size_t i = 0; i < lp.w.size(); ++i) os << fmt_double(lp.w[i]) << (i + 1 < lp.w.size() ? ' ' : '\n');
        for (std::size_t i = 0; i < lp.b.size(); ++i) os << fmt_double(lp.b[i]) << (i + 1 < lp.b.size() ? ' ' : '\n');
    }
}

inline MlpParams load_mlp(std::istream& is) {
    std::string magic;
    int version = 0;
    is >> magic >> version;
    if (magic != "RLTA-MLP" || version != 1)
        throw std::runtime_error("load_mlp: bad header (expected 'RLTA-MLP 1')");
    std::string tok;
    is >> tok;
    if (tok != "spec") throw std::runtime_error("load_mlp: missing spec line");
    std::size_t n = 0;
    is >> n;
    MlpSpec spec;
    spec.layer_sizes.resize(n);
    for (std::size_t i = 0; i < n; ++i) is >> spec.layer_sizes[i];
    std::string hid, out;
    is >> hid >> out;
    spec.hidden = hid == "tanh" ? HiddenActivation::tanh_fn : HiddenActivation::relu;
    spec.output = out == "identity" ? OutputActivation::identity : OutputActivation::tanh_fn;
    spec.validate();
    MlpParams p;
    p.spec = spec;
    p.layers.resize(spec.layer_count());
    for (int l = 0; l < spec.layer_count(); ++l) {
        std::size_t idx = 0;
        is >> tok >> idx;
        if (tok != "layer" || static_cast<int>(idx) != l)
            throw std::runtime_error("load_mlp: malformed layer header");
        LayerParams& lp = p.layers[l];
        is >> lp.out >> lp.in;
        lp.w.resize(static_cast<std::size_t>(lp.out) * lp.in);
        lp.b.resize(lp.out);
        for (double& w : lp.w) is >> w;
        for (double& b : lp.b) is >> b;
    }
    if (!is) throw std::runtime_error("load_mlp: truncated checkpoint");
    return p;
}

}  // namespace rlta
