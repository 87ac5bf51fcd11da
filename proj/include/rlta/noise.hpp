// Observation perturbations: the "what" of an attack. Timers pick the frame,
// these transform the observation handed to the victim on that frame.
//
//   zero_out         wipe the observation to all zeros
//   gaussian_fusion  smooth entries with a normalized Gaussian kernel
//                    (1-D over flat observations, separable over square grids)
//   fgsm_perturb     apply a signed-gradient step of magnitude epsilon
//   shuffle_state    uniformly permute the entries (Fisher-Yates)
#pragma once

#include <cmath>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

#include "rlta/core.hpp"

namespace rlta {

enum class NoiseKind { zero_out, gaussian_fusion, fgsm, shuffle };

inline const char* noise_kind_name(NoiseKind k) {
    switch (k) {
        case NoiseKind::zero_out: return "zero_out";
        case NoiseKind::gaussian_fusion: return "gaussian_fusion";
        case NoiseKind::fgsm: return "fgsm";
        case NoiseKind::shuffle: return "shuffle";
    }
    return "?";
}

inline NoiseKind parse_noise_kind(const std::string& name) {
    if (name == "zero_out") return NoiseKind::zero_out;
    if (name == "gaussian_fusion" || name == "gaussian") return NoiseKind::gaussian_fusion;
    if (name == "fgsm") return NoiseKind::fgsm;
    if (name == "shuffle") return NoiseKind::shuffle;
    throw std::invalid_argument("unknown noise kind: " + name);
}

struct NoiseConfig {
    NoiseKind kind = NoiseKind::zero_out;
    int kernel_size = 5;   // gaussian_fusion
    double sigma = 1.0;    // gaussian_fusion
    double epsilon = 0.3;  // fgsm
    // >0: smooth the observation as a grid_side x grid_side image instead of a
    // flat vector (set by the harness for grid-shaped observations)
    int grid_side = 0;

    void validate() const {
        if (kernel_size < 3 || kernel_size % 2 == 0)
            throw std::invalid_argument("NoiseConfig: kernel_size must be odd and >= 3");
        if (!(sigma > 0.0)) throw std::invalid_argument("NoiseConfig: sigma must be > 0");
        if (!(epsilon > 0.0)) throw std::invalid_argument("NoiseConfig: epsilon must be > 0");
        if (grid_side < 0) throw std::invalid_argument("NoiseConfig: grid_side must be >= 0");
    }
};

struct GaussianKernel {
    std::vector<double> taps;

    static GaussianKernel make(int kernel_size, double sigma) {
        if (kernel_size < 3 || kernel_size % 2 == 0)
            throw std::invalid_argument("GaussianKernel: kernel_size must be odd and >= 3");
        if (!(sigma > 0.0)) throw std::invalid_argument("GaussianKernel: sigma must be > 0");
        GaussianKernel k;
        k.taps.resize(static_cast<std::size_t>(kernel_size));
        const int half = kernel_size / 2;
        double sum = 0.0;
        for (int i = 0; i < kernel_size; ++i) {
            double d = i - half;
            k.taps[static_cast<std::size_t>(i)] = std::exp(-d * d / (2.0 * sigma * sigma));
            sum += k.taps[static_cast<std::size_t>(i)];
        }
        for (double& t : k.taps) t /= sum;
        return k;
    }
};

inline StateVec zero_out(const StateVec& state) {
    return StateVec(state.size(), 0.0);
}

namespace detail {

// Mirror an index into [0, n) without repeating the edge sample:
// ... 2 1 | 0 1 2 3 | 2 1 ...
inline int reflect_index(int j, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    j = std::abs(j) % period;
    return j < n ? j : period - j;
}

}  // namespace detail

/// Convolves a flat observation with the kernel, mirror-padded at both ends.
inline StateVec gaussian_fusion(const StateVec& state, const GaussianKernel& kernel) {
    const int n = static_cast<int>(state.size());
    const int k = static_cast<int>(kernel.taps.size());
    const int half = k / 2;
    StateVec out(state.size(), 0.0);
    for (int i = 0; i < n; ++i) {
        double acc = 0.0;
        for (int t = 0; t < k; ++t)
            acc += kernel.taps[static_cast<std::size_t>(t)] *
                   state[static_cast<std::size_t>(detail::reflect_index(i + t - half, n))];
        out[static_cast<std::size_t>(i)] = acc;
    }
    return out;
}

/// Separable smoothing of a side x side grid observation (rows, then columns).
inline StateVec gaussian_fusion_grid(const StateVec& state, int side,
                                     const GaussianKernel& kernel) {
    if (side <= 0 || static_cast<std::size_t>(side) * static_cast<std::size_t>(side) != state.size())
        throw std::invalid_argument("gaussian_fusion_grid: state is not a side*side grid");
    const int k = static_cast<int>(kernel.taps.size());
    const int half = k / 2;
    StateVec rows(state.size(), 0.0);
    for (int r = 0; r < side; ++r) {
        for (int c = 0; c < side; ++c) {
            double acc = 0.0;
            for (int t = 0; t < k; ++t)
                acc += kernel.taps[static_cast<std::size_t>(t)] *
                       state[static_cast<std::size_t>(r) * side +
                             detail::reflect_index(c + t - half, side)];
            rows[static_cast<std::size_t>(r) * side + c] = acc;
        }
    }
    StateVec out(state.size(), 0.0);
    for (int c = 0; c < side; ++c) {
        for (int r = 0; r < side; ++r) {
            double acc = 0.0;
            for (int t = 0; t < k; ++t)
                acc += kernel.taps[static_cast<std::size_t>(t)] *
                       rows[static_cast<std::size_t>(detail::reflect_index(r + t - half, side)) *
                                side +
                            c];
            out[static_cast<std::size_t>(r) * side + c] = acc;
        }
    }
    return out;
}

/// One signed-gradient step: state + epsilon * sign(gradient), sign(0) = 0.
inline StateVec fgsm_perturb(const StateVec& state, const std::vector<double>& gradient,
                             double epsilon) {
    if (gradient.size() != state.size())
        throw std::invalid_argument("fgsm_perturb: gradient/state dimension mismatch");
    if (!(epsilon >= 0.0)) throw std::invalid_argument("fgsm_perturb: epsilon must be >= 0");
    StateVec out(state.size());
    for (std::size_t i = 0; i < state.size(); ++i) {
        double g = gradient[i];
        double s = g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0);
        out[i] = state[i] + epsilon * s;
    }
    return out;
}

/// Uniform random permutation of the entries (Fisher-Yates, seeded stream).
inline StateVec shuffle_state(const StateVec& state, RngStream& rng) {
    StateVec out = state;
    for (int i = static_cast<int>(out.size()) - 1; i > 0; --i) {
        int j = rng_below(rng, i + 1);
        std::swap(out[static_cast<std::size_t>(i)], out[static_cast<std::size_t>(j)]);
    }
    return out;
}

}  // namespace rlta
