#pragma once

// Small layer library over the autodiff tensors: initializers, the handful of
// layers the denoisers need, named-parameter collection for checkpoints, and
// an Adam optimizer.

#include "dh/rng.hpp"
#include "dh/tensor.hpp"

#include <string>
#include <utility>
#include <vector>

namespace dh::nn {

using NamedParams = std::vector<std::pair<std::string, Tensor>>;

enum class Init { He, Xavier, Zero };

Tensor make_param(std::vector<int> shape, Init init, int fan_in, Rng& rng);

struct Linear {
    Tensor W, b;  // W [in, out]
    Linear() = default;
    Linear(int in, int out, Rng& rng, Init init = Init::He);
    Tensor operator()(const Tensor& x) const { return linear(x, W, b); }
    void collect(NamedParams& out, const std::string& prefix) const;
};

struct LayerNorm {
    Tensor gamma, beta;
    LayerNorm() = default;
    explicit LayerNorm(int dim);
    Tensor operator()(const Tensor& x) const { return layer_norm(x, gamma, beta); }
    void collect(NamedParams& out, const std::string& prefix) const;
};

struct Conv1d {
    Tensor W, b;  // W [k*Cin, Cout]
    int k = 3;
    Conv1d() = default;
    Conv1d(int cin, int cout, int k, Rng& rng, Init init = Init::He);
    Tensor operator()(const Tensor& x, int batch, int len) const {
        return conv1d(x, W, b, batch, len, k);
    }
    void collect(NamedParams& out, const std::string& prefix) const;
};

struct Conv2d {
    Tensor W, b;  // W [k*k*Cin, Cout]
    int k = 3, stride = 1;
    Conv2d() = default;
    Conv2d(int cin, int cout, int k, int stride, Rng& rng, Init init = Init::He);
    Tensor operator()(const Tensor& x, int batch, int h, int w) const {
        return conv2d(x, W, b, batch, h, w, k, stride);
    }
    void collect(NamedParams& out, const std::string& prefix) const;
};

struct GroupNorm {
    Tensor gamma, beta;
    int groups = 8;
    GroupNorm() = default;
    GroupNorm(int channels, int groups);
    Tensor operator()(const Tensor& x, int batch, int hw) const {
        return group_norm(x, gamma, beta, batch, hw, groups);
    }
    void collect(NamedParams& out, const std::string& prefix) const;
};

// Single-head spatial self-attention over the B*n rows of a [B*n, C] map,
// applied per sample. Optional learned additive position embedding; disabling
// it makes the layer permutation-equivariant over positions.
struct SelfAttention {
    Tensor Wq, Wk, Wv, Wo, bo;
    Tensor pos;  // [n, C], only when use_pos
    GroupNorm norm;
    bool use_pos = false;
    int n_positions = 0;
    SelfAttention() = default;
    SelfAttention(int channels, int n_positions, bool use_pos, Rng& rng);
    Tensor operator()(const Tensor& x, int batch) const;
    void collect(NamedParams& out, const std::string& prefix) const;
};

// Standard sinusoidal embedding of a diffusion timestep, returned as a
// constant [1, dim] tensor.
Tensor timestep_embedding(int t, int dim);

struct Adam {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step_count = 0;
    std::vector<std::vector<double>> m, v;

    void init(const std::vector<Tensor>& params);
    void zero_grad(std::vector<Tensor>& params);
    void step(std::vector<Tensor>& params);
};

inline std::vector<Tensor> values(const NamedParams& np) {
    std::vector<Tensor> out;
    out.reserve(np.size());
    for (const auto& [k, t] : np) out.push_back(t);
    return out;
}

}  // namespace dh::nn
