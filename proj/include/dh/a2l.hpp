#pragma once

// Audio-to-landmark denoiser: fully connected condition fusion, a stack of
// temporal blocks (time-axis convolution unit + per-frame mapping unit), and
// a projection back to the flattened landmark vector. Operates on windows of
// l frames of normalized canonical landmarks.

#include "dh/ddpm.hpp"
#include "dh/geometry.hpp"
#include "dh/nn.hpp"
#include "dh/synthdata.hpp"

#include <vector>

namespace dh {

struct A2LConditionSet {
    std::vector<std::vector<double>> audio;  // l rows of D_a
    LandmarkFrame mean_landmarks;            // raw canonical P-bar
};

struct A2LConfig {
    int landmarks = 68;     // L
    int audio_dim = 16;     // D_a
    int hidden = 128;       // D_h
    int blocks = 12;        // N
    int window = 20;        // l
    int kernel = 3;
    bool residual = true;
    bool temporal_unit = true;
    bool mapping_unit = true;
    bool diffusion = true;  // false = direct-regression ablation

    int state_dim() const { return 3 * landmarks; }
};

class A2LDenoiser {
public:
    A2LDenoiser() = default;
    A2LDenoiser(const A2LConfig& cfg, Rng& rng);

    const A2LConfig& config() const { return cfg_; }

    // Eq-style condition fusion: f_A(A) + f_Pbar(Pbar) + f_agg(f_P(x_t) (+) f_t(t)).
    // Batched: x_t is [B*l, 3L], audio [B*l, D_a], pbar [B, 3L], one timestep
    // per sample.
    Tensor fuse_conditions(const Tensor& x_t, const std::vector<int>& ts,
                           const Tensor& audio, const Tensor& pbar, int batch) const;
    Tensor temporal_block(const Tensor& x, int block, int batch) const;
    Tensor forward(const Tensor& x_t, const std::vector<int>& ts, const Tensor& audio,
                   const Tensor& pbar, int batch) const;

    // single-window convenience matching the module contract; x_t is the
    // flattened l x 3L state
    State predict_noise(const State& x_t, int t, const A2LConditionSet& cond) const;

    // batched diffusion training loss; draws (t, eps) per sample from rng
    Tensor training_loss_batch(const std::vector<State>& x0s,
                               const std::vector<A2LConditionSet>& conds,
                               const NoiseSchedule& sched, Rng& rng,
                               LossNorm norm = LossNorm::L2) const;
    // regression training loss for the no-diffusion ablation
    Tensor regression_loss_batch(const std::vector<State>& x0s,
                                 const std::vector<A2LConditionSet>& conds,
                                 LossNorm norm = LossNorm::L2) const;

    // reverse-samples a window and reshapes it to a normalized canonical
    // sequence of exactly l frames
    LandmarkSequence generate_landmarks(const A2LConditionSet& cond,
                                        const NoiseSchedule& sched, Rng& rng,
                                        int stride = 1, double fps = 25.0) const;
    // direct forward prediction (ablation path)
    LandmarkSequence regress_landmarks(const A2LConditionSet& cond,
                                       double fps = 25.0) const;

    nn::NamedParams named_params() const;
    std::vector<Tensor> params() const { return nn::values(named_params()); }
    long param_count() const;

private:
    Tensor cond_tensors(const A2LConditionSet& cond) const;

    A2LConfig cfg_;
    nn::Linear f_audio_, f_pbar_, f_state_, f_time_, f_agg_, proj_out_;
    struct Block {
        nn::LayerNorm norm_t;
        nn::Conv1d conv;
        nn::LayerNorm norm_m;
        nn::Linear fc;
    };
    std::vector<Block> blocks_;
};

}  // namespace dh
