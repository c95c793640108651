#pragma once

// Shared denoising-diffusion machinery: the beta/alpha tables, closed-form
// forward noising, the eps-prediction training loss and ancestral/strided
// reverse sampling. Both hierarchies run on this code; state vectors are
// flat doubles so the caller owns the shape.

#include "dh/rng.hpp"

#include <functional>
#include <string>
#include <vector>

namespace dh {

enum class LossNorm { L2, L1 };
enum class ReverseVariance { Posterior, Beta };

struct NoiseSchedule {
    int T = 0;
    double beta_start = 0.0, beta_end = 0.0;
    std::vector<double> beta;       // in (0,1)
    std::vector<double> alpha;      // 1 - beta
    std::vector<double> alpha_bar;  // cumulative product of alpha
    ReverseVariance variance = ReverseVariance::Posterior;
};

NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end);

using State = std::vector<double>;
// eps-predictor: (x_t, t) -> predicted noise. Conditioning is bound by the
// caller (a2l / l2i wrap their condition sets into the closure).
using Denoiser = std::function<State(const State& x_t, int t)>;

// closed form q(x_t | x_0): sqrt(abar)*x0 + sqrt(1-abar)*eps
State q_sample(const State& x0, int t, const State& eps, const NoiseSchedule& sched);

// Draws t ~ U[0,T), eps ~ N(0,I), returns the mean elementwise eps-residual
// under the configured norm (L2: squared error, L1: absolute error).
double training_loss(const Denoiser& denoiser, const State& x0,
                     const NoiseSchedule& sched, Rng& rng,
                     LossNorm norm = LossNorm::L2);

// One ancestral reverse step x_t -> x_{t-1}; no noise is added at t = 0.
State p_sample_step(const Denoiser& denoiser, const State& x_t, int t,
                    const NoiseSchedule& sched, Rng& rng);

// Full reverse chain from x_T ~ N(0,I). stride == 1 is exact ancestral
// sampling; stride > 1 follows a deterministic (DDIM-style) subsampled
// ladder and requires T % stride == 0.
State sample(const Denoiser& denoiser, long n_elems, const NoiseSchedule& sched,
             Rng& rng, int stride = 1,
             const std::function<void(int t, const State&)>& on_step = nullptr);

}  // namespace dh
