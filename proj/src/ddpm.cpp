#include "dh/ddpm.hpp"

#include <cmath>
#include <stdexcept>

namespace dh {

NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw std::invalid_argument("make_linear_schedule: T must be >= 1");
    if (!(beta_start > 0.0) || !(beta_start <= beta_end) || !(beta_end < 1.0))
        throw std::invalid_argument("make_linear_schedule: need 0 < beta_start <= beta_end < 1");
    NoiseSchedule s;
    s.T = T;
    s.beta_start = beta_start;
    s.beta_end = beta_end;
    s.beta.resize(T);
    s.alpha.resize(T);
    s.alpha_bar.resize(T);
    double prod = 1.0;
    for (int t = 0; t < T; ++t) {
        s.beta[t] = T == 1 ? beta_start
                           : beta_start + (beta_end - beta_start) * t / (T - 1);
        s.alpha[t] = 1.0 - s.beta[t];
        prod *= s.alpha[t];
        s.alpha_bar[t] = prod;
    }
    return s;
}

namespace {
void check_t(int t, const NoiseSchedule& sched, const char* op) {
    if (t < 0 || t >= sched.T)
        throw std::invalid_argument(std::string(op) + ": timestep out of range");
}
}  // namespace

State q_sample(const State& x0, int t, const State& eps, const NoiseSchedule& sched) {
    check_t(t, sched, "q_sample");
    if (x0.size() != eps.size()) throw std::invalid_argument("q_sample: shape mismatch");
    double a = std::sqrt(sched.alpha_bar[t]);
    double b = std::sqrt(1.0 - sched.alpha_bar[t]);
    State out(x0.size());
    for (size_t i = 0; i < x0.size(); ++i) out[i] = a * x0[i] + b * eps[i];
    return out;
}

double training_loss(const Denoiser& denoiser, const State& x0,
                     const NoiseSchedule& sched, Rng& rng, LossNorm norm) {
    int t = rng.uniform_int(sched.T);
    State eps(x0.size());
    for (auto& e : eps) e = rng.normal();
    State x_t = q_sample(x0, t, eps, sched);
    State pred = denoiser(x_t, t);
    if (pred.size() != eps.size())
        throw std::runtime_error("training_loss: denoiser output shape mismatch");
    double acc = 0.0;
    for (size_t i = 0; i < eps.size(); ++i) {
        double r = eps[i] - pred[i];
        acc += norm == LossNorm::L2 ? r * r : std::abs(r);
    }
    return acc / static_cast<double>(eps.size());
}

State p_sample_step(const Denoiser& denoiser, const State& x_t, int t,
                    const NoiseSchedule& sched, Rng& rng) {
    check_t(t, sched, "p_sample_step");
    State eps_hat = denoiser(x_t, t);
    if (eps_hat.size() != x_t.size())
        throw std::runtime_error("p_sample_step: denoiser output shape mismatch");
    double abar = sched.alpha_bar[t];
    double coef = sched.beta[t] / std::sqrt(1.0 - abar);
    double inv_sqrt_a = 1.0 / std::sqrt(sched.alpha[t]);
    double sigma = 0.0;
    if (t > 0) {
        double abar_prev = sched.alpha_bar[t - 1];
        double var = sched.variance == ReverseVariance::Posterior
                         ? sched.beta[t] * (1.0 - abar_prev) / (1.0 - abar)
                         : sched.beta[t];
        sigma = std::sqrt(var);
    }
    State out(x_t.size());
    for (size_t i = 0; i < x_t.size(); ++i) {
        double mean = inv_sqrt_a * (x_t[i] - coef * eps_hat[i]);
        out[i] = t > 0 ? mean + sigma * rng.normal() : mean;
    }
    return out;
}

State sample(const Denoiser& denoiser, long n_elems, const NoiseSchedule& sched,
             Rng& rng, int stride,
             const std::function<void(int t, const State&)>& on_step) {
    if (stride < 1 || sched.T % stride != 0)
        throw std::invalid_argument("sample: stride must be >= 1 and divide T");
    State x(n_elems);
    for (auto& v : x) v = rng.normal();
    if (stride == 1) {
        for (int t = sched.T - 1; t >= 0; --t) {
            x = p_sample_step(denoiser, x, t, sched, rng);
            if (on_step) on_step(t, x);
        }
        return x;
    }
    // Deterministic strided ladder: jump between t and t-stride using the
    // implied x0 estimate (eta = 0).
    for (int t = sched.T - 1; t >= 0; t -= stride) {
        State eps_hat = denoiser(x, t);
        double abar = sched.alpha_bar[t];
        double sa = std::sqrt(abar), sb = std::sqrt(1.0 - abar);
        int t_prev = t - stride;
        double abar_prev = t_prev >= 0 ? sched.alpha_bar[t_prev] : 1.0;
        double pa = std::sqrt(abar_prev), pb = std::sqrt(1.0 - abar_prev);
        for (long i = 0; i < n_elems; ++i) {
            double x0_hat = (x[i] - sb * eps_hat[i]) / sa;
            x[i] = pa * x0_hat + pb * eps_hat[i];
        }
        if (on_step) on_step(t, x);
    }
    return x;
}

}  // namespace dh
