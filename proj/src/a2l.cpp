#include "dh/a2l.hpp"

#include <stdexcept>

namespace dh {

A2LDenoiser::A2LDenoiser(const A2LConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.blocks < 0 || cfg.window < 1 || cfg.landmarks < 4)
        throw std::invalid_argument("A2LDenoiser: invalid config");
    if (cfg.blocks > 0 && !cfg.temporal_unit && !cfg.mapping_unit)
        throw std::invalid_argument("A2LDenoiser: blocks need at least one unit");
    int d = cfg.hidden;
    int s = cfg.state_dim();
    f_audio_ = nn::Linear(cfg.audio_dim, d, rng);
    f_pbar_ = nn::Linear(s, d, rng);
    f_state_ = nn::Linear(s, d, rng);
    f_time_ = nn::Linear(d, d, rng);
    f_agg_ = nn::Linear(2 * d, d, rng);
    blocks_.resize(cfg.blocks);
    for (auto& b : blocks_) {
        if (cfg.temporal_unit) {
            b.norm_t = nn::LayerNorm(d);
            b.conv = nn::Conv1d(d, d, cfg.kernel, rng);
        }
        if (cfg.mapping_unit) {
            b.norm_m = nn::LayerNorm(d);
            b.fc = nn::Linear(d, d, rng);
        }
    }
    proj_out_ = nn::Linear(d, s, rng, nn::Init::Zero);
}

Tensor A2LDenoiser::fuse_conditions(const Tensor& x_t, const std::vector<int>& ts,
                                    const Tensor& audio, const Tensor& pbar,
                                    int batch) const {
    int l = cfg_.window;
    if (x_t.rows() != batch * l || audio.rows() != batch * l || pbar.rows() != batch ||
        static_cast<int>(ts.size()) != batch)
        throw std::invalid_argument("fuse_conditions: batch shape mismatch");
    if (x_t.cols() != cfg_.state_dim() || audio.cols() != cfg_.audio_dim)
        throw std::invalid_argument("fuse_conditions: feature shape mismatch");

    Tensor a = f_audio_(audio);                                   // [B*l, D]
    Tensor p = repeat_each_row(f_pbar_(pbar), l);                 // [B*l, D]
    std::vector<double> emb;
    emb.reserve(static_cast<size_t>(batch) * cfg_.hidden);
    for (int s = 0; s < batch; ++s) {
        Tensor e = nn::timestep_embedding(ts[s], cfg_.hidden);
        emb.insert(emb.end(), e.val().begin(), e.val().end());
    }
    Tensor t_emb = f_time_(Tensor::from({batch, cfg_.hidden}, std::move(emb)));
    Tensor agg = f_agg_(concat_cols(f_state_(x_t), repeat_each_row(t_emb, l)));
    return add(add(a, p), agg);
}

Tensor A2LDenoiser::temporal_block(const Tensor& x, int block, int batch) const {
    const Block& b = blocks_.at(block);
    Tensor h = x;
    if (cfg_.temporal_unit)
        h = relu(b.conv(b.norm_t(h), batch, cfg_.window));
    if (cfg_.mapping_unit)
        h = relu(b.fc(b.norm_m(h)));
    return cfg_.residual ? add(x, h) : h;
}

Tensor A2LDenoiser::forward(const Tensor& x_t, const std::vector<int>& ts,
                            const Tensor& audio, const Tensor& pbar, int batch) const {
    Tensor h = fuse_conditions(x_t, ts, audio, pbar, batch);
    for (int n = 0; n < cfg_.blocks; ++n) h = temporal_block(h, n, batch);
    return proj_out_(h);
}

Tensor A2LDenoiser::cond_tensors(const A2LConditionSet& cond) const {
    if (static_cast<int>(cond.audio.size()) != cfg_.window)
        throw std::invalid_argument("A2L: audio window length mismatch");
    std::vector<double> a;
    a.reserve(static_cast<size_t>(cfg_.window) * cfg_.audio_dim);
    for (const auto& row : cond.audio) {
        if (static_cast<int>(row.size()) != cfg_.audio_dim)
            throw std::invalid_argument("A2L: audio feature dim mismatch");
        a.insert(a.end(), row.begin(), row.end());
    }
    return Tensor::from({cfg_.window, cfg_.audio_dim}, std::move(a));
}

State A2LDenoiser::predict_noise(const State& x_t, int t,
                                 const A2LConditionSet& cond) const {
    int l = cfg_.window, s = cfg_.state_dim();
    if (static_cast<int>(x_t.size()) != l * s)
        throw std::invalid_argument("A2L::predict_noise: state size mismatch");
    if (cond.mean_landmarks.count() != cfg_.landmarks)
        throw std::invalid_argument("A2L::predict_noise: mean landmark count mismatch");
    NoGradGuard ng;
    Tensor x = Tensor::from({l, s}, x_t);
    Tensor pbar = Tensor::from({1, s}, cond.mean_landmarks.flatten());
    Tensor out = forward(x, {t}, cond_tensors(cond), pbar, 1);
    return out.val();
}

namespace {
Tensor residual_loss(const Tensor& pred, const Tensor& target, LossNorm norm) {
    Tensor r = sub(pred, target);
    return mean_all(norm == LossNorm::L2 ? square(r) : abs_elems(r));
}
}  // namespace

Tensor A2LDenoiser::training_loss_batch(const std::vector<State>& x0s,
                                        const std::vector<A2LConditionSet>& conds,
                                        const NoiseSchedule& sched, Rng& rng,
                                        LossNorm norm) const {
    int batch = static_cast<int>(x0s.size());
    int l = cfg_.window, s = cfg_.state_dim();
    std::vector<int> ts(batch);
    std::vector<double> xt_all, eps_all, audio_all, pbar_all;
    xt_all.reserve(static_cast<size_t>(batch) * l * s);
    eps_all.reserve(xt_all.capacity());
    for (int i = 0; i < batch; ++i) {
        ts[i] = rng.uniform_int(sched.T);
        State eps(x0s[i].size());
        for (auto& e : eps) e = rng.normal();
        State x_t = q_sample(x0s[i], ts[i], eps, sched);
        xt_all.insert(xt_all.end(), x_t.begin(), x_t.end());
        eps_all.insert(eps_all.end(), eps.begin(), eps.end());
        for (const auto& row : conds[i].audio)
            audio_all.insert(audio_all.end(), row.begin(), row.end());
        auto pb = conds[i].mean_landmarks.flatten();
        pbar_all.insert(pbar_all.end(), pb.begin(), pb.end());
    }
    Tensor x = Tensor::from({batch * l, s}, std::move(xt_all));
    Tensor audio = Tensor::from({batch * l, cfg_.audio_dim}, std::move(audio_all));
    Tensor pbar = Tensor::from({batch, s}, std::move(pbar_all));
    Tensor pred = forward(x, ts, audio, pbar, batch);
    return residual_loss(pred, Tensor::from({batch * l, s}, std::move(eps_all)), norm);
}

Tensor A2LDenoiser::regression_loss_batch(const std::vector<State>& x0s,
                                          const std::vector<A2LConditionSet>& conds,
                                          LossNorm norm) const {
    int batch = static_cast<int>(x0s.size());
    int l = cfg_.window, s = cfg_.state_dim();
    std::vector<int> ts(batch, 0);
    std::vector<double> x0_all, audio_all, pbar_all;
    for (int i = 0; i < batch; ++i) {
        x0_all.insert(x0_all.end(), x0s[i].begin(), x0s[i].end());
        for (const auto& row : conds[i].audio)
            audio_all.insert(audio_all.end(), row.begin(), row.end());
        auto pb = conds[i].mean_landmarks.flatten();
        pbar_all.insert(pbar_all.end(), pb.begin(), pb.end());
    }
    Tensor zeros = Tensor::zeros({batch * l, s});
    Tensor audio = Tensor::from({batch * l, cfg_.audio_dim}, std::move(audio_all));
    Tensor pbar = Tensor::from({batch, s}, std::move(pbar_all));
    Tensor pred = forward(zeros, ts, audio, pbar, batch);
    return residual_loss(pred, Tensor::from({batch * l, s}, std::move(x0_all)), norm);
}

namespace {
LandmarkSequence state_to_sequence(const State& x, int l, int n_lm, double fps) {
    LandmarkSequence seq;
    seq.fps = fps;
    seq.frames.reserve(l);
    for (int i = 0; i < l; ++i) {
        std::vector<double> row(x.begin() + static_cast<long>(i) * n_lm * 3,
                                x.begin() + static_cast<long>(i + 1) * n_lm * 3);
        seq.frames.push_back(LandmarkFrame::unflatten(row));
    }
    return seq;
}
}  // namespace

LandmarkSequence A2LDenoiser::generate_landmarks(const A2LConditionSet& cond,
                                                 const NoiseSchedule& sched, Rng& rng,
                                                 int stride, double fps) const {
    Denoiser d = [this, &cond](const State& x_t, int t) {
        return predict_noise(x_t, t, cond);
    };
    State x = sample(d, static_cast<long>(cfg_.window) * cfg_.state_dim(), sched, rng, stride);
    return state_to_sequence(x, cfg_.window, cfg_.landmarks, fps);
}

LandmarkSequence A2LDenoiser::regress_landmarks(const A2LConditionSet& cond,
                                                double fps) const {
    NoGradGuard ng;
    int l = cfg_.window, s = cfg_.state_dim();
    Tensor zeros = Tensor::zeros({l, s});
    Tensor pbar = Tensor::from({1, s}, cond.mean_landmarks.flatten());
    Tensor out = forward(zeros, {0}, cond_tensors(cond), pbar, 1);
    return state_to_sequence(out.val(), l, cfg_.landmarks, fps);
}

nn::NamedParams A2LDenoiser::named_params() const {
    nn::NamedParams np;
    f_audio_.collect(np, "f_audio");
    f_pbar_.collect(np, "f_pbar");
    f_state_.collect(np, "f_state");
    f_time_.collect(np, "f_time");
    f_agg_.collect(np, "f_agg");
    for (size_t i = 0; i < blocks_.size(); ++i) {
        std::string p = "block" + std::to_string(i);
        if (cfg_.temporal_unit) {
            blocks_[i].norm_t.collect(np, p + ".norm_t");
            blocks_[i].conv.collect(np, p + ".conv");
        }
        if (cfg_.mapping_unit) {
            blocks_[i].norm_m.collect(np, p + ".norm_m");
            blocks_[i].fc.collect(np, p + ".fc");
        }
    }
    proj_out_.collect(np, "proj_out");
    return np;
}

long A2LDenoiser::param_count() const {
    long n = 0;
    for (const auto& [name, t] : named_params()) n += t.size();
    return n;
}

}  // namespace dh
