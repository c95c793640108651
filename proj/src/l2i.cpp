#include "dh/l2i.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dh {

FaceImage rasterize_landmarks(const LandmarkFrame& frame, const Camera& camera, int size,
                              const std::vector<int>& mouth_idx, double radius,
                              RasterizeStats* stats) {
    if (size < 1) throw std::invalid_argument("rasterize_landmarks: invalid size");
    double r = radius > 0.0 ? radius : std::max(1.0, size / 64.0);
    FaceImage img(size, size);
    std::vector<uint8_t> is_mouth(frame.points.size(), 0);
    for (int idx : mouth_idx)
        if (idx >= 0 && idx < frame.count()) is_mouth[idx] = 1;
    int clipped = 0;
    for (int i = 0; i < frame.count(); ++i) {
        double px = camera.scale * frame.points[i].x() + camera.offset_x;
        double py = camera.scale * frame.points[i].y() + camera.offset_y;
        bool was_clipped = false;
        stamp_disc_channel(img, px, py, r, is_mouth[i] ? 2 : 1, &was_clipped);
        if (was_clipped) ++clipped;
    }
    if (stats) stats->clipped_points = clipped;
    return img;
}

MaskRect mouth_mask_rect(const LandmarkFrame& frame, int h, int w, int margin) {
    double x0 = 1e30, x1 = -1e30, y0 = 1e30, y1 = -1e30;
    for (const auto& p : frame.points) {
        x0 = std::min(x0, p.x());
        x1 = std::max(x1, p.x());
        y0 = std::min(y0, p.y());
        y1 = std::max(y1, p.y());
    }
    MaskRect r;
    if (frame.points.empty() || x1 - x0 < 1.0 || y1 - y0 < 1.0) {
        // degenerate box: mask the whole lower half of the image
        r.x0 = 0;
        r.x1 = w;
        r.y0 = h / 2;
        r.y1 = h;
        return r;
    }
    double ymid = 0.5 * (y0 + y1);
    r.x0 = std::clamp(static_cast<int>(std::floor(x0)) - margin, 0, w);
    r.x1 = std::clamp(static_cast<int>(std::ceil(x1)) + margin, 0, w);
    r.y0 = std::clamp(static_cast<int>(std::floor(ymid)) - margin, 0, h);
    r.y1 = std::clamp(static_cast<int>(std::ceil(y1)) + margin, 0, h);
    return r;
}

FaceImage mask_mouth_region(const FaceImage& img, const LandmarkFrame& frame,
                            int margin) {
    MaskRect r = mouth_mask_rect(frame, img.h, img.w, margin);
    FaceImage out = img;
    for (int y = r.y0; y < r.y1; ++y)
        for (int x = r.x0; x < r.x1; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = 0.0;
    return out;
}

// ---------------- latent codec ----------------

LatentCodec::LatentCodec(int factor, CodecMode mode) : f_(factor), mode_(mode) {
    if (factor < 1) throw std::invalid_argument("LatentCodec: factor must be >= 1");
    if (mode_ == CodecMode::Learned) {
        int c = channels();
        Rng rng(0x1417);
        We_ = nn::make_param({c, c}, nn::Init::Xavier, c, rng);
        be_ = nn::make_param({c}, nn::Init::Zero, c, rng);
        Wd_ = nn::make_param({c, c}, nn::Init::Xavier, c, rng);
        bd_ = nn::make_param({c}, nn::Init::Zero, c, rng);
        // start near the identity so an untrained codec is still roughly invertible
        for (int i = 0; i < c; ++i) {
            We_.val()[static_cast<size_t>(i) * c + i] += 1.0;
            Wd_.val()[static_cast<size_t>(i) * c + i] += 1.0;
        }
    }
}

namespace {
// space-to-depth with the affine shift to zero-mean unit range
std::vector<double> patchify(const FaceImage& img, int f) {
    int hl = img.h / f, wl = img.w / f, c = 3 * f * f;
    std::vector<double> out(static_cast<size_t>(hl) * wl * c);
    for (int y = 0; y < hl; ++y)
        for (int x = 0; x < wl; ++x)
            for (int dy = 0; dy < f; ++dy)
                for (int dx = 0; dx < f; ++dx)
                    for (int ch = 0; ch < 3; ++ch) {
                        int co = (dy * f + dx) * 3 + ch;
                        out[(static_cast<size_t>(y) * wl + x) * c + co] =
                            (img.at(y * f + dy, x * f + dx, ch) - 0.5) * 2.0;
                    }
    return out;
}

FaceImage unpatchify(const std::vector<double>& lat, int hl, int wl, int f) {
    int c = 3 * f * f;
    FaceImage img(hl * f, wl * f);
    for (int y = 0; y < hl; ++y)
        for (int x = 0; x < wl; ++x)
            for (int dy = 0; dy < f; ++dy)
                for (int dx = 0; dx < f; ++dx)
                    for (int ch = 0; ch < 3; ++ch) {
                        int co = (dy * f + dx) * 3 + ch;
                        img.at(y * f + dy, x * f + dx, ch) =
                            lat[(static_cast<size_t>(y) * wl + x) * c + co] * 0.5 + 0.5;
                    }
    return img;
}
}  // namespace

LatentImage LatentCodec::encode(const FaceImage& img) const {
    if (img.h % f_ != 0 || img.w % f_ != 0)
        throw std::invalid_argument("LatentCodec::encode: size not divisible by factor");
    LatentImage lat(img.h / f_, img.w / f_, channels());
    lat.data = patchify(img, f_);
    if (mode_ == CodecMode::Learned) {
        NoGradGuard ng;
        Tensor x = Tensor::from({lat.h * lat.w, lat.c}, std::move(lat.data));
        lat.data = linear(x, We_, be_).val();
    }
    return lat;
}

FaceImage LatentCodec::decode(const LatentImage& lat) const {
    if (lat.c != channels())
        throw std::invalid_argument("LatentCodec::decode: channel count mismatch");
    std::vector<double> d = lat.data;
    if (mode_ == CodecMode::Learned) {
        NoGradGuard ng;
        Tensor x = Tensor::from({lat.h * lat.w, lat.c}, std::move(d));
        d = linear(x, Wd_, bd_).val();
    }
    return unpatchify(d, lat.h, lat.w, f_);
}

double LatentCodec::train_reconstruction(const std::vector<FaceImage>& images, int steps,
                                         double lr, Rng& rng) {
    if (mode_ != CodecMode::Learned)
        throw std::logic_error("LatentCodec: fixed codec has nothing to train");
    std::vector<Tensor> params{We_, be_, Wd_, bd_};
    nn::Adam opt;
    opt.lr = lr;
    opt.init(params);
    double last = 0.0;
    for (int s = 0; s < steps; ++s) {
        const FaceImage& img = images[rng.uniform_int(static_cast<int>(images.size()))];
        auto flat = patchify(img, f_);
        int rows = (img.h / f_) * (img.w / f_);
        Tensor x = Tensor::from({rows, channels()}, flat);
        Tensor recon = linear(linear(x, We_, be_), Wd_, bd_);
        Tensor loss = mean_all(square(sub(recon, Tensor::from({rows, channels()}, flat))));
        opt.zero_grad(params);
        backward(loss);
        opt.step(params);
        last = loss.val()[0];
    }
    return last;
}

nn::NamedParams LatentCodec::named_params() const {
    nn::NamedParams np;
    if (mode_ == CodecMode::Learned) {
        np.emplace_back("codec.We", We_);
        np.emplace_back("codec.be", be_);
        np.emplace_back("codec.Wd", Wd_);
        np.emplace_back("codec.bd", bd_);
    }
    return np;
}

void apply_cond_mask(L2IConditionSet& cond, const L2ICondMask& mask) {
    auto zero = [](LatentImage& l) { std::fill(l.data.begin(), l.data.end(), 0.0); };
    if (!mask.masked_target) zero(cond.masked_target);
    if (!mask.target_landmarks) zero(cond.target_landmark_img);
    if (!mask.reference) zero(cond.reference_img);
    if (!mask.reference_landmarks) zero(cond.reference_landmark_img);
}

std::pair<FaceImage, LandmarkFrame> select_reference(
    const std::vector<FaceImage>& images, const LandmarkSequence& landmarks, int i,
    int tau, ReferenceMode mode) {
    if (images.empty() || landmarks.frames.empty())
        throw std::invalid_argument("select_reference: empty clip");
    int idx = mode == ReferenceMode::Infer ? 0 : std::max(i - tau, 0);
    return {images.at(idx), landmarks.frames.at(idx)};
}

// ---------------- denoiser ----------------

L2IDenoiser::ResBlock L2IDenoiser::make_resblock(int cin, int cout, Rng& rng) const {
    ResBlock b;
    b.gn1 = nn::GroupNorm(cin, std::min(8, cin));
    b.conv1 = nn::Conv2d(cin, cout, 3, 1, rng);
    b.t_proj = nn::Linear(cfg_.emb_dim(), cout, rng);
    b.gn2 = nn::GroupNorm(cout, std::min(8, cout));
    b.conv2 = nn::Conv2d(cout, cout, 3, 1, rng, nn::Init::Zero);
    b.has_skip = cin != cout;
    if (b.has_skip) b.skip = nn::Conv2d(cin, cout, 1, 1, rng);
    return b;
}

Tensor L2IDenoiser::ResBlock::forward(const Tensor& x, const Tensor& emb, int batch,
                                      int h, int w) const {
    Tensor hh = conv1(silu(gn1(x, batch, h * w)), batch, h, w);
    hh = add(hh, repeat_each_row(t_proj(emb), h * w));
    hh = conv2(silu(gn2(hh, batch, h * w)), batch, h, w);
    Tensor sk = has_skip ? skip(x, batch, h, w) : x;
    return add(hh, sk);
}

void L2IDenoiser::ResBlock::collect(nn::NamedParams& out, const std::string& p) const {
    gn1.collect(out, p + ".gn1");
    conv1.collect(out, p + ".conv1");
    t_proj.collect(out, p + ".t_proj");
    gn2.collect(out, p + ".gn2");
    conv2.collect(out, p + ".conv2");
    if (has_skip) skip.collect(out, p + ".skip");
}

L2IDenoiser::L2IDenoiser(const L2IConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.image_size % cfg.factor != 0)
        throw std::invalid_argument("L2IDenoiser: image size not divisible by factor");
    int hl = cfg.latent_size();
    if (hl % 2 != 0)
        throw std::invalid_argument("L2IDenoiser: latent size must be even (depth-2 unet)");
    int cz = cfg.latent_channels();
    int w0 = cfg.base_width, w1 = 2 * cfg.base_width;
    time1_ = nn::Linear(w0, cfg.emb_dim(), rng);
    time2_ = nn::Linear(cfg.emb_dim(), cfg.emb_dim(), rng);
    conv_in_ = nn::Conv2d(5 * cz, w0, 3, 1, rng);
    res_enc_ = make_resblock(w0, w0, rng);
    down_ = nn::Conv2d(w0, w1, 3, 2, rng);
    res_mid1_ = make_resblock(w1, w1, rng);
    attn_ = nn::SelfAttention(w1, (hl / 2) * (hl / 2), cfg.attn_pos_embed, rng);
    res_mid2_ = make_resblock(w1, w1, rng);
    up_conv_ = nn::Conv2d(w1, w0, 3, 1, rng);
    res_dec_ = make_resblock(2 * w0, w0, rng);
    out_norm_ = nn::GroupNorm(w0, std::min(8, w0));
    out_conv_ = nn::Conv2d(w0, cz, 3, 1, rng, nn::Init::Zero);
}

Tensor L2IDenoiser::forward(const Tensor& x, const std::vector<int>& ts, int batch) const {
    int hl = cfg_.latent_size();
    if (x.rows() != batch * hl * hl || x.cols() != 5 * cfg_.latent_channels())
        throw std::invalid_argument("L2IDenoiser::forward: input shape mismatch");
    if (static_cast<int>(ts.size()) != batch)
        throw std::invalid_argument("L2IDenoiser::forward: timestep count mismatch");

    std::vector<double> emb;
    emb.reserve(static_cast<size_t>(batch) * cfg_.base_width);
    for (int s = 0; s < batch; ++s) {
        Tensor e = nn::timestep_embedding(ts[s], cfg_.base_width);
        emb.insert(emb.end(), e.val().begin(), e.val().end());
    }
    Tensor t_emb = time2_(silu(time1_(Tensor::from({batch, cfg_.base_width}, std::move(emb)))));

    Tensor h0 = conv_in_(x, batch, hl, hl);
    Tensor h1 = res_enc_.forward(h0, t_emb, batch, hl, hl);
    Tensor d = down_(h1, batch, hl, hl);
    int hb = hl / 2;
    Tensor m = res_mid1_.forward(d, t_emb, batch, hb, hb);
    m = attn_(m, batch);
    m = res_mid2_.forward(m, t_emb, batch, hb, hb);
    Tensor u = up_conv_(upsample2x(m, batch, hb, hb), batch, hl, hl);
    Tensor cat = concat_cols(u, h1);
    Tensor hd = res_dec_.forward(cat, t_emb, batch, hl, hl);
    return out_conv_(silu(out_norm_(hd, batch, hl * hl)), batch, hl, hl);
}

namespace {
std::vector<double> concat_latent_channels(const State& z_t, const L2IConditionSet& cond,
                                           int hl, int cz) {
    const LatentImage* conds[4] = {&cond.masked_target, &cond.target_landmark_img,
                                   &cond.reference_img, &cond.reference_landmark_img};
    for (const auto* c : conds)
        if (c->h != hl || c->w != hl || c->c != cz)
            throw std::invalid_argument("L2I: condition latent shape mismatch");
    long n_px = static_cast<long>(hl) * hl;
    std::vector<double> x(static_cast<size_t>(n_px) * 5 * cz);
    for (long p = 0; p < n_px; ++p) {
        double* row = x.data() + p * 5 * cz;
        for (int j = 0; j < cz; ++j) row[j] = z_t[p * cz + j];
        for (int ci = 0; ci < 4; ++ci)
            for (int j = 0; j < cz; ++j)
                row[(ci + 1) * cz + j] = conds[ci]->data[p * cz + j];
    }
    return x;
}
}  // namespace

State L2IDenoiser::predict_noise(const State& z_t, int t,
                                 const L2IConditionSet& cond) const {
    int hl = cfg_.latent_size(), cz = cfg_.latent_channels();
    if (static_cast<long>(z_t.size()) != static_cast<long>(hl) * hl * cz)
        throw std::invalid_argument("L2I::predict_noise: latent size mismatch");
    NoGradGuard ng;
    Tensor x = Tensor::from({hl * hl, 5 * cz}, concat_latent_channels(z_t, cond, hl, cz));
    return forward(x, {t}, 1).val();
}

Tensor L2IDenoiser::training_loss_batch(const std::vector<LatentImage>& z0s,
                                        const std::vector<L2IConditionSet>& conds,
                                        const NoiseSchedule& sched, Rng& rng,
                                        LossNorm norm) const {
    int batch = static_cast<int>(z0s.size());
    int hl = cfg_.latent_size(), cz = cfg_.latent_channels();
    std::vector<int> ts(batch);
    std::vector<double> x_all, eps_all;
    x_all.reserve(static_cast<size_t>(batch) * hl * hl * 5 * cz);
    eps_all.reserve(static_cast<size_t>(batch) * hl * hl * cz);
    for (int i = 0; i < batch; ++i) {
        ts[i] = rng.uniform_int(sched.T);
        State eps(z0s[i].data.size());
        for (auto& e : eps) e = rng.normal();
        State z_t = q_sample(z0s[i].data, ts[i], eps, sched);
        auto xi = concat_latent_channels(z_t, conds[i], hl, cz);
        x_all.insert(x_all.end(), xi.begin(), xi.end());
        eps_all.insert(eps_all.end(), eps.begin(), eps.end());
    }
    Tensor x = Tensor::from({batch * hl * hl, 5 * cz}, std::move(x_all));
    Tensor pred = forward(x, ts, batch);
    Tensor target = Tensor::from({batch * hl * hl, cz}, std::move(eps_all));
    Tensor r = sub(pred, target);
    return mean_all(norm == LossNorm::L2 ? square(r) : abs_elems(r));
}

FaceImage L2IDenoiser::generate_frame(const L2IConditionSet& cond, const FaceImage& source,
                                      const MaskRect& mask, const LatentCodec& codec,
                                      const NoiseSchedule& sched, Rng& rng, int stride,
                                      std::vector<FaceImage>* denoise_preview,
                                      int preview_count) const {
    int hl = cfg_.latent_size(), cz = cfg_.latent_channels();
    Denoiser d = [this, &cond](const State& z_t, int t) {
        return predict_noise(z_t, t, cond);
    };
    std::function<void(int, const State&)> on_step = nullptr;
    int total_steps = sched.T / stride;
    int every = preview_count > 0 ? std::max(1, total_steps / preview_count) : 0;
    int step_counter = 0;
    if (denoise_preview && preview_count > 0) {
        on_step = [&, hl, cz](int /*t*/, const State& x) {
            if (step_counter++ % every == 0) {
                LatentImage li(hl, hl, cz);
                li.data = x;
                denoise_preview->push_back(codec.decode(li));
            }
        };
    }
    State z = sample(d, static_cast<long>(hl) * hl * cz, sched, rng, stride, on_step);
    LatentImage lat(hl, hl, cz);
    lat.data = std::move(z);
    FaceImage gen = codec.decode(lat);

    FaceImage out = source;
    for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x)
            if (mask.contains(x, y))
                for (int c = 0; c < 3; ++c)
                    out.at(y, x, c) = std::clamp(gen.at(y, x, c), 0.0, 1.0);
    return out;
}

nn::NamedParams L2IDenoiser::named_params() const {
    nn::NamedParams np;
    time1_.collect(np, "time1");
    time2_.collect(np, "time2");
    conv_in_.collect(np, "conv_in");
    res_enc_.collect(np, "res_enc");
    down_.collect(np, "down");
    res_mid1_.collect(np, "res_mid1");
    attn_.collect(np, "attn");
    res_mid2_.collect(np, "res_mid2");
    up_conv_.collect(np, "up_conv");
    res_dec_.collect(np, "res_dec");
    out_norm_.collect(np, "out_norm");
    out_conv_.collect(np, "out_conv");
    return np;
}

}  // namespace dh
