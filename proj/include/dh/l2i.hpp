#pragma once

// Landmark-to-image hierarchy: rasterizes landmark frames into condition
// images, encodes images into a latent space with an invertible patch
// transform (or an optional small learned per-patch autoencoder), and
// denoises latents with a compact U-shaped network carrying one self
// attention stage at the bottleneck. Conditions are channel-concatenated
// with the noisy latent.

#include "dh/ddpm.hpp"
#include "dh/geometry.hpp"
#include "dh/image.hpp"
#include "dh/nn.hpp"

#include <vector>

namespace dh {

// orthographic projection: pixel = scale * (x, y) + offset
struct Camera {
    double scale = 1.0;
    double offset_x = 0.0;
    double offset_y = 0.0;
};

struct RasterizeStats {
    int clipped_points = 0;
};

// Points land as filled discs; mouth points go to channel 2, the rest to
// channel 1 (single-channel drawing when mouth_idx is empty). Out-of-canvas
// points are skipped and counted.
FaceImage rasterize_landmarks(const LandmarkFrame& frame, const Camera& camera, int size,
                              const std::vector<int>& mouth_idx, double radius = -1.0,
                              RasterizeStats* stats = nullptr);

// half-open pixel rectangle [x0,x1) x [y0,y1)
struct MaskRect {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;
    bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
    long area() const { return static_cast<long>(x1 - x0) * (y1 - y0); }
};

// Lower half of the landmark bounding box dilated by margin pixels; falls
// back to the image's full lower half for degenerate boxes.
MaskRect mouth_mask_rect(const LandmarkFrame& frame, int h, int w, int margin = 2);
FaceImage mask_mouth_region(const FaceImage& img, const LandmarkFrame& frame,
                            int margin = 2);

struct LatentImage {
    int h = 0, w = 0, c = 0;
    std::vector<double> data;  // row-major (h, w, c)

    LatentImage() = default;
    LatentImage(int h_, int w_, int c_)
        : h(h_), w(w_), c(c_), data(static_cast<size_t>(h_) * w_ * c_, 0.0) {}
    long size() const { return static_cast<long>(h) * w * c; }
};

enum class CodecMode { Fixed, Learned };

// f x f x 3 patches become one latent pixel with 3*f*f channels. Fixed mode
// is the shifted/scaled space-to-depth bijection; learned mode adds a
// trainable per-patch linear map on top.
class LatentCodec {
public:
    LatentCodec() = default;
    explicit LatentCodec(int factor, CodecMode mode = CodecMode::Fixed);

    int factor() const { return f_; }
    int channels() const { return 3 * f_ * f_; }
    CodecMode mode() const { return mode_; }

    LatentImage encode(const FaceImage& img) const;
    FaceImage decode(const LatentImage& lat) const;

    // learned mode: fit the per-patch maps to a reconstruction objective
    double train_reconstruction(const std::vector<FaceImage>& images, int steps,
                                double lr, Rng& rng);
    nn::NamedParams named_params() const;

private:
    int f_ = 4;
    CodecMode mode_ = CodecMode::Fixed;
    Tensor We_, be_, Wd_, bd_;  // learned mode only
};

struct L2IConditionSet {
    LatentImage masked_target;            // z_i^m
    LatentImage target_landmark_img;      // z_i^P
    LatentImage reference_img;            // z_r
    LatentImage reference_landmark_img;   // z_r^P
};

// Table-5-style conditioning ablations: zeroing a condition's latent
// channels with the architecture unchanged.
struct L2ICondMask {
    bool masked_target = true;
    bool target_landmarks = true;
    bool reference = true;
    bool reference_landmarks = true;
};
void apply_cond_mask(L2IConditionSet& cond, const L2ICondMask& mask);

// train-mode reference is frame max(i - tau, 0); infer mode always frame 0
enum class ReferenceMode { Train, Infer };
std::pair<FaceImage, LandmarkFrame> select_reference(
    const std::vector<FaceImage>& images, const LandmarkSequence& landmarks, int i,
    int tau, ReferenceMode mode);

struct L2IConfig {
    int image_size = 64;
    int factor = 4;
    int base_width = 32;
    bool attn_pos_embed = true;

    int latent_size() const { return image_size / factor; }
    int latent_channels() const { return 3 * factor * factor; }
    int emb_dim() const { return base_width * 4; }
};

class L2IDenoiser {
public:
    L2IDenoiser() = default;
    L2IDenoiser(const L2IConfig& cfg, Rng& rng);

    const L2IConfig& config() const { return cfg_; }

    // x is [B*h*w, 5*Cz] (noisy latent + 4 conditions channel-concatenated)
    Tensor forward(const Tensor& x, const std::vector<int>& ts, int batch) const;

    State predict_noise(const State& z_t, int t, const L2IConditionSet& cond) const;

    Tensor training_loss_batch(const std::vector<LatentImage>& z0s,
                               const std::vector<L2IConditionSet>& conds,
                               const NoiseSchedule& sched, Rng& rng,
                               LossNorm norm = LossNorm::L2) const;

    // Samples a latent, decodes it, and composites: generated pixels inside
    // the mask, source pixels outside.
    FaceImage generate_frame(const L2IConditionSet& cond, const FaceImage& source,
                             const MaskRect& mask, const LatentCodec& codec,
                             const NoiseSchedule& sched, Rng& rng, int stride = 1,
                             std::vector<FaceImage>* denoise_preview = nullptr,
                             int preview_count = 0) const;

    const nn::SelfAttention& attention() const { return attn_; }

    nn::NamedParams named_params() const;
    std::vector<Tensor> params() const { return nn::values(named_params()); }

private:
    struct ResBlock {
        nn::GroupNorm gn1, gn2;
        nn::Conv2d conv1, conv2, skip;
        nn::Linear t_proj;
        bool has_skip = false;
        Tensor forward(const Tensor& x, const Tensor& emb, int batch, int h, int w) const;
        void collect(nn::NamedParams& out, const std::string& prefix) const;
    };
    ResBlock make_resblock(int cin, int cout, Rng& rng) const;

    L2IConfig cfg_;
    nn::Linear time1_, time2_;
    nn::Conv2d conv_in_, down_, up_conv_, out_conv_;
    ResBlock res_enc_, res_mid1_, res_mid2_, res_dec_;
    nn::SelfAttention attn_;
    nn::GroupNorm out_norm_;
};

}  // namespace dh
