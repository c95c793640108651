#include "dh/pipeline.hpp"

#include "dh/checkpoint.hpp"
#include "dh/plots.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace fs = std::filesystem;
using nlohmann::json;

namespace dh {

namespace {

constexpr uint64_t kA2LInitTag = 0xA21;
constexpr uint64_t kL2IInitTag = 0x121;
constexpr uint64_t kTrainTag = 0x77A117;
constexpr uint64_t kWindowTag = 0x5717C4;
constexpr uint64_t kFrameTag = 0xF4A3E;
constexpr uint64_t kStyleTag = 0x51;

FaceImage apply_rect_zero(const FaceImage& img, const MaskRect& r) {
    FaceImage out = img;
    for (int y = r.y0; y < r.y1; ++y)
        for (int x = r.x0; x < r.x1; ++x)
            for (int c = 0; c < 3; ++c) out.at(y, x, c) = 0.0;
    return out;
}

std::string frame_name(int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06d.png", i);
    return buf;
}

void write_floats(const std::string& path, const std::vector<float>& data) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path);
    f.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
}

std::vector<float> landmarks_to_floats(const LandmarkSequence& seq) {
    std::vector<float> v;
    v.reserve(static_cast<size_t>(seq.length()) * seq.landmark_count() * 3);
    for (const auto& f : seq.frames)
        for (const auto& p : f.points) {
            v.push_back(static_cast<float>(p.x()));
            v.push_back(static_cast<float>(p.y()));
            v.push_back(static_cast<float>(p.z()));
        }
    return v;
}

}  // namespace

std::vector<std::string> list_dataset_clips(const std::string& data_dir) {
    fs::path manifest = fs::path(data_dir) / "dataset.json";
    std::vector<std::string> out;
    if (fs::exists(manifest)) {
        std::ifstream f(manifest);
        json j = json::parse(f);
        for (const auto& name : j.at("clips"))
            out.push_back((fs::path(data_dir) / name.get<std::string>()).string());
        return out;
    }
    for (const auto& e : fs::directory_iterator(data_dir))
        if (e.is_directory() && fs::exists(e.path() / "manifest.json"))
            out.push_back(e.path().string());
    std::sort(out.begin(), out.end());
    return out;
}

// ---------------- Trainer ----------------

Trainer::Trainer(const ExperimentConfig& cfg) : cfg_(cfg) {
    sched_ = cfg.schedule.build();
    Rng a2l_rng(mix_seed(cfg.seed, kA2LInitTag));
    a2l_ = A2LDenoiser(cfg.a2l, a2l_rng);
    Rng l2i_rng(mix_seed(cfg.seed, kL2IInitTag));
    l2i_ = L2IDenoiser(cfg.l2i, l2i_rng);
    codec_ = LatentCodec(cfg.l2i.factor,
                         cfg.codec == "learned" ? CodecMode::Learned : CodecMode::Fixed);
    rng_ = Rng(mix_seed(cfg.seed, kTrainTag));
    auto pa = a2l_.params();
    opt_a2l_.lr = cfg.train.lr;
    opt_a2l_.init(pa);
    auto pl = l2i_.params();
    opt_l2i_.lr = cfg.train.lr;
    opt_l2i_.init(pl);
}

void Trainer::add_clip(const ClipDataset& clip) {
    if (clip.landmarks.landmark_count() != cfg_.a2l.landmarks)
        throw std::invalid_argument("Trainer: clip landmark count does not match config");
    if (clip.audio.dim() != cfg_.a2l.audio_dim)
        throw std::invalid_argument("Trainer: clip audio dim does not match config");
    if (cfg_.train.train_l2i && clip.image_size != cfg_.l2i.image_size)
        throw std::invalid_argument("Trainer: clip image size does not match config");
    PreparedClip pc;
    pc.clip = clip;
    pc.canonical.fps = clip.landmarks.fps;
    for (int i = 0; i < clip.length(); ++i)
        pc.canonical.frames.push_back(
            canonicalize(clip.landmarks.frames[i], clip.poses[i]));
    pc.stats = compute_stats(pc.canonical);
    pc.normalized = normalize_sequence(pc.canonical, pc.stats);
    clips_.push_back(std::move(pc));
}

void Trainer::load_dataset(const std::string& data_dir) {
    for (const auto& dir : list_dataset_clips(data_dir)) add_clip(load_clip(dir));
    if (clips_.empty())
        throw std::runtime_error("Trainer: no clips found in " + data_dir);
}

L2IConditionSet Trainer::build_l2i_conditions(const PreparedClip& pc, int frame, int tau,
                                              ReferenceMode mode) const {
    const ClipDataset& clip = pc.clip;
    Camera cam;  // landmarks are already in pixel coordinates
    const LandmarkFrame& target_lm = clip.landmarks.frames[frame];

    L2IConditionSet cond;
    cond.masked_target = codec_.encode(
        mask_mouth_region(clip.images[frame], target_lm, cfg_.eval.mask_margin));
    cond.target_landmark_img = codec_.encode(
        rasterize_landmarks(target_lm, cam, clip.image_size, clip.mouth_idx));
    auto [ref_img, ref_lm] =
        select_reference(clip.images, clip.landmarks, frame, tau, mode);
    cond.reference_img = codec_.encode(ref_img);
    cond.reference_landmark_img = codec_.encode(
        rasterize_landmarks(ref_lm, cam, clip.image_size, clip.mouth_idx));
    return cond;
}

StepLosses Trainer::step_impl() {
    StepLosses losses;
    int n_clips = static_cast<int>(clips_.size());
    if (n_clips == 0) throw std::runtime_error("Trainer: dataset is empty");

    if (cfg_.train.train_a2l) {
        int l = cfg_.a2l.window;
        std::vector<State> x0s;
        std::vector<A2LConditionSet> conds;
        for (int b = 0; b < cfg_.train.batch_a2l; ++b) {
            const PreparedClip& pc = clips_[rng_.uniform_int(n_clips)];
            int T = pc.clip.length();
            if (T < l)
                throw std::runtime_error("Trainer: clip shorter than the A2L window");
            int start = rng_.uniform_int(T - l + 1);
            State x0;
            x0.reserve(static_cast<size_t>(l) * cfg_.a2l.state_dim());
            A2LConditionSet cond;
            for (int i = 0; i < l; ++i) {
                auto flat = pc.normalized.frames[start + i].flatten();
                x0.insert(x0.end(), flat.begin(), flat.end());
                cond.audio.push_back(pc.clip.audio.features[start + i]);
            }
            LandmarkFrame mean;
            mean.points = pc.stats.mean;
            cond.mean_landmarks = std::move(mean);
            x0s.push_back(std::move(x0));
            conds.push_back(std::move(cond));
        }
        Tensor loss =
            cfg_.a2l.diffusion
                ? a2l_.training_loss_batch(x0s, conds, sched_, rng_, cfg_.norm())
                : a2l_.regression_loss_batch(x0s, conds, cfg_.norm());
        auto params = a2l_.params();
        opt_a2l_.zero_grad(params);
        backward(loss);
        opt_a2l_.step(params);
        losses.a2l = loss.val()[0];
    }

    if (cfg_.train.train_l2i) {
        std::vector<LatentImage> z0s;
        std::vector<L2IConditionSet> conds;
        for (int b = 0; b < cfg_.train.batch_l2i; ++b) {
            const PreparedClip& pc = clips_[rng_.uniform_int(n_clips)];
            int frame = rng_.uniform_int(pc.clip.length());
            z0s.push_back(codec_.encode(pc.clip.images[frame]));
            conds.push_back(
                build_l2i_conditions(pc, frame, cfg_.tau, ReferenceMode::Train));
        }
        Tensor loss = l2i_.training_loss_batch(z0s, conds, sched_, rng_, cfg_.norm());
        auto params = l2i_.params();
        opt_l2i_.zero_grad(params);
        backward(loss);
        opt_l2i_.step(params);
        losses.l2i = loss.val()[0];
    }

    if ((losses.a2l >= 0.0 && !std::isfinite(losses.a2l)) ||
        (losses.l2i >= 0.0 && !std::isfinite(losses.l2i)))
        throw std::runtime_error("Trainer: non-finite loss at step " + std::to_string(step_) +
                                 " (a2l=" + std::to_string(losses.a2l) +
                                 ", l2i=" + std::to_string(losses.l2i) + ")");
    ++step_;
    return losses;
}

StepLosses Trainer::step_once() { return step_impl(); }

void Trainer::train(const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream log(fs::path(out_dir) / "train_log.jsonl", std::ios::app);
    auto start_time = std::chrono::steady_clock::now();
    for (int s = 0; s < cfg_.train.steps; ++s) {
        StepLosses losses = step_impl();
        if (cfg_.train.log_every > 0 &&
            (step_ % cfg_.train.log_every == 0 || s + 1 == cfg_.train.steps)) {
            auto now = std::chrono::steady_clock::now();
            json rec;
            rec["step"] = step_;
            rec["loss_a2l"] = losses.a2l;
            rec["loss_l2i"] = losses.l2i;
            rec["wall_ms"] =
                std::chrono::duration_cast<std::chrono::milliseconds>(now - start_time)
                    .count();
            log << rec.dump() << "\n";
            log.flush();
        }
        if (cfg_.train.checkpoint_every > 0 && step_ % cfg_.train.checkpoint_every == 0) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "ckpt_%06ld.dhckpt", step_);
            save_checkpoint((fs::path(out_dir) / buf).string());
        }
    }
    save_checkpoint((fs::path(out_dir) / "checkpoint.dhckpt").string());
}

void Trainer::save_checkpoint(const std::string& path) const {
    Archive a;
    json cfg_json = cfg_.to_json();
    a.config["experiment"] = cfg_json;
    a.config["config_hash"] = json_hash(cfg_json);
    a.config["step"] = step_;
    a.config["adam_a2l_steps"] = opt_a2l_.step_count;
    a.config["adam_l2i_steps"] = opt_l2i_.step_count;
    a.config["rng"] = rng_.state();

    auto dump_model = [&a](const nn::NamedParams& np, const std::string& prefix) {
        for (const auto& [name, t] : np)
            a.add(prefix + ":" + name, t.shape(), t.val());
    };
    dump_model(a2l_.named_params(), "a2l");
    dump_model(l2i_.named_params(), "l2i");
    dump_model(codec_.named_params(), "codec");

    auto dump_adam = [&a](const nn::Adam& opt, const nn::NamedParams& np,
                          const std::string& prefix) {
        for (size_t i = 0; i < np.size(); ++i) {
            a.add(prefix + ":m:" + np[i].first, np[i].second.shape(), opt.m[i]);
            a.add(prefix + ":v:" + np[i].first, np[i].second.shape(), opt.v[i]);
        }
    };
    dump_adam(opt_a2l_, a2l_.named_params(), "adam_a2l");
    dump_adam(opt_l2i_, l2i_.named_params(), "adam_l2i");
    a.save(path);
}

Trainer Trainer::load_checkpoint(const std::string& path) {
    Archive a = Archive::load(path);
    ExperimentConfig cfg = ExperimentConfig::from_json(a.config.at("experiment"));
    Trainer t(cfg);
    t.step_ = a.config.at("step").get<long>();
    t.opt_a2l_.step_count = a.config.at("adam_a2l_steps").get<long>();
    t.opt_l2i_.step_count = a.config.at("adam_l2i_steps").get<long>();
    auto rng_state = a.config.at("rng").get<std::array<uint64_t, 4>>();
    t.rng_.set_state(rng_state);

    auto load_model = [&a](nn::NamedParams np, const std::string& prefix) {
        for (auto& [name, tensor] : np) {
            const ArrayEntry& e = a.get(prefix + ":" + name);
            if (e.data.size() != tensor.val().size())
                throw std::runtime_error("checkpoint: size mismatch for " + name);
            tensor.val() = e.data;
        }
    };
    load_model(t.a2l_.named_params(), "a2l");
    load_model(t.l2i_.named_params(), "l2i");
    auto codec_np = t.codec_.named_params();
    if (!codec_np.empty()) load_model(codec_np, "codec");

    auto load_adam = [&a](nn::Adam& opt, const nn::NamedParams& np,
                          const std::string& prefix) {
        for (size_t i = 0; i < np.size(); ++i) {
            opt.m[i] = a.get(prefix + ":m:" + np[i].first).data;
            opt.v[i] = a.get(prefix + ":v:" + np[i].first).data;
        }
    };
    load_adam(t.opt_a2l_, t.a2l_.named_params(), "adam_a2l");
    load_adam(t.opt_l2i_, t.l2i_.named_params(), "adam_l2i");
    return t;
}

// ---------------- window stitching ----------------

std::vector<int> plan_window_starts(int total_len, int window) {
    if (total_len <= window) return {0};
    int overlap = std::max(1, window / 4);
    int stride = window - overlap;
    std::vector<int> starts;
    for (int s = 0; s + window < total_len; s += stride) starts.push_back(s);
    starts.push_back(total_len - window);
    return starts;
}

LandmarkSequence window_stitch(const std::vector<LandmarkSequence>& windows,
                               const std::vector<int>& starts, int total_len) {
    if (windows.empty() || windows.size() != starts.size())
        throw std::invalid_argument("window_stitch: need one start per window");
    int n_lm = windows[0].landmark_count();
    int w_len = windows[0].length();
    for (const auto& w : windows)
        if (w.length() != w_len || w.landmark_count() != n_lm)
            throw std::invalid_argument("window_stitch: inconsistent window shapes");

    LandmarkSequence out;
    out.fps = windows[0].fps;
    out.frames.resize(total_len);
    for (auto& f : out.frames) f.points.assign(n_lm, Vec3::Zero());
    std::vector<double> weight(total_len, 0.0);

    for (size_t k = 0; k < windows.size(); ++k) {
        for (int j = 0; j < w_len; ++j) {
            int idx = starts[k] + j;
            if (idx < 0 || idx >= total_len) continue;
            // triangular weight -> linear cross-fade in uniform overlaps
            double w = std::min(j + 1, w_len - j);
            for (int i = 0; i < n_lm; ++i)
                out.frames[idx].points[i] += w * windows[k].frames[j].points[i];
            weight[idx] += w;
        }
    }
    for (int idx = 0; idx < total_len; ++idx) {
        if (weight[idx] <= 0.0)
            throw std::invalid_argument("window_stitch: uncovered output frame " +
                                        std::to_string(idx));
        for (int i = 0; i < n_lm; ++i) out.frames[idx].points[i] /= weight[idx];
    }
    return out;
}

// ---------------- inference ----------------

InferResult infer(const Trainer& trainer, const ClipDataset& source,
                  const AudioFeatureSequence& driving, const InferOptions& opts) {
    const ExperimentConfig& cfg = trainer.config();
    const NoiseSchedule& sched = trainer.schedule();
    int l = cfg.a2l.window;
    int T_out = driving.length();
    if (T_out < 1) throw std::invalid_argument("infer: empty driving audio");
    if (driving.dim() != cfg.a2l.audio_dim)
        throw std::invalid_argument("infer: driving audio dim does not match model");
    if (source.length() < 1) throw std::invalid_argument("infer: empty source clip");

    InferResult res;
    LandmarkAccessLog& log = res.access_log;
    int src_len = opts.single_image ? 1 : source.length();
    auto src_index = [&](int i) { return i % src_len; };

    // every ground-truth landmark read goes through one of these two paths
    auto gt_reference_frame = [&](int i) -> const LandmarkFrame& {
        log.reference_frames_read.push_back(i);
        return source.landmarks.frames[i];
    };
    auto gt_stats = [&]() -> NormalizationStats {
        log.stats_aggregate_read = true;
        LandmarkSequence canon;
        canon.fps = source.landmarks.fps;
        for (int i = 0; i < src_len; ++i)
            canon.frames.push_back(
                canonicalize(source.landmarks.frames[i], source.poses[i]));
        NormalizationStats st = compute_stats(canon);
        if (opts.single_image) {
            if (opts.style_stats) {
                st.stddev = opts.style_stats->stddev;
            } else {
                // no temporal statistics from one frame: random style deviation
                Rng style_rng(mix_seed(opts.seed, kStyleTag));
                for (auto& s : st.stddev)
                    for (int c = 0; c < 3; ++c)
                        s[c] = 0.005 + 0.045 * style_rng.uniform();
            }
        }
        return st;
    };

    NormalizationStats stats = gt_stats();

    // A2L over successive windows; audio shorter than one window is
    // left-padded by repeating the first feature row
    std::vector<std::vector<double>> audio = driving.features;
    int pad = 0;
    if (T_out < l) {
        pad = l - T_out;
        audio.insert(audio.begin(), pad, audio.front());
    }
    int padded_len = static_cast<int>(audio.size());
    std::vector<int> starts = plan_window_starts(padded_len, l);
    std::vector<LandmarkSequence> windows;
    LandmarkFrame mean_frame;
    mean_frame.points = stats.mean;
    for (size_t k = 0; k < starts.size(); ++k) {
        A2LConditionSet cond;
        cond.mean_landmarks = mean_frame;
        for (int j = 0; j < l; ++j) cond.audio.push_back(audio[starts[k] + j]);
        Rng wrng(mix_seed(opts.seed, kWindowTag + k));
        windows.push_back(trainer.a2l().generate_landmarks(
            cond, sched, wrng, opts.sample_stride, source.landmarks.fps));
    }
    LandmarkSequence normalized = window_stitch(windows, starts, padded_len);
    if (pad > 0)
        normalized.frames.erase(normalized.frames.begin(), normalized.frames.begin() + pad);

    res.pred_canonical = denormalize_sequence(normalized, stats);

    // re-pose with the stored matrices
    res.pred_image.fps = source.landmarks.fps;
    for (int i = 0; i < T_out; ++i)
        res.pred_image.frames.push_back(
            apply_pose(res.pred_canonical.frames[i], source.poses[src_index(i)]));

    // frame-by-frame L2I, conditioned only on predicted landmarks plus the
    // first-frame reference pair
    Camera cam;
    int H = source.image_size;
    const FaceImage& ref_img = source.images[0];
    FaceImage ref_lm_img =
        rasterize_landmarks(gt_reference_frame(0), cam, H, source.mouth_idx);
    LatentImage ref_lat = trainer.codec().encode(ref_img);
    LatentImage ref_lm_lat = trainer.codec().encode(ref_lm_img);

    for (int i = 0; i < T_out; ++i) {
        const FaceImage& src_img = source.images[src_index(i)];
        const LandmarkFrame& pred_lm = res.pred_image.frames[i];
        MaskRect rect = mouth_mask_rect(pred_lm, H, H, opts.mask_margin);

        L2IConditionSet cond;
        cond.masked_target = trainer.codec().encode(apply_rect_zero(src_img, rect));
        cond.target_landmark_img = trainer.codec().encode(
            rasterize_landmarks(pred_lm, cam, H, source.mouth_idx));
        cond.reference_img = ref_lat;
        cond.reference_landmark_img = ref_lm_lat;
        apply_cond_mask(cond, opts.cond_mask);

        Rng frng(mix_seed(opts.seed, kFrameTag + i));
        std::vector<FaceImage>* preview =
            (i == 0 && opts.denoise_preview > 0) ? &res.denoise_preview : nullptr;
        res.frames.push_back(trainer.l2i().generate_frame(
            cond, src_img, rect, trainer.codec(), sched, frng, opts.sample_stride,
            preview, opts.denoise_preview));
    }
    return res;
}

void write_infer_output(const InferResult& result, const std::string& out_dir,
                        double fps) {
    fs::create_directories(fs::path(out_dir) / "frames");
    for (size_t i = 0; i < result.frames.size(); ++i)
        save_png(result.frames[i],
                 (fs::path(out_dir) / "frames" / frame_name(static_cast<int>(i))).string());
    json manifest;
    manifest["fps"] = fps;
    manifest["frame_count"] = result.frames.size();
    manifest["L"] = result.pred_image.landmark_count();
    std::ofstream mf(fs::path(out_dir) / "manifest.json");
    mf << manifest.dump(2) << "\n";
    write_floats((fs::path(out_dir) / "landmarks_pred.bin").string(),
                 landmarks_to_floats(result.pred_image));
    write_floats((fs::path(out_dir) / "landmarks_canon.bin").string(),
                 landmarks_to_floats(result.pred_canonical));
    if (!result.denoise_preview.empty()) {
        fs::create_directories(fs::path(out_dir) / "denoise");
        for (size_t i = 0; i < result.denoise_preview.size(); ++i)
            save_png(result.denoise_preview[i],
                     (fs::path(out_dir) / "denoise" / frame_name(static_cast<int>(i)))
                         .string());
    }
}

InferResult load_infer_output(const std::string& out_dir) {
    std::ifstream mf(fs::path(out_dir) / "manifest.json");
    if (!mf) throw std::runtime_error("load_infer_output: missing manifest in " + out_dir);
    json manifest = json::parse(mf);
    int T = manifest.at("frame_count").get<int>();
    int L = manifest.at("L").get<int>();
    double fps = manifest.at("fps").get<double>();

    InferResult res;
    for (int i = 0; i < T; ++i)
        res.frames.push_back(load_png((fs::path(out_dir) / "frames" / frame_name(i)).string()));
    auto read_seq = [&](const std::string& file) {
        std::ifstream f(fs::path(out_dir) / file, std::ios::binary | std::ios::ate);
        if (!f) throw std::runtime_error("load_infer_output: missing " + file);
        size_t bytes = static_cast<size_t>(f.tellg());
        f.seekg(0);
        std::vector<float> data(bytes / sizeof(float));
        f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
        LandmarkSequence seq;
        seq.fps = fps;
        for (int i = 0; i < T; ++i) {
            LandmarkFrame fr;
            for (int j = 0; j < L; ++j) {
                size_t o = (static_cast<size_t>(i) * L + j) * 3;
                fr.points.emplace_back(data[o], data[o + 1], data[o + 2]);
            }
            seq.frames.push_back(std::move(fr));
        }
        return seq;
    };
    res.pred_image = read_seq("landmarks_pred.bin");
    res.pred_canonical = read_seq("landmarks_canon.bin");
    return res;
}

// ---------------- evaluation ----------------

namespace {

double mouth_opening(const LandmarkFrame& f, const std::vector<int>& mouth_idx) {
    double y0 = 1e30, y1 = -1e30;
    for (int i : mouth_idx) {
        y0 = std::min(y0, f.points[i].y());
        y1 = std::max(y1, f.points[i].y());
    }
    return y1 - y0;
}

json clip_metrics(const Trainer& trainer, const Trainer::PreparedClip& pc,
                  const InferResult& res) {
    const ClipDataset& clip = pc.clip;
    json m;
    m["lmd"] = lmd(res.pred_image, clip.landmarks, clip.mouth_idx);
    m["lmd_v"] = lmd_v(res.pred_image, clip.landmarks, clip.mouth_idx);
    m["ma_landmarks"] = mouth_iou(res.pred_image, clip.landmarks, clip.mouth_idx);
    double iou = 0.0;
    for (int i = 0; i < clip.length(); ++i)
        iou += mask_iou(mouth_pixel_mask(res.frames[i]), mouth_pixel_mask(clip.images[i]));
    m["ma"] = iou / clip.length();
    m["error_norm"] = error_norm(res.pred_canonical, pc.canonical);
    m["jitter"] = jitter(res.pred_canonical);
    m["frame_consistency"] = frame_consistency(res.frames);
    (void)trainer;
    return m;
}

}  // namespace

json evaluate(const Trainer& trainer, const std::vector<std::string>& clip_dirs,
              const EvalConfig& eval_cfg, const std::string& out_dir, uint64_t seed) {
    if (clip_dirs.empty()) throw std::invalid_argument("evaluate: no clips");
    fs::create_directories(out_dir);

    std::vector<Trainer::PreparedClip> prepared;
    for (const auto& dir : clip_dirs) {
        Trainer::PreparedClip pc;
        pc.clip = load_clip(dir);
        pc.canonical.fps = pc.clip.landmarks.fps;
        for (int i = 0; i < pc.clip.length(); ++i)
            pc.canonical.frames.push_back(
                canonicalize(pc.clip.landmarks.frames[i], pc.clip.poses[i]));
        pc.stats = compute_stats(pc.canonical);
        prepared.push_back(std::move(pc));
    }

    json rows = json::array();
    json top;
    for (const auto& ablation : eval_cfg.ablations) {
        L2ICondMask mask = cond_mask_for_ablation(ablation);
        json agg = json::object();
        int n = 0;
        for (size_t ci = 0; ci < prepared.size(); ++ci) {
            const auto& pc = prepared[ci];
            InferOptions opts;
            opts.sample_stride = eval_cfg.sample_stride;
            opts.mask_margin = eval_cfg.mask_margin;
            opts.seed = mix_seed(seed, ci);
            opts.cond_mask = mask;
            InferResult res = infer(trainer, pc.clip, pc.clip.audio, opts);
            json m = clip_metrics(trainer, pc, res);
            for (auto it = m.begin(); it != m.end(); ++it) {
                double v = it.value().get<double>();
                agg[it.key()] = agg.value(it.key(), 0.0) + v;
            }
            ++n;
            if (ablation == "full") {
                // mouth-opening overlay for the first clips
                std::vector<double> xs, pred_open, gt_open;
                for (int i = 0; i < pc.clip.length(); ++i) {
                    xs.push_back(i);
                    pred_open.push_back(
                        mouth_opening(res.pred_image.frames[i], pc.clip.mouth_idx));
                    gt_open.push_back(
                        mouth_opening(pc.clip.landmarks.frames[i], pc.clip.mouth_idx));
                }
                write_line_plot_svg(
                    (fs::path(out_dir) / ("mouth_opening_clip" + std::to_string(ci) + ".svg"))
                        .string(),
                    "Mouth opening, clip " + std::to_string(ci), "frame", "opening (px)",
                    {{"predicted", xs, pred_open}, {"ground truth", xs, gt_open}});
            }
        }
        json row;
        row["name"] = ablation;
        for (auto it = agg.begin(); it != agg.end(); ++it)
            row[it.key()] = it.value().get<double>() / n;
        rows.push_back(row);
        if (ablation == "full") top = row;
    }
    if (top.is_null() && !rows.empty()) top = rows[0];

    json report = top;
    report.erase("name");
    report["rows"] = rows;
    report["clips"] = clip_dirs.size();

    std::ofstream jf(fs::path(out_dir) / "report.json");
    jf << report.dump(2) << "\n";
    std::ofstream tf(fs::path(out_dir) / "report.txt");
    for (const auto& row : rows) {
        tf << row.at("name").get<std::string>() << "\n";
        for (auto it = row.begin(); it != row.end(); ++it)
            if (it.key() != "name")
                tf << "  " << it.key() << " = " << it.value().dump() << "\n";
    }
    return report;
}

json sweep_reference_interval(const ExperimentConfig& base_cfg, const std::string& data_dir,
                              const std::vector<int>& taus, const std::string& out_dir) {
    if (taus.empty()) throw std::invalid_argument("sweep_reference_interval: no taus");
    fs::create_directories(out_dir);
    json rows = json::array();
    for (int tau : taus) {
        ExperimentConfig cfg = base_cfg;
        cfg.tau = tau;
        cfg.train.train_a2l = false;  // the sweep isolates the L2I reference interval
        Trainer t(cfg);
        t.load_dataset(data_dir);
        for (int s = 0; s < cfg.train.steps; ++s) t.step_once();

        // reconstruction quality on a few frames per clip, first-frame reference
        double iou = 0.0, fc = 0.0;
        int n = 0;
        for (const auto& pc : t.clips()) {
            std::vector<FaceImage> gen;
            int T = pc.clip.length();
            for (int k = 0; k < 4; ++k) {
                int frame = (k * std::max(1, T / 4)) % T;
                L2IConditionSet cond =
                    t.build_l2i_conditions(pc, frame, tau, ReferenceMode::Infer);
                MaskRect rect = mouth_mask_rect(pc.clip.landmarks.frames[frame],
                                                pc.clip.image_size, pc.clip.image_size,
                                                cfg.eval.mask_margin);
                Rng rng(mix_seed(cfg.seed, 0xBEEF + frame));
                FaceImage out = t.l2i().generate_frame(
                    cond, pc.clip.images[frame], rect, t.codec(), t.schedule(), rng,
                    cfg.eval.sample_stride);
                iou += mask_iou(mouth_pixel_mask(out), mouth_pixel_mask(pc.clip.images[frame]));
                gen.push_back(std::move(out));
                ++n;
            }
            fc += frame_consistency(gen);
        }
        json row;
        row["tau"] = tau;
        row["ma"] = iou / n;
        row["frame_consistency"] = fc / static_cast<double>(t.clips().size());
        rows.push_back(row);
    }
    json report;
    report["rows"] = rows;
    std::ofstream jf(fs::path(out_dir) / "tau_sweep.json");
    jf << report.dump(2) << "\n";
    return report;
}

}  // namespace dh
