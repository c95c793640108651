#pragma once

// Orchestration: simultaneous (alternating-batch) training of both
// hierarchies, the full inference procedure (canonicalize -> stats -> A2L
// windows -> denormalize -> re-pose -> rasterize -> per-frame L2I ->
// composite), checkpointing with bit-exact resume, window stitching, and
// metric evaluation.

#include "dh/a2l.hpp"
#include "dh/config.hpp"
#include "dh/l2i.hpp"
#include "dh/metrics.hpp"
#include "dh/synthdata.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace dh {

std::vector<std::string> list_dataset_clips(const std::string& data_dir);

struct StepLosses {
    double a2l = -1.0;  // -1 when that hierarchy did not train this step
    double l2i = -1.0;
};

class Trainer {
public:
    explicit Trainer(const ExperimentConfig& cfg);

    void add_clip(const ClipDataset& clip);
    void load_dataset(const std::string& data_dir);

    // one alternating training step (A2L batch then L2I batch, as enabled)
    StepLosses step_once();
    // full loop with JSONL loss log and periodic checkpoints
    void train(const std::string& out_dir);

    void save_checkpoint(const std::string& path) const;
    static Trainer load_checkpoint(const std::string& path);

    const ExperimentConfig& config() const { return cfg_; }
    A2LDenoiser& a2l() { return a2l_; }
    const A2LDenoiser& a2l() const { return a2l_; }
    L2IDenoiser& l2i() { return l2i_; }
    const L2IDenoiser& l2i() const { return l2i_; }
    const LatentCodec& codec() const { return codec_; }
    const NoiseSchedule& schedule() const { return sched_; }
    long step_count() const { return step_; }

    // per-clip derived data shared with evaluation
    struct PreparedClip {
        ClipDataset clip;
        LandmarkSequence canonical;
        NormalizationStats stats;
        LandmarkSequence normalized;
    };
    const std::vector<PreparedClip>& clips() const { return clips_; }

    // condition assembly used by both training and the tau sweep
    L2IConditionSet build_l2i_conditions(const PreparedClip& pc, int frame, int tau,
                                         ReferenceMode mode) const;

private:
    StepLosses step_impl();

    ExperimentConfig cfg_;
    NoiseSchedule sched_;
    A2LDenoiser a2l_;
    L2IDenoiser l2i_;
    LatentCodec codec_;
    nn::Adam opt_a2l_, opt_l2i_;
    Rng rng_;
    long step_ = 0;
    std::vector<PreparedClip> clips_;
};

// ---------------- window stitching ----------------

// Overlap-add of landmark windows at the given start offsets with linear
// cross-fades in the overlaps (triangular weights).
LandmarkSequence window_stitch(const std::vector<LandmarkSequence>& windows,
                               const std::vector<int>& starts, int total_len);
// uniform starts with overlap = window/4, last window aligned to the end
std::vector<int> plan_window_starts(int total_len, int window);

// ---------------- inference ----------------

// Which ground-truth landmark frames inference touched, and why. The
// conditioning list must stay empty: generated frames are conditioned only
// on predicted landmarks.
struct LandmarkAccessLog {
    bool stats_aggregate_read = false;
    std::vector<int> reference_frames_read;
    std::vector<int> conditioning_frames_read;
};

struct InferOptions {
    int sample_stride = 1;
    int mask_margin = 2;
    uint64_t seed = 0;
    int denoise_preview = 0;  // save N decoded intermediates for frame 0
    bool single_image = false;
    std::optional<NormalizationStats> style_stats;  // single-image mode style source
    L2ICondMask cond_mask;
};

struct InferResult {
    std::vector<FaceImage> frames;
    LandmarkSequence pred_canonical;  // denormalized canonical A2L output
    LandmarkSequence pred_image;      // re-posed (image space)
    std::vector<FaceImage> denoise_preview;
    LandmarkAccessLog access_log;
};

InferResult infer(const Trainer& trainer, const ClipDataset& source,
                  const AudioFeatureSequence& driving, const InferOptions& opts);

void write_infer_output(const InferResult& result, const std::string& out_dir,
                        double fps);
// reads frames + predicted landmarks back (for plotting)
InferResult load_infer_output(const std::string& out_dir);

// ---------------- evaluation ----------------

nlohmann::json evaluate(const Trainer& trainer, const std::vector<std::string>& clip_dirs,
                        const EvalConfig& eval_cfg, const std::string& out_dir,
                        uint64_t seed);

// Trains a fresh small L2I per tau value and reports metrics per row.
nlohmann::json sweep_reference_interval(const ExperimentConfig& base_cfg,
                                        const std::string& data_dir,
                                        const std::vector<int>& taus,
                                        const std::string& out_dir);

}  // namespace dh
