#pragma once

// Experiment configuration: JSON-backed, validated on load (unknown keys are
// errors), with defaults mirroring the documented desk-scale setup.

#include "dh/a2l.hpp"
#include "dh/ddpm.hpp"
#include "dh/l2i.hpp"

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace dh {

struct ScheduleConfig {
    int T = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    std::string variance = "posterior";  // or "beta"

    NoiseSchedule build() const;
};

struct TrainConfig {
    int steps = 2000;
    int batch_a2l = 16;
    int batch_l2i = 8;
    double lr = 1e-4;
    bool train_a2l = true;
    bool train_l2i = true;
    int checkpoint_every = 500;
    int log_every = 25;
};

struct EvalConfig {
    int sample_stride = 1;
    int mask_margin = 2;
    std::vector<std::string> ablations = {"full"};
    std::vector<int> tau_sweep;  // empty = no sweep
};

struct ExperimentConfig {
    uint64_t seed = 1;
    int tau = 20;
    std::string loss_norm = "l2";  // or "l1"
    ScheduleConfig schedule;
    A2LConfig a2l;
    L2IConfig l2i;
    std::string codec = "fixed";  // or "learned"
    TrainConfig train;
    EvalConfig eval;

    LossNorm norm() const { return loss_norm == "l1" ? LossNorm::L1 : LossNorm::L2; }

    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::string& path);
};

// Table-5-style ablation names -> condition masks. Recognized names:
// full, no_ref_lm, no_ref_pair, no_reflm_masked, unconditional.
L2ICondMask cond_mask_for_ablation(const std::string& name);

}  // namespace dh
