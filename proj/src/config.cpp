#include "dh/config.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

using nlohmann::json;

namespace dh {

NoiseSchedule ScheduleConfig::build() const {
    NoiseSchedule s = make_linear_schedule(T, beta_start, beta_end);
    if (variance == "posterior")
        s.variance = ReverseVariance::Posterior;
    else if (variance == "beta")
        s.variance = ReverseVariance::Beta;
    else
        throw std::invalid_argument("schedule.variance must be 'posterior' or 'beta'");
    return s;
}

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known,
                    const std::string& scope) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw std::invalid_argument("config: unknown key '" + scope + it.key() + "'");
}

template <typename T>
void read(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

json ExperimentConfig::to_json() const {
    json j;
    j["seed"] = seed;
    j["tau"] = tau;
    j["loss_norm"] = loss_norm;
    j["codec"] = codec;
    j["schedule"] = {{"T", schedule.T},
                     {"beta_start", schedule.beta_start},
                     {"beta_end", schedule.beta_end},
                     {"variance", schedule.variance}};
    j["a2l"] = {{"landmarks", a2l.landmarks}, {"audio_dim", a2l.audio_dim},
                {"hidden", a2l.hidden},       {"blocks", a2l.blocks},
                {"window", a2l.window},       {"kernel", a2l.kernel},
                {"residual", a2l.residual},   {"temporal_unit", a2l.temporal_unit},
                {"mapping_unit", a2l.mapping_unit}, {"diffusion", a2l.diffusion}};
    j["l2i"] = {{"image_size", l2i.image_size},
                {"factor", l2i.factor},
                {"base_width", l2i.base_width},
                {"attn_pos_embed", l2i.attn_pos_embed}};
    j["train"] = {{"steps", train.steps},
                  {"batch_a2l", train.batch_a2l},
                  {"batch_l2i", train.batch_l2i},
                  {"lr", train.lr},
                  {"train_a2l", train.train_a2l},
                  {"train_l2i", train.train_l2i},
                  {"checkpoint_every", train.checkpoint_every},
                  {"log_every", train.log_every}};
    j["eval"] = {{"sample_stride", eval.sample_stride},
                 {"mask_margin", eval.mask_margin},
                 {"ablations", eval.ablations},
                 {"tau_sweep", eval.tau_sweep}};
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
    ExperimentConfig c;
    reject_unknown(j, {"seed", "tau", "loss_norm", "codec", "schedule", "a2l", "l2i",
                       "train", "eval"},
                   "");
    read(j, "seed", c.seed);
    read(j, "tau", c.tau);
    read(j, "loss_norm", c.loss_norm);
    read(j, "codec", c.codec);
    if (c.loss_norm != "l1" && c.loss_norm != "l2")
        throw std::invalid_argument("config: loss_norm must be 'l1' or 'l2'");
    if (c.codec != "fixed" && c.codec != "learned")
        throw std::invalid_argument("config: codec must be 'fixed' or 'learned'");

    if (j.contains("schedule")) {
        const json& s = j.at("schedule");
        reject_unknown(s, {"T", "beta_start", "beta_end", "variance"}, "schedule.");
        read(s, "T", c.schedule.T);
        read(s, "beta_start", c.schedule.beta_start);
        read(s, "beta_end", c.schedule.beta_end);
        read(s, "variance", c.schedule.variance);
    }
    if (j.contains("a2l")) {
        const json& a = j.at("a2l");
        reject_unknown(a, {"landmarks", "audio_dim", "hidden", "blocks", "window",
                           "kernel", "residual", "temporal_unit", "mapping_unit",
                           "diffusion"},
                       "a2l.");
        read(a, "landmarks", c.a2l.landmarks);
        read(a, "audio_dim", c.a2l.audio_dim);
        read(a, "hidden", c.a2l.hidden);
        read(a, "blocks", c.a2l.blocks);
        read(a, "window", c.a2l.window);
        read(a, "kernel", c.a2l.kernel);
        read(a, "residual", c.a2l.residual);
        read(a, "temporal_unit", c.a2l.temporal_unit);
        read(a, "mapping_unit", c.a2l.mapping_unit);
        read(a, "diffusion", c.a2l.diffusion);
    }
    if (j.contains("l2i")) {
        const json& l = j.at("l2i");
        reject_unknown(l, {"image_size", "factor", "base_width", "attn_pos_embed"}, "l2i.");
        read(l, "image_size", c.l2i.image_size);
        read(l, "factor", c.l2i.factor);
        read(l, "base_width", c.l2i.base_width);
        read(l, "attn_pos_embed", c.l2i.attn_pos_embed);
    }
    if (j.contains("train")) {
        const json& t = j.at("train");
        reject_unknown(t, {"steps", "batch_a2l", "batch_l2i", "lr", "train_a2l",
                           "train_l2i", "checkpoint_every", "log_every"},
                       "train.");
        read(t, "steps", c.train.steps);
        read(t, "batch_a2l", c.train.batch_a2l);
        read(t, "batch_l2i", c.train.batch_l2i);
        read(t, "lr", c.train.lr);
        read(t, "train_a2l", c.train.train_a2l);
        read(t, "train_l2i", c.train.train_l2i);
        read(t, "checkpoint_every", c.train.checkpoint_every);
        read(t, "log_every", c.train.log_every);
    }
    if (j.contains("eval")) {
        const json& e = j.at("eval");
        reject_unknown(e, {"sample_stride", "mask_margin", "ablations", "tau_sweep"},
                       "eval.");
        read(e, "sample_stride", c.eval.sample_stride);
        read(e, "mask_margin", c.eval.mask_margin);
        read(e, "ablations", c.eval.ablations);
        read(e, "tau_sweep", c.eval.tau_sweep);
    }
    for (const auto& name : c.eval.ablations) cond_mask_for_ablation(name);  // validate
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("config: cannot open " + path);
    return from_json(json::parse(f));
}

L2ICondMask cond_mask_for_ablation(const std::string& name) {
    L2ICondMask m;
    if (name == "full") return m;
    if (name == "no_ref_lm") {  // w/o reference landmark image
        m.reference_landmarks = false;
        return m;
    }
    if (name == "no_ref_pair") {  // w/o reference landmark image and reference image
        m.reference_landmarks = false;
        m.reference = false;
        return m;
    }
    if (name == "no_reflm_masked") {  // w/o reference landmark image and masked target
        m.reference_landmarks = false;
        m.masked_target = false;
        return m;
    }
    if (name == "unconditional") {
        m.masked_target = m.target_landmarks = m.reference = m.reference_landmarks = false;
        return m;
    }
    throw std::invalid_argument("config: unknown ablation '" + name + "'");
}

}  // namespace dh
