#include "dh/pipeline.hpp"

#include "dh/metrics.hpp"
#include "dh/rng.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>

using namespace dh;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// tiny end-to-end config: 16x16 images, 6-frame windows, 20-step schedule
ExperimentConfig tiny_cfg(uint64_t seed = 1) {
    ExperimentConfig cfg;
    cfg.seed = seed;
    cfg.tau = 4;
    cfg.schedule.T = 20;
    cfg.schedule.beta_start = 1e-3;
    cfg.schedule.beta_end = 0.1;
    cfg.a2l.landmarks = 68;
    cfg.a2l.audio_dim = 6;
    cfg.a2l.hidden = 16;
    cfg.a2l.blocks = 2;
    cfg.a2l.window = 6;
    cfg.l2i.image_size = 16;
    cfg.l2i.base_width = 8;
    cfg.train.steps = 2;
    cfg.train.batch_a2l = 2;
    cfg.train.batch_l2i = 2;
    cfg.train.lr = 1e-3;
    cfg.train.checkpoint_every = 0;
    cfg.train.log_every = 1;
    cfg.eval.sample_stride = 10;
    return cfg;
}

GeneratorConfig tiny_clip_cfg(uint64_t seed) {
    GeneratorConfig g;
    g.T_seq = 12;
    g.H = 16;
    g.D_a = 6;
    g.seed = seed;
    return g;
}

std::vector<double> flatten_params(const nn::NamedParams& np) {
    std::vector<double> out;
    for (const auto& [name, t] : np)
        out.insert(out.end(), t.val().begin(), t.val().end());
    return out;
}

fs::path temp_dir(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("dh_pipe_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("config: unknown keys and bad values are rejected") {
    json good = tiny_cfg().to_json();
    CHECK_NOTHROW(ExperimentConfig::from_json(good));

    json bad1 = good;
    bad1["typo_key"] = 1;
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad1), std::invalid_argument);

    json bad2 = good;
    bad2["a2l"]["extra"] = true;
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad2), std::invalid_argument);

    json bad3 = good;
    bad3["schedule"]["variance"] = "sometimes";
    CHECK_THROWS(ExperimentConfig::from_json(bad3).schedule.build());

    json bad4 = good;
    bad4["loss_norm"] = "l3";
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad4), std::invalid_argument);

    json bad5 = good;
    bad5["eval"]["ablations"] = {"full", "nonsense"};
    CHECK_THROWS_AS(ExperimentConfig::from_json(bad5), std::invalid_argument);

    // round trip preserves values
    ExperimentConfig c = ExperimentConfig::from_json(good);
    CHECK(c.to_json() == good);
}

TEST_CASE("window_stitch: passthrough, constants, boundary jitter") {
    Rng rng(1);
    LandmarkSequence w1;
    for (int i = 0; i < 6; ++i) {
        LandmarkFrame f;
        f.points.emplace_back(rng.normal(), rng.normal(), rng.normal());
        w1.frames.push_back(f);
    }
    // single window: exact passthrough
    LandmarkSequence out = window_stitch({w1}, {0}, 6);
    for (int i = 0; i < 6; ++i)
        CHECK((out.frames[i].points[0] - w1.frames[i].points[0]).norm() < 1e-12);

    // identical constant windows cross-fade to the same constant
    LandmarkSequence cw;
    for (int i = 0; i < 6; ++i) {
        LandmarkFrame f;
        f.points.emplace_back(2.0, -1.0, 0.5);
        cw.frames.push_back(f);
    }
    LandmarkSequence stitched = window_stitch({cw, cw}, {0, 4}, 10);
    CHECK(stitched.length() == 10);
    for (int i = 0; i < 10; ++i)
        CHECK((stitched.frames[i].points[0] - Vec3(2.0, -1.0, 0.5)).norm() < 1e-12);
    // jitter of the stitched constant result stays at the per-window level
    CHECK(jitter(stitched) <= jitter(cw) + 1e-6);

    // two stitches of the same input agree exactly
    LandmarkSequence again = window_stitch({cw, cw}, {0, 4}, 10);
    for (int i = 0; i < 10; ++i)
        CHECK(stitched.frames[i].points[0] == again.frames[i].points[0]);

    CHECK_THROWS_AS(window_stitch({}, {}, 5), std::invalid_argument);
    CHECK_THROWS_AS(window_stitch({cw}, {0}, 12), std::invalid_argument);  // gap
}

TEST_CASE("plan_window_starts covers the range and ends flush") {
    auto starts = plan_window_starts(20, 6);
    CHECK(starts.front() == 0);
    CHECK(starts.back() == 14);
    for (size_t i = 1; i < starts.size(); ++i)
        CHECK(starts[i] - starts[i - 1] <= 6);  // no gaps
    CHECK(plan_window_starts(4, 6) == std::vector<int>{0});
    CHECK(plan_window_starts(6, 6) == std::vector<int>{0});
}

TEST_CASE("one training step is deterministic across fresh trainers") {
    ClipDataset clip = generate_clip(tiny_clip_cfg(11));
    Trainer t1(tiny_cfg(5)), t2(tiny_cfg(5));
    t1.add_clip(clip);
    t2.add_clip(clip);
    StepLosses l1 = t1.step_once();
    StepLosses l2 = t2.step_once();
    CHECK(l1.a2l == l2.a2l);
    CHECK(l1.l2i == l2.l2i);
    CHECK(flatten_params(t1.a2l().named_params()) ==
          flatten_params(t2.a2l().named_params()));
    CHECK(flatten_params(t1.l2i().named_params()) ==
          flatten_params(t2.l2i().named_params()));
}

TEST_CASE("loss after a few steps drops below the first step's loss") {
    ClipDataset clip = generate_clip(tiny_clip_cfg(13));
    ExperimentConfig cfg = tiny_cfg(7);
    cfg.train.batch_a2l = 4;
    cfg.train.batch_l2i = 2;
    Trainer t(cfg);
    t.add_clip(clip);
    double first_a2l = -1, first_l2i = -1;
    double last_a2l = -1, last_l2i = -1;
    for (int s = 0; s < 60; ++s) {
        StepLosses l = t.step_once();
        if (s == 0) {
            first_a2l = l.a2l;
            first_l2i = l.l2i;
        }
        last_a2l = l.a2l;
        last_l2i = l.l2i;
    }
    CHECK(last_a2l < first_a2l);
    CHECK(last_l2i < first_l2i);
}

TEST_CASE("disabling A2L batches freezes A2L and trains L2I") {
    ClipDataset clip = generate_clip(tiny_clip_cfg(17));
    ExperimentConfig cfg = tiny_cfg(9);
    cfg.train.train_a2l = false;
    Trainer t(cfg);
    t.add_clip(clip);
    auto a2l_before = flatten_params(t.a2l().named_params());
    auto l2i_before = flatten_params(t.l2i().named_params());
    StepLosses l = t.step_once();
    CHECK(l.a2l == -1.0);
    CHECK(l.l2i >= 0.0);
    CHECK(flatten_params(t.a2l().named_params()) == a2l_before);
    CHECK(flatten_params(t.l2i().named_params()) != l2i_before);
}

TEST_CASE("checkpoint round-trip: save/load/one-step equals continue/one-step") {
    fs::path dir = temp_dir("ckpt");
    ClipDataset clip = generate_clip(tiny_clip_cfg(19));

    Trainer t1(tiny_cfg(21));
    t1.add_clip(clip);
    for (int s = 0; s < 3; ++s) t1.step_once();
    std::string ckpt = (dir / "mid.dhckpt").string();
    t1.save_checkpoint(ckpt);
    t1.step_once();  // continue without reload

    Trainer t2 = Trainer::load_checkpoint(ckpt);
    t2.add_clip(clip);
    CHECK(t2.step_count() == 3);
    t2.step_once();

    CHECK(flatten_params(t1.a2l().named_params()) ==
          flatten_params(t2.a2l().named_params()));
    CHECK(flatten_params(t1.l2i().named_params()) ==
          flatten_params(t2.l2i().named_params()));
    fs::remove_all(dir);
}

TEST_CASE("train() writes logs and a final checkpoint") {
    fs::path dir = temp_dir("trainout");
    ClipDataset clip = generate_clip(tiny_clip_cfg(23));
    ExperimentConfig cfg = tiny_cfg(23);
    cfg.train.steps = 3;
    Trainer t(cfg);
    t.add_clip(clip);
    t.train(dir.string());
    CHECK(fs::exists(dir / "checkpoint.dhckpt"));
    std::ifstream log(dir / "train_log.jsonl");
    std::string line;
    int lines = 0;
    while (std::getline(log, line))
        if (!line.empty()) {
            json rec = json::parse(line);
            CHECK(rec.contains("step"));
            CHECK(rec.contains("loss_a2l"));
            CHECK(rec.contains("loss_l2i"));
            CHECK(rec.contains("wall_ms"));
            ++lines;
        }
    CHECK(lines >= 3);
    fs::remove_all(dir);
}

TEST_CASE("infer: frame count, compositing, determinism, audit log") {
    ClipDataset clip = generate_clip(tiny_clip_cfg(29));
    ExperimentConfig cfg = tiny_cfg(31);
    Trainer t(cfg);
    t.add_clip(clip);
    t.step_once();

    InferOptions opts;
    opts.sample_stride = 10;
    opts.seed = 99;
    InferResult res = infer(t, clip, clip.audio, opts);

    CHECK(static_cast<int>(res.frames.size()) == clip.audio.length());
    CHECK(res.pred_image.length() == clip.audio.length());

    // unmasked pixels equal the source frame pixels bit-exactly
    for (int i = 0; i < clip.length(); ++i) {
        MaskRect rect = mouth_mask_rect(res.pred_image.frames[i], 16, 16, opts.mask_margin);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x)
                if (!rect.contains(x, y))
                    for (int c = 0; c < 3; ++c)
                        CHECK(res.frames[i].at(y, x, c) == clip.images[i].at(y, x, c));
    }

    InferResult res2 = infer(t, clip, clip.audio, opts);
    for (size_t i = 0; i < res.frames.size(); ++i)
        CHECK(res.frames[i].pix == res2.frames[i].pix);

    // no ground-truth driven-frame landmarks consumed for conditioning
    CHECK(res.access_log.conditioning_frames_read.empty());
    CHECK(res.access_log.stats_aggregate_read);
    for (int f : res.access_log.reference_frames_read) CHECK(f == 0);
}

TEST_CASE("infer: audio shorter than one window pads by repetition") {
    ClipDataset clip = generate_clip(tiny_clip_cfg(37));
    Trainer t(tiny_cfg(37));
    t.add_clip(clip);
    t.step_once();

    AudioFeatureSequence short_audio;
    short_audio.fps = clip.audio.fps;
    for (int i = 0; i < 3; ++i) short_audio.features.push_back(clip.audio.features[i]);

    InferOptions opts;
    opts.sample_stride = 10;
    InferResult res = infer(t, clip, short_audio, opts);
    CHECK(res.frames.size() == 3);
    CHECK(res.pred_image.length() == 3);
}

TEST_CASE("infer: single-image source mode produces valid output") {
    ClipDataset clip = generate_clip(tiny_clip_cfg(41));
    Trainer t(tiny_cfg(41));
    t.add_clip(clip);
    t.step_once();

    InferOptions opts;
    opts.sample_stride = 10;
    opts.single_image = true;
    InferResult res = infer(t, clip, clip.audio, opts);
    CHECK(static_cast<int>(res.frames.size()) == clip.audio.length());
    for (const auto& f : res.frames)
        for (double v : f.pix) CHECK(std::isfinite(v));

    // with style stats from another clip
    ClipDataset style = generate_clip(tiny_clip_cfg(43));
    LandmarkSequence canon;
    for (int i = 0; i < style.length(); ++i)
        canon.frames.push_back(canonicalize(style.landmarks.frames[i], style.poses[i]));
    opts.style_stats = compute_stats(canon);
    InferResult res2 = infer(t, clip, clip.audio, opts);
    CHECK(res2.frames.size() == res.frames.size());
}

TEST_CASE("write/load infer output round-trips landmarks and frame count") {
    fs::path dir = temp_dir("inferout");
    ClipDataset clip = generate_clip(tiny_clip_cfg(47));
    Trainer t(tiny_cfg(47));
    t.add_clip(clip);
    InferOptions opts;
    opts.sample_stride = 10;
    InferResult res = infer(t, clip, clip.audio, opts);
    write_infer_output(res, dir.string(), clip.landmarks.fps);
    InferResult back = load_infer_output(dir.string());
    CHECK(back.frames.size() == res.frames.size());
    CHECK(back.pred_image.length() == res.pred_image.length());
    CHECK((back.pred_image.frames[2].points[5] - res.pred_image.frames[2].points[5]).norm() <
          1e-4);
    fs::remove_all(dir);
}

TEST_CASE("evaluate: report schema with one row per ablation") {
    fs::path data = temp_dir("evaldata");
    fs::path out = temp_dir("evalout");
    ClipDataset clip = generate_clip(tiny_clip_cfg(53));
    save_clip(clip, (data / "clip_000").string());
    json dm;
    dm["clips"] = {"clip_000"};
    std::ofstream(data / "dataset.json") << dm.dump();

    ExperimentConfig cfg = tiny_cfg(53);
    Trainer t(cfg);
    t.add_clip(clip);
    t.step_once();

    EvalConfig ecfg = cfg.eval;
    ecfg.ablations = {"full", "no_ref_pair", "unconditional"};
    json report = evaluate(t, {(data / "clip_000").string()}, ecfg, out.string(), 7);

    CHECK(report.at("rows").size() == 3);
    for (const char* key :
         {"lmd", "lmd_v", "ma", "error_norm", "jitter", "frame_consistency"})
        CHECK(report.contains(key));
    CHECK(fs::exists(out / "report.json"));
    CHECK(fs::exists(out / "report.txt"));
    fs::remove_all(data);
    fs::remove_all(out);
}

TEST_CASE("dataset helpers: listing and mismatch validation") {
    fs::path data = temp_dir("listdata");
    ClipDataset clip = generate_clip(tiny_clip_cfg(59));
    save_clip(clip, (data / "clip_000").string());
    save_clip(clip, (data / "clip_001").string());
    json dm;
    dm["clips"] = {"clip_000", "clip_001"};
    std::ofstream(data / "dataset.json") << dm.dump();
    auto clips = list_dataset_clips(data.string());
    CHECK(clips.size() == 2);

    // config mismatch: wrong audio dim
    ExperimentConfig cfg = tiny_cfg(59);
    cfg.a2l.audio_dim = 5;
    Trainer t(cfg);
    CHECK_THROWS_AS(t.add_clip(clip), std::invalid_argument);
    fs::remove_all(data);
}
