// dreamhead: audio-driven talking-head synthesis on synthetic clips.
// Subcommands: gen-data, train, infer, eval, plot.

#include "dh/config.hpp"
#include "dh/pipeline.hpp"
#include "dh/plots.hpp"
#include "dh/synthdata.hpp"

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

uint64_t default_seed() {
    if (const char* env = std::getenv("DREAMHEAD_SEED"))
        return std::strtoull(env, nullptr, 10);
    return 1;
}

dh::GeneratorConfig parse_generator_config(const std::string& path) {
    dh::GeneratorConfig cfg;
    if (path.empty()) return cfg;
    std::ifstream f(path);
    if (!f) throw std::runtime_error("gen-data: cannot open config " + path);
    json j = json::parse(f);
    const std::set<std::string> known = {
        "L", "D_a", "T_seq", "H", "fps", "seed", "audio_map_seed",
        "articulation_scale", "min_articulation", "pose_wobble", "trans_wobble",
        "scale_wobble", "audio_noise", "mouth_amp"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw std::runtime_error("gen-data: unknown config key '" + it.key() + "'");
    auto rd = [&](const char* k, auto& out) {
        if (j.contains(k)) out = j.at(k).get<std::decay_t<decltype(out)>>();
    };
    rd("L", cfg.L);
    rd("D_a", cfg.D_a);
    rd("T_seq", cfg.T_seq);
    rd("H", cfg.H);
    rd("fps", cfg.fps);
    rd("seed", cfg.seed);
    rd("audio_map_seed", cfg.audio_map_seed);
    rd("articulation_scale", cfg.articulation_scale);
    rd("min_articulation", cfg.min_articulation);
    rd("pose_wobble", cfg.pose_wobble);
    rd("trans_wobble", cfg.trans_wobble);
    rd("scale_wobble", cfg.scale_wobble);
    rd("audio_noise", cfg.audio_noise);
    rd("mouth_amp", cfg.mouth_amp);
    return cfg;
}

int cmd_gen_data(const std::string& config_path, const std::string& out_dir, int clips,
                 uint64_t seed, bool seed_given) {
    dh::GeneratorConfig base = parse_generator_config(config_path);
    if (seed_given || !config_path.empty()) {
        if (seed_given) base.seed = seed;
    } else {
        base.seed = seed;
    }
    fs::create_directories(out_dir);
    json manifest;
    manifest["clips"] = json::array();
    for (int i = 0; i < clips; ++i) {
        dh::GeneratorConfig cfg = base;
        cfg.seed = dh::mix_seed(base.seed, static_cast<uint64_t>(i));
        char name[32];
        std::snprintf(name, sizeof(name), "clip_%03d", i);
        dh::save_clip(dh::generate_clip(cfg), (fs::path(out_dir) / name).string());
        manifest["clips"].push_back(name);
        std::fprintf(stderr, "wrote %s (seed %llu)\n", name,
                     static_cast<unsigned long long>(cfg.seed));
    }
    std::ofstream mf(fs::path(out_dir) / "dataset.json");
    mf << manifest.dump(2) << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, int steps_override) {
    dh::ExperimentConfig cfg = config_path.empty() ? dh::ExperimentConfig()
                                                   : dh::ExperimentConfig::load(config_path);
    if (steps_override > 0) cfg.train.steps = steps_override;
    dh::Trainer trainer(cfg);
    trainer.load_dataset(data_dir);
    std::fprintf(stderr, "training %d steps on %zu clips\n", cfg.train.steps,
                 trainer.clips().size());
    trainer.train(out_dir);
    std::fprintf(stderr, "final checkpoint: %s\n",
                 (fs::path(out_dir) / "checkpoint.dhckpt").c_str());
    return 0;
}

int cmd_infer(const std::string& ckpt, const std::string& clip_dir,
              const std::string& audio_dir, const std::string& out_dir, int stride,
              uint64_t seed, bool single_image, const std::string& style_from,
              int preview) {
    dh::Trainer trainer = dh::Trainer::load_checkpoint(ckpt);
    dh::ClipDataset source = dh::load_clip(clip_dir);
    dh::AudioFeatureSequence driving = source.audio;
    if (!audio_dir.empty()) driving = dh::load_clip(audio_dir).audio;

    dh::InferOptions opts;
    opts.sample_stride = stride;
    opts.seed = seed;
    opts.single_image = single_image;
    opts.denoise_preview = preview;
    if (!style_from.empty()) {
        dh::ClipDataset style = dh::load_clip(style_from);
        dh::LandmarkSequence canon;
        canon.fps = style.landmarks.fps;
        for (int i = 0; i < style.length(); ++i)
            canon.frames.push_back(dh::canonicalize(style.landmarks.frames[i], style.poses[i]));
        opts.style_stats = dh::compute_stats(canon);
    }
    dh::InferResult res = dh::infer(trainer, source, driving, opts);
    dh::write_infer_output(res, out_dir, source.landmarks.fps);
    std::fprintf(stderr, "wrote %zu frames to %s\n", res.frames.size(), out_dir.c_str());
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& data_dir,
             const std::string& out_dir, int stride, const std::string& sweep_tau) {
    dh::Trainer trainer = dh::Trainer::load_checkpoint(ckpt);
    dh::EvalConfig eval_cfg = trainer.config().eval;
    eval_cfg.sample_stride = stride > 0 ? stride : eval_cfg.sample_stride;
    auto clips = dh::list_dataset_clips(data_dir);
    json report =
        dh::evaluate(trainer, clips, eval_cfg, out_dir, trainer.config().seed);
    std::fprintf(stderr, "report: %s\n", (fs::path(out_dir) / "report.json").c_str());

    if (!sweep_tau.empty()) {
        std::vector<int> taus;
        std::stringstream ss(sweep_tau);
        for (std::string tok; std::getline(ss, tok, ',');) taus.push_back(std::stoi(tok));
        dh::ExperimentConfig cfg = trainer.config();
        dh::sweep_reference_interval(cfg, data_dir, taus, out_dir);
        std::fprintf(stderr, "tau sweep: %s\n",
                     (fs::path(out_dir) / "tau_sweep.json").c_str());
    }
    return 0;
}

int cmd_plot(const std::string& report_path, const std::string& clip_dir,
             const std::string& source_dir, const std::string& log_path,
             const std::string& out_dir) {
    fs::create_directories(out_dir);
    int n_outputs = 0;

    if (!report_path.empty()) {
        std::ifstream f(report_path);
        if (!f) throw std::runtime_error("plot: cannot open report " + report_path);
        json report = json::parse(f);
        if (!report.contains("rows") || report.at("rows").empty())
            throw std::runtime_error("plot: report has no rows to plot");
        const json& rows = report.at("rows");
        std::set<std::string> keys;
        for (auto it = rows[0].begin(); it != rows[0].end(); ++it)
            if (it.value().is_number()) keys.insert(it.key());
        for (const auto& key : keys) {
            std::vector<std::pair<std::string, double>> bars;
            for (const auto& row : rows)
                if (row.contains(key))
                    bars.emplace_back(row.value("name", std::string("row")),
                                      row.at(key).get<double>());
            dh::write_bar_chart_svg((fs::path(out_dir) / ("metric_" + key + ".svg")).string(),
                                    key, bars);
            ++n_outputs;
        }
    }

    if (!clip_dir.empty()) {
        dh::InferResult res = dh::load_infer_output(clip_dir);
        std::vector<double> xs, pred_open;
        // mouth points are unknown here; use the full-frame landmark extent
        // of the lower face as the opening proxy when no source clip is given
        std::vector<int> mouth_idx;
        dh::LandmarkSequence gt;
        if (!source_dir.empty()) {
            dh::ClipDataset src = dh::load_clip(source_dir);
            mouth_idx = src.mouth_idx;
            gt = src.landmarks;
        } else {
            for (int i = 0; i < res.pred_image.landmark_count(); ++i) mouth_idx.push_back(i);
        }
        auto opening = [&](const dh::LandmarkFrame& f) {
            double y0 = 1e30, y1 = -1e30;
            for (int i : mouth_idx) {
                y0 = std::min(y0, f.points[i].y());
                y1 = std::max(y1, f.points[i].y());
            }
            return y1 - y0;
        };
        std::vector<dh::PlotSeries> series;
        for (int i = 0; i < res.pred_image.length(); ++i) {
            xs.push_back(i);
            pred_open.push_back(opening(res.pred_image.frames[i]));
        }
        series.push_back({"predicted", xs, pred_open});
        if (gt.length() > 0) {
            std::vector<double> gt_open;
            for (int i = 0; i < std::min(gt.length(), res.pred_image.length()); ++i)
                gt_open.push_back(opening(gt.frames[i]));
            std::vector<double> gxs(gt_open.size());
            for (size_t i = 0; i < gxs.size(); ++i) gxs[i] = static_cast<double>(i);
            series.push_back({"ground truth", gxs, gt_open});
        }
        dh::write_line_plot_svg((fs::path(out_dir) / "mouth_opening.svg").string(),
                                "Mouth opening", "frame", "opening (px)", series);
        ++n_outputs;

        fs::path denoise = fs::path(clip_dir) / "denoise";
        if (fs::exists(denoise)) {
            std::vector<dh::FaceImage> strip;
            std::vector<fs::path> files;
            for (const auto& e : fs::directory_iterator(denoise)) files.push_back(e.path());
            std::sort(files.begin(), files.end());
            for (const auto& p : files) strip.push_back(dh::load_png(p.string()));
            if (!strip.empty()) {
                dh::save_png(dh::hstack(strip), (fs::path(out_dir) / "denoise_strip.png").string());
                ++n_outputs;
            }
        }
    }

    if (!log_path.empty()) {
        std::ifstream f(log_path);
        if (!f) throw std::runtime_error("plot: cannot open log " + log_path);
        std::vector<double> xs, a2l, l2i, xs2;
        for (std::string line; std::getline(f, line);) {
            if (line.empty()) continue;
            json rec = json::parse(line);
            double step = rec.at("step").get<double>();
            if (rec.value("loss_a2l", -1.0) >= 0.0) {
                xs.push_back(step);
                a2l.push_back(rec.at("loss_a2l").get<double>());
            }
            if (rec.value("loss_l2i", -1.0) >= 0.0) {
                xs2.push_back(step);
                l2i.push_back(rec.at("loss_l2i").get<double>());
            }
        }
        std::vector<dh::PlotSeries> series;
        if (!xs.empty()) series.push_back({"loss_a2l", xs, a2l});
        if (!xs2.empty()) series.push_back({"loss_l2i", xs2, l2i});
        if (series.empty()) throw std::runtime_error("plot: log has no loss records");
        dh::write_line_plot_svg((fs::path(out_dir) / "loss_curves.svg").string(),
                                "Training loss", "step", "loss", series);
        ++n_outputs;
    }

    if (n_outputs == 0)
        throw std::runtime_error("plot: nothing to plot (pass --report, --clip or --log)");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dreamhead: hierarchical diffusion talking-head toolkit"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-data", "generate synthetic clips");
    std::string gen_config, gen_out;
    int gen_clips = 1;
    uint64_t gen_seed = default_seed();
    gen->add_option("--config", gen_config, "generator config JSON");
    gen->add_option("--out", gen_out, "output dataset directory")->required();
    gen->add_option("--clips", gen_clips, "number of clips");
    auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "base seed");

    auto* train = app.add_subcommand("train", "train both hierarchies");
    std::string train_config, train_data, train_out;
    int train_steps = -1;
    train->add_option("--config", train_config, "experiment config JSON");
    train->add_option("--data", train_data, "dataset directory")->required();
    train->add_option("--out", train_out, "output directory")->required();
    train->add_option("--steps", train_steps, "override training steps");

    auto* infer = app.add_subcommand("infer", "drive a source clip with audio");
    std::string inf_ckpt, inf_clip, inf_audio, inf_out, inf_style;
    int inf_stride = 1, inf_preview = 0;
    uint64_t inf_seed = default_seed();
    bool inf_single = false;
    infer->add_option("--ckpt", inf_ckpt, "checkpoint file")->required();
    infer->add_option("--clip", inf_clip, "source clip directory")->required();
    infer->add_option("--audio", inf_audio, "driving clip directory (default: source audio)");
    infer->add_option("--out", inf_out, "output directory")->required();
    infer->add_option("--stride", inf_stride, "sampling stride (1 = ancestral)");
    infer->add_option("--seed", inf_seed, "sampling seed");
    infer->add_flag("--single-image", inf_single, "use only the first source frame");
    infer->add_option("--style-from", inf_style, "clip directory providing the style variance");
    infer->add_option("--preview", inf_preview, "save N denoising previews for frame 0");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset");
    std::string eval_ckpt, eval_data, eval_out, eval_sweep;
    int eval_stride = 0;
    eval->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
    eval->add_option("--data", eval_data, "dataset directory")->required();
    eval->add_option("--out", eval_out, "output directory")->required();
    eval->add_option("--stride", eval_stride, "sampling stride override");
    eval->add_option("--sweep-tau", eval_sweep, "comma-separated tau values to sweep");

    auto* plot = app.add_subcommand("plot", "emit SVG/PNG plots");
    std::string plot_report, plot_clip, plot_source, plot_log, plot_out;
    plot->add_option("--report", plot_report, "report.json from eval");
    plot->add_option("--clip", plot_clip, "infer output directory");
    plot->add_option("--source", plot_source, "source clip directory (for overlays)");
    plot->add_option("--log", plot_log, "train_log.jsonl");
    plot->add_option("--out", plot_out, "output directory")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed())
            return cmd_gen_data(gen_config, gen_out, gen_clips, gen_seed,
                                gen_seed_opt->count() > 0);
        if (train->parsed()) return cmd_train(train_config, train_data, train_out, train_steps);
        if (infer->parsed())
            return cmd_infer(inf_ckpt, inf_clip, inf_audio, inf_out, inf_stride, inf_seed,
                             inf_single, inf_style, inf_preview);
        if (eval->parsed()) return cmd_eval(eval_ckpt, eval_data, eval_out, eval_stride, eval_sweep);
        if (plot->parsed()) return cmd_plot(plot_report, plot_clip, plot_source, plot_log, plot_out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
