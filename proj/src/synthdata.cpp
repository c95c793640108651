#include "dh/synthdata.hpp"

#include "dh/rng.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

namespace fs = std::filesystem;
using nlohmann::json;

namespace dh {

namespace {

// palette
constexpr Rgb kBackground{0.06, 0.08, 0.10};
constexpr Rgb kSkin{0.78, 0.62, 0.50};
constexpr Rgb kEye{0.12, 0.12, 0.16};
constexpr Rgb kBrow{0.30, 0.22, 0.16};
constexpr Rgb kNose{0.72, 0.58, 0.46};
constexpr Rgb kMouthFill{0.50, 0.10, 0.12};
constexpr Rgb kLip{0.62, 0.26, 0.28};

// articulation signal: three incommensurate sinusoids
constexpr double kArtFreqHz[3] = {0.83, 1.57, 2.71};
constexpr double kArtAmp[3] = {0.5, 0.3, 0.2};

}  // namespace

TemplateLayout template_layout(int L) {
    if (L < 36) throw std::invalid_argument("template_layout: generator requires L >= 36");
    TemplateLayout t;
    t.n_oval = L - 30;
    t.eyes_begin = t.n_oval;
    t.brows_begin = t.eyes_begin + 8;
    t.nose_begin = t.brows_begin + 6;
    t.mouth_begin = t.nose_begin + 4;
    return t;
}

namespace {

// Canonical face template; only the lower lip arc depends on the
// articulation value, so non-mouth points are constant across frames.
LandmarkFrame template_frame(int L, double art, double mouth_amp) {
    TemplateLayout lay = template_layout(L);
    LandmarkFrame f;
    f.points.resize(L);
    for (int i = 0; i < lay.n_oval; ++i) {
        double th = 2.0 * M_PI * i / lay.n_oval - M_PI / 2.0;
        f.points[i] = Vec3(0.80 * std::cos(th), 1.00 * std::sin(th), 0.0);
    }
    for (int e = 0; e < 2; ++e) {
        double cx = e == 0 ? -0.34 : 0.34;
        for (int k = 0; k < 4; ++k) {
            double th = k * M_PI / 2.0;
            f.points[lay.eyes_begin + e * 4 + k] =
                Vec3(cx + 0.09 * std::cos(th), -0.30 + 0.09 * std::sin(th), 0.02);
        }
    }
    for (int e = 0; e < 2; ++e) {
        double cx = e == 0 ? -0.34 : 0.34;
        for (int k = 0; k < 3; ++k)
            f.points[lay.brows_begin + e * 3 + k] =
                Vec3(cx + 0.12 * (k - 1), -0.50, 0.03);
    }
    f.points[lay.nose_begin + 0] = Vec3(0.00, -0.12, 0.10);
    f.points[lay.nose_begin + 1] = Vec3(0.00, 0.02, 0.12);
    f.points[lay.nose_begin + 2] = Vec3(-0.06, 0.10, 0.06);
    f.points[lay.nose_begin + 3] = Vec3(0.06, 0.10, 0.06);

    double gap = 0.02 + mouth_amp * art;
    for (int i = 0; i < 6; ++i) {
        double u = i / 5.0;
        f.points[lay.mouth_begin + i] =
            Vec3(-0.32 + 0.64 * u, 0.48 - 0.06 * std::sin(M_PI * u), 0.04);
    }
    for (int i = 0; i < 6; ++i) {
        double u = i / 5.0;
        f.points[lay.mouth_begin + 6 + i] =
            Vec3(0.32 - 0.64 * u, 0.48 + gap + 0.10 * std::sin(M_PI * u), 0.04);
    }
    return f;
}

struct Wobble {
    double freq, phase;
    double eval(double t_sec) const { return std::sin(2.0 * M_PI * freq * t_sec + phase); }
};

Wobble draw_wobble(Rng& rng) {
    return {0.15 + 0.35 * rng.uniform(), 2.0 * M_PI * rng.uniform()};
}

std::vector<std::array<double, 2>> project_loop(const LandmarkFrame& f, int begin, int n) {
    std::vector<std::array<double, 2>> poly;
    poly.reserve(n);
    for (int i = 0; i < n; ++i)
        poly.push_back({f.points[begin + i].x(), f.points[begin + i].y()});
    return poly;
}

FaceImage render_face(const LandmarkFrame& img_lm, const TemplateLayout& lay, int H) {
    FaceImage img(H, H);
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < H; ++x)
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = kBackground[c];

    fill_polygon(img, project_loop(img_lm, 0, lay.n_oval), kSkin);
    for (int e = 0; e < 2; ++e)
        fill_polygon(img, project_loop(img_lm, lay.eyes_begin + e * 4, 4), kEye);
    double dot_r = std::max(0.8, H / 80.0);
    for (int k = 0; k < 6; ++k) {
        const auto& p = img_lm.points[lay.brows_begin + k];
        fill_disc(img, p.x(), p.y(), dot_r, kBrow);
    }
    for (int k = 0; k < 4; ++k) {
        const auto& p = img_lm.points[lay.nose_begin + k];
        fill_disc(img, p.x(), p.y(), dot_r, kNose);
    }
    fill_polygon(img, project_loop(img_lm, lay.mouth_begin, 12), kMouthFill);
    for (int k = 0; k < 12; ++k) {
        const auto& p = img_lm.points[lay.mouth_begin + k];
        fill_disc(img, p.x(), p.y(), dot_r, kLip);
    }
    return img;
}

}  // namespace

ClipDataset generate_clip(const GeneratorConfig& cfg) {
    if (cfg.T_seq < 1 || cfg.H < 8 || cfg.D_a < 2 || cfg.fps <= 0.0)
        throw std::invalid_argument("generate_clip: invalid config");
    TemplateLayout lay = template_layout(cfg.L);

    Rng rng(cfg.seed);
    double phase[3];
    for (auto& p : phase) p = 2.0 * M_PI * rng.uniform();
    Wobble yaw = draw_wobble(rng), pitch = draw_wobble(rng), roll = draw_wobble(rng);
    Wobble wtx = draw_wobble(rng), wty = draw_wobble(rng), wsc = draw_wobble(rng);

    // articulation trajectory
    std::vector<double> art(cfg.T_seq);
    for (int k = 0; k < cfg.T_seq; ++k) {
        double t_sec = k / cfg.fps;
        double raw = 0.5;
        for (int j = 0; j < 3; ++j)
            raw += 0.5 * kArtAmp[j] * std::sin(2.0 * M_PI * kArtFreqHz[j] * t_sec + phase[j]);
        raw = std::clamp(raw, 0.0, 1.0);
        art[k] = std::clamp(
            cfg.min_articulation + (1.0 - cfg.min_articulation) * cfg.articulation_scale * raw,
            0.0, 1.0);
    }

    // audio features: fixed linear map of [articulation, articulation'] shared
    // across clips through audio_map_seed, plus small observation noise
    Rng map_rng(cfg.audio_map_seed);
    std::vector<double> map_a(cfg.D_a), map_d(cfg.D_a);
    for (auto& v : map_a) v = map_rng.normal();
    for (auto& v : map_d) v = map_rng.normal();

    ClipDataset clip;
    clip.seed = cfg.seed;
    clip.image_size = cfg.H;
    clip.articulation = art;
    clip.audio.fps = cfg.fps;
    clip.audio.features.resize(cfg.T_seq, std::vector<double>(cfg.D_a, 0.0));
    for (int k = 0; k < cfg.T_seq; ++k) {
        double prev = art[std::max(0, k - 1)];
        double next = art[std::min(cfg.T_seq - 1, k + 1)];
        double dart = (next - prev) / 2.0;
        for (int d = 0; d < cfg.D_a; ++d)
            clip.audio.features[k][d] = map_a[d] * (art[k] - 0.5) * 2.0 +
                                        map_d[d] * dart * 4.0 +
                                        cfg.audio_noise * rng.normal();
    }

    for (int m = 0; m < 12; ++m) clip.mouth_idx.push_back(lay.mouth_begin + m);

    clip.landmarks.fps = cfg.fps;
    double base_scale = 0.42 * cfg.H;
    for (int k = 0; k < cfg.T_seq; ++k) {
        double t_sec = k / cfg.fps;
        RigidPose pose;
        double ry = cfg.pose_wobble * yaw.eval(t_sec);
        double rx = cfg.pose_wobble * pitch.eval(t_sec);
        double rz = cfg.pose_wobble * roll.eval(t_sec);
        Mat3 Rx, Ry, Rz;
        Rx << 1, 0, 0, 0, std::cos(rx), -std::sin(rx), 0, std::sin(rx), std::cos(rx);
        Ry << std::cos(ry), 0, std::sin(ry), 0, 1, 0, -std::sin(ry), 0, std::cos(ry);
        Rz << std::cos(rz), -std::sin(rz), 0, std::sin(rz), std::cos(rz), 0, 0, 0, 1;
        pose.rotation = Rz * Ry * Rx;
        pose.translation = Vec3(cfg.H / 2.0 + cfg.trans_wobble * wtx.eval(t_sec),
                                cfg.H / 2.0 + cfg.trans_wobble * wty.eval(t_sec), 0.0);
        pose.scale = base_scale * (1.0 + cfg.scale_wobble * wsc.eval(t_sec));
        clip.poses.push_back(pose);

        LandmarkFrame canon = template_frame(cfg.L, art[k], cfg.mouth_amp);
        LandmarkFrame img_lm = apply_pose(canon, pose);
        clip.landmarks.frames.push_back(img_lm);
        clip.images.push_back(render_face(img_lm, lay, cfg.H));
    }
    return clip;
}

std::vector<std::array<double, 2>> mouth_polygon(const LandmarkFrame& frame,
                                                 const std::vector<int>& mouth_idx) {
    std::vector<std::array<double, 2>> poly;
    poly.reserve(mouth_idx.size());
    for (int idx : mouth_idx)
        poly.push_back({frame.points[idx].x(), frame.points[idx].y()});
    return poly;
}

bool is_mouth_pixel(double r, double g, double b) {
    return r >= 0.30 && (r - g) >= 0.18 && (r - b) >= 0.18;
}

std::vector<uint8_t> mouth_pixel_mask(const FaceImage& img) {
    std::vector<uint8_t> mask(static_cast<size_t>(img.h) * img.w, 0);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x)
            mask[static_cast<size_t>(y) * img.w + x] =
                is_mouth_pixel(img.at(y, x, 0), img.at(y, x, 1), img.at(y, x, 2)) ? 1 : 0;
    return mask;
}

std::vector<uint8_t> mouth_mask_from_landmarks(const LandmarkFrame& frame,
                                               const std::vector<int>& mouth_idx,
                                               int h, int w) {
    auto poly = mouth_polygon(frame, mouth_idx);
    std::vector<uint8_t> mask(static_cast<size_t>(h) * w, 0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            if (point_in_polygon(x + 0.5, y + 0.5, poly))
                mask[static_cast<size_t>(y) * w + x] = 1;
    return mask;
}

// ---------------- persistence ----------------

namespace {

void write_floats(const std::string& path, const std::vector<float>& data) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("save_clip: cannot write " + path);
    f.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(float)));
}

std::vector<float> read_floats(const std::string& path, size_t expected,
                               const std::string& field) {
    std::ifstream f(path, std::ios::binary | std::ios::ate);
    if (!f) throw std::runtime_error("load_clip: missing file " + path);
    auto bytes = static_cast<size_t>(f.tellg());
    if (bytes != expected * sizeof(float))
        throw std::runtime_error("load_clip: " + field + " size mismatch (got " +
                                 std::to_string(bytes / sizeof(float)) + " floats, expected " +
                                 std::to_string(expected) + ")");
    f.seekg(0);
    std::vector<float> data(expected);
    f.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(bytes));
    return data;
}

std::string frame_name(int i) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%06d.png", i);
    return buf;
}

}  // namespace

void save_clip(const ClipDataset& clip, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "frames");
    int T = clip.length();
    int L = clip.landmarks.landmark_count();
    int Da = clip.audio.dim();

    json manifest;
    manifest["format"] = "dh-clip-v1";
    manifest["T_seq"] = T;
    manifest["L"] = L;
    manifest["D_a"] = Da;
    manifest["H"] = clip.image_size;
    manifest["fps"] = clip.landmarks.fps;
    manifest["seed"] = clip.seed;
    manifest["mouth_idx"] = clip.mouth_idx;
    std::ofstream mf(fs::path(dir) / "manifest.json");
    mf << manifest.dump(2) << "\n";

    std::vector<float> lm;
    lm.reserve(static_cast<size_t>(T) * L * 3);
    for (const auto& f : clip.landmarks.frames)
        for (const auto& p : f.points) {
            lm.push_back(static_cast<float>(p.x()));
            lm.push_back(static_cast<float>(p.y()));
            lm.push_back(static_cast<float>(p.z()));
        }
    write_floats((fs::path(dir) / "landmarks.bin").string(), lm);

    std::vector<float> au;
    au.reserve(static_cast<size_t>(T) * Da);
    for (const auto& row : clip.audio.features)
        for (double v : row) au.push_back(static_cast<float>(v));
    write_floats((fs::path(dir) / "audio.bin").string(), au);

    std::vector<float> po;
    po.reserve(static_cast<size_t>(T) * 13);
    for (const auto& p : clip.poses) {
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) po.push_back(static_cast<float>(p.rotation(r, c)));
        for (int c = 0; c < 3; ++c) po.push_back(static_cast<float>(p.translation[c]));
        po.push_back(static_cast<float>(p.scale));
    }
    write_floats((fs::path(dir) / "poses.bin").string(), po);

    std::vector<float> ar(clip.articulation.begin(), clip.articulation.end());
    write_floats((fs::path(dir) / "articulation.bin").string(), ar);

    for (int i = 0; i < T; ++i)
        save_png(clip.images[i], (fs::path(dir) / "frames" / frame_name(i)).string());
}

ClipDataset load_clip(const std::string& dir) {
    std::ifstream mf(fs::path(dir) / "manifest.json");
    if (!mf) throw std::runtime_error("load_clip: missing manifest.json in " + dir);
    json manifest = json::parse(mf);

    ClipDataset clip;
    int T = manifest.at("T_seq").get<int>();
    int L = manifest.at("L").get<int>();
    int Da = manifest.at("D_a").get<int>();
    clip.image_size = manifest.at("H").get<int>();
    double fps = manifest.at("fps").get<double>();
    clip.seed = manifest.at("seed").get<uint64_t>();
    clip.mouth_idx = manifest.at("mouth_idx").get<std::vector<int>>();
    for (int idx : clip.mouth_idx)
        if (idx < 0 || idx >= L)
            throw std::runtime_error("load_clip: mouth_idx out of range in manifest");

    auto lm = read_floats((fs::path(dir) / "landmarks.bin").string(),
                          static_cast<size_t>(T) * L * 3, "landmarks.bin");
    clip.landmarks.fps = fps;
    for (int i = 0; i < T; ++i) {
        LandmarkFrame f;
        f.points.reserve(L);
        for (int j = 0; j < L; ++j) {
            size_t o = (static_cast<size_t>(i) * L + j) * 3;
            f.points.emplace_back(lm[o], lm[o + 1], lm[o + 2]);
        }
        clip.landmarks.frames.push_back(std::move(f));
    }

    auto au = read_floats((fs::path(dir) / "audio.bin").string(),
                          static_cast<size_t>(T) * Da, "audio.bin");
    clip.audio.fps = fps;
    clip.audio.features.resize(T, std::vector<double>(Da, 0.0));
    for (int i = 0; i < T; ++i)
        for (int d = 0; d < Da; ++d)
            clip.audio.features[i][d] = au[static_cast<size_t>(i) * Da + d];

    auto po = read_floats((fs::path(dir) / "poses.bin").string(),
                          static_cast<size_t>(T) * 13, "poses.bin");
    for (int i = 0; i < T; ++i) {
        RigidPose p;
        size_t o = static_cast<size_t>(i) * 13;
        for (int r = 0; r < 3; ++r)
            for (int c = 0; c < 3; ++c) p.rotation(r, c) = po[o + r * 3 + c];
        for (int c = 0; c < 3; ++c) p.translation[c] = po[o + 9 + c];
        p.scale = po[o + 12];
        clip.poses.push_back(p);
    }

    auto arp = fs::path(dir) / "articulation.bin";
    if (fs::exists(arp)) {
        auto ar = read_floats(arp.string(), static_cast<size_t>(T), "articulation.bin");
        clip.articulation.assign(ar.begin(), ar.end());
    }

    for (int i = 0; i < T; ++i)
        clip.images.push_back(load_png((fs::path(dir) / "frames" / frame_name(i)).string()));
    return clip;
}

}  // namespace dh
