#include "dh/a2l.hpp"

#include "dh/rng.hpp"
#include "test_util.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>

using namespace dh;

namespace {

std::map<std::string, Tensor> by_name(const A2LDenoiser& m) {
    std::map<std::string, Tensor> out;
    for (const auto& [name, t] : m.named_params()) out[name] = t;
    return out;
}

void zero_all(const A2LDenoiser& m) {
    for (auto [name, t] : m.named_params())
        std::fill(t.val().begin(), t.val().end(), 0.0);
}

A2LConfig tiny_cfg() {
    A2LConfig cfg;
    cfg.landmarks = 5;
    cfg.audio_dim = 3;
    cfg.hidden = 8;
    cfg.blocks = 2;
    cfg.window = 4;
    return cfg;
}

A2LConditionSet random_cond(const A2LConfig& cfg, Rng& rng) {
    A2LConditionSet cond;
    for (int i = 0; i < cfg.window; ++i) {
        std::vector<double> row(cfg.audio_dim);
        for (auto& v : row) v = rng.normal();
        cond.audio.push_back(row);
    }
    for (int i = 0; i < cfg.landmarks; ++i)
        cond.mean_landmarks.points.emplace_back(rng.normal(), rng.normal(), rng.normal());
    return cond;
}

}  // namespace

TEST_CASE("fuse_conditions: all-zero parameters give a zero l x D_h output") {
    Rng rng(1);
    A2LConfig cfg = tiny_cfg();
    A2LDenoiser m(cfg, rng);
    zero_all(m);
    Tensor x = Tensor::zeros({cfg.window, cfg.state_dim()});
    for (auto& v : x.val()) v = rng.normal();
    Tensor audio = Tensor::zeros({cfg.window, cfg.audio_dim});
    for (auto& v : audio.val()) v = rng.normal();
    Tensor pbar = Tensor::zeros({1, cfg.state_dim()});
    Tensor out = m.fuse_conditions(x, {3}, audio, pbar, 1);
    CHECK(out.rows() == cfg.window);
    CHECK(out.cols() == cfg.hidden);
    for (double v : out.val()) CHECK(v == 0.0);
}

TEST_CASE("fuse_conditions: with only f_audio nonzero the fusion is the audio term") {
    Rng rng(2);
    A2LConfig cfg = tiny_cfg();
    A2LDenoiser m(cfg, rng);
    auto np = by_name(m);
    // keep f_audio of the freshly initialized model, zero the other branches
    std::vector<double> aw = np["f_audio.W"].val();
    std::vector<double> ab = np["f_audio.b"].val();
    zero_all(m);
    np["f_audio.W"].val() = aw;
    np["f_audio.b"].val() = ab;

    Tensor x = Tensor::zeros({cfg.window, cfg.state_dim()});
    Tensor audio = Tensor::zeros({cfg.window, cfg.audio_dim});
    for (auto& v : audio.val()) v = rng.normal();
    Tensor pbar = Tensor::zeros({1, cfg.state_dim()});
    for (auto& v : pbar.val()) v = rng.normal();

    Tensor fused = m.fuse_conditions(x, {7}, audio, pbar, 1);
    Tensor expected = linear(audio, np["f_audio.W"], np["f_audio.b"]);
    for (long i = 0; i < fused.size(); ++i)
        CHECK(fused.val()[i] == doctest::Approx(expected.val()[i]).epsilon(1e-12));
}

// Hand-evaluated fusion for a 1-frame window with D_h = 2 (values worked out
// on paper from the fusion formula).
TEST_CASE("fuse_conditions: hand-computed toy value") {
    Rng rng(3);
    A2LConfig cfg;
    cfg.landmarks = 4;  // state dim 12
    cfg.audio_dim = 1;
    cfg.hidden = 2;
    cfg.blocks = 0;
    cfg.window = 1;
    A2LDenoiser m(cfg, rng);
    auto np = by_name(m);
    zero_all(m);

    // f_A: W = [[1, 2]], b = [0.1, 0.2]; audio = [3]
    np["f_audio.W"].val() = {1, 2};
    np["f_audio.b"].val() = {0.1, 0.2};
    // f_Pbar: row 0 = [0.5, -1]; pbar[0] = 2 -> [1, -2]
    np["f_pbar.W"].val()[0] = 0.5;
    np["f_pbar.W"].val()[1] = -1.0;
    // f_P: row 1 = [0.25, 0.5]; x[1] = 4 -> [1, 2]
    np["f_state.W"].val()[2] = 0.25;
    np["f_state.W"].val()[3] = 0.5;
    // f_t: embedding of t=0 with dim 2 is [sin 0, cos 0] = [0, 1];
    // W = [[0, 0], [1, -1]] -> t feature [1, -1]
    np["f_time.W"].val() = {0, 0, 1, -1};
    // f_agg on concat([1, 2], [1, -1]) with W rows [[1,0],[0,1],[2,0],[0,3]]
    // -> [1*1 + 1*2, 2*1 + (-1)*3] = [3, -1]; bias [0.5, -0.5] -> [3.5, -1.5]
    np["f_agg.W"].val() = {1, 0, 0, 1, 2, 0, 0, 3};
    np["f_agg.b"].val() = {0.5, -0.5};

    std::vector<double> xt(12, 0.0);
    xt[1] = 4.0;
    std::vector<double> pb(12, 0.0);
    pb[0] = 2.0;
    Tensor x = Tensor::from({1, 12}, xt);
    Tensor audio = Tensor::from({1, 1}, {3.0});
    Tensor pbar = Tensor::from({1, 12}, pb);
    Tensor fused = m.fuse_conditions(x, {0}, audio, pbar, 1);
    // f_A = [3.1, 6.2]; f_Pbar = [1, -2]; f_agg = [3.5, -1.5]
    CHECK(fused.val()[0] == doctest::Approx(3.1 + 1.0 + 3.5));
    CHECK(fused.val()[1] == doctest::Approx(6.2 - 2.0 - 1.5));
}

TEST_CASE("temporal_block: zero input stays zero") {
    Rng rng(4);
    A2LConfig cfg = tiny_cfg();
    A2LDenoiser m(cfg, rng);  // conv/fc biases are zero-initialized
    Tensor x = Tensor::zeros({cfg.window, cfg.hidden});
    Tensor y = m.temporal_block(x, 0, 1);
    for (double v : y.val()) CHECK(v == 0.0);
}

TEST_CASE("temporal_block: interior frames are shift-equivariant") {
    Rng rng(5);
    A2LConfig cfg = tiny_cfg();
    cfg.window = 8;
    A2LDenoiser m(cfg, rng);

    std::vector<double> base(static_cast<size_t>(cfg.window) * cfg.hidden);
    for (auto& v : base) v = rng.normal();
    // shifted copy: frame i of the shifted input is frame i-1 of the original
    std::vector<double> shifted(base.size(), 0.0);
    std::copy(base.begin(), base.end() - cfg.hidden, shifted.begin() + cfg.hidden);

    Tensor y = m.temporal_block(Tensor::from({cfg.window, cfg.hidden}, base), 0, 1);
    Tensor ys = m.temporal_block(Tensor::from({cfg.window, cfg.hidden}, shifted), 0, 1);
    for (int i = 2; i < cfg.window - 1; ++i)
        for (int c = 0; c < cfg.hidden; ++c)
            CHECK(ys.val()[i * cfg.hidden + c] ==
                  doctest::Approx(y.val()[(i - 1) * cfg.hidden + c]).epsilon(1e-12));
}

TEST_CASE("temporal_block: l=1 degenerates to a pointwise transform") {
    Rng rng(6);
    A2LConfig cfg = tiny_cfg();
    cfg.window = 1;
    A2LDenoiser m(cfg, rng);
    Tensor x = Tensor::zeros({1, cfg.hidden});
    for (auto& v : x.val()) v = rng.normal();
    Tensor y = m.temporal_block(x, 0, 1);
    CHECK(y.rows() == 1);
    CHECK(y.cols() == cfg.hidden);
    for (double v : y.val()) CHECK(std::isfinite(v));
}

TEST_CASE("predict_noise: shape contract (20, 68) -> (20, 204)") {
    Rng rng(7);
    A2LConfig cfg;
    cfg.landmarks = 68;
    cfg.audio_dim = 4;
    cfg.hidden = 16;
    cfg.blocks = 2;
    cfg.window = 20;
    A2LDenoiser m(cfg, rng);
    A2LConditionSet cond = random_cond(cfg, rng);
    State x_t(static_cast<size_t>(20) * 204);
    for (auto& v : x_t) v = rng.normal();
    State out = m.predict_noise(x_t, 5, cond);
    CHECK(out.size() == static_cast<size_t>(20) * 204);
    State out2 = m.predict_noise(x_t, 5, cond);
    CHECK(out == out2);  // deterministic
}

TEST_CASE("N=0 reduces to the projected fusion") {
    Rng rng(8);
    A2LConfig cfg = tiny_cfg();
    cfg.blocks = 0;
    A2LDenoiser m(cfg, rng);
    auto np = by_name(m);
    Tensor x = Tensor::zeros({cfg.window, cfg.state_dim()});
    for (auto& v : x.val()) v = rng.normal();
    Tensor audio = Tensor::zeros({cfg.window, cfg.audio_dim});
    for (auto& v : audio.val()) v = rng.normal();
    Tensor pbar = Tensor::zeros({1, cfg.state_dim()});
    Tensor direct = m.forward(x, {4}, audio, pbar, 1);
    Tensor fused = m.fuse_conditions(x, {4}, audio, pbar, 1);
    Tensor expected = linear(fused, np["proj_out.W"], np["proj_out.b"]);
    for (long i = 0; i < direct.size(); ++i)
        CHECK(direct.val()[i] == doctest::Approx(expected.val()[i]).epsilon(1e-12));
}

TEST_CASE("training loss gradients match finite differences (1e-4 relative)") {
    Rng rng(9);
    A2LConfig cfg = tiny_cfg();
    A2LDenoiser m(cfg, rng);
    NoiseSchedule sched = make_linear_schedule(20, 1e-3, 0.1);

    std::vector<State> x0s;
    std::vector<A2LConditionSet> conds;
    for (int b = 0; b < 2; ++b) {
        State x0(static_cast<size_t>(cfg.window) * cfg.state_dim());
        for (auto& v : x0) v = 0.5 * rng.normal();
        x0s.push_back(std::move(x0));
        conds.push_back(random_cond(cfg, rng));
    }
    auto forward = [&] {
        Rng fixed(1234);
        return m.training_loss_batch(x0s, conds, sched, fixed);
    };
    Rng probe(55);
    auto res = testutil::gradcheck_subset(m.params(), forward, probe, 3);
    CHECK(res.checked >= 10);
    CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("generate_landmarks: fixed seed determinism and exact shape") {
    Rng rng(10);
    A2LConfig cfg = tiny_cfg();
    A2LDenoiser m(cfg, rng);
    NoiseSchedule sched = make_linear_schedule(10, 1e-3, 0.1);
    A2LConditionSet cond = random_cond(cfg, rng);
    Rng s1(77), s2(77);
    LandmarkSequence a = m.generate_landmarks(cond, sched, s1);
    LandmarkSequence b = m.generate_landmarks(cond, sched, s2);
    CHECK(a.length() == cfg.window);
    CHECK(a.landmark_count() == cfg.landmarks);
    for (int i = 0; i < a.length(); ++i)
        for (int j = 0; j < cfg.landmarks; ++j)
            CHECK(a.frames[i].points[j] == b.frames[i].points[j]);
}

TEST_CASE("regress_landmarks: deterministic, correct shape") {
    Rng rng(11);
    A2LConfig cfg = tiny_cfg();
    cfg.diffusion = false;
    A2LDenoiser m(cfg, rng);
    A2LConditionSet cond = random_cond(cfg, rng);
    LandmarkSequence a = m.regress_landmarks(cond);
    LandmarkSequence b = m.regress_landmarks(cond);
    CHECK(a.length() == cfg.window);
    CHECK(a.landmark_count() == cfg.landmarks);
    for (int i = 0; i < a.length(); ++i)
        for (int j = 0; j < cfg.landmarks; ++j)
            CHECK(a.frames[i].points[j] == b.frames[i].points[j]);
}

TEST_CASE("parameter count grows linearly in the block count") {
    Rng rng(12);
    A2LConfig cfg = tiny_cfg();
    cfg.blocks = 1;
    long p1 = A2LDenoiser(cfg, rng).param_count();
    cfg.blocks = 2;
    long p2 = A2LDenoiser(cfg, rng).param_count();
    cfg.blocks = 3;
    long p3 = A2LDenoiser(cfg, rng).param_count();
    CHECK(p2 - p1 == p3 - p2);
    CHECK(p2 > p1);
}

TEST_CASE("unit ablations are constructible and drop the matching parameters") {
    Rng rng(13);
    A2LConfig cfg = tiny_cfg();
    cfg.temporal_unit = false;  // mapping unit only
    A2LDenoiser no_tu(cfg, rng);
    for (const auto& [name, t] : no_tu.named_params())
        CHECK(name.find("conv") == std::string::npos);

    cfg.temporal_unit = true;
    cfg.mapping_unit = false;  // temporal unit only
    A2LDenoiser no_mu(cfg, rng);
    for (const auto& [name, t] : no_mu.named_params())
        CHECK(name.find(".fc") == std::string::npos);

    cfg.mapping_unit = false;
    cfg.temporal_unit = false;
    CHECK_THROWS_AS(A2LDenoiser(cfg, rng), std::invalid_argument);
}
