#include "dh/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace dh::nn {

Tensor make_param(std::vector<int> shape, Init init, int fan_in, Rng& rng) {
    long n = 1;
    for (int d : shape) n *= d;
    std::vector<double> data(n, 0.0);
    if (init != Init::Zero) {
        double sigma = init == Init::He ? std::sqrt(2.0 / fan_in) : std::sqrt(1.0 / fan_in);
        for (auto& x : data) x = sigma * rng.normal();
    }
    return Tensor::param(std::move(shape), std::move(data));
}

Linear::Linear(int in, int out, Rng& rng, Init init) {
    W = make_param({in, out}, init, in, rng);
    b = make_param({out}, Init::Zero, in, rng);
}

void Linear::collect(NamedParams& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".W", W);
    out.emplace_back(prefix + ".b", b);
}

LayerNorm::LayerNorm(int dim) {
    gamma = Tensor::param({dim}, std::vector<double>(dim, 1.0));
    beta = Tensor::param({dim}, std::vector<double>(dim, 0.0));
}

void LayerNorm::collect(NamedParams& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
}

Conv1d::Conv1d(int cin, int cout, int k_, Rng& rng, Init init) : k(k_) {
    W = make_param({k * cin, cout}, init, k * cin, rng);
    b = make_param({cout}, Init::Zero, k * cin, rng);
}

void Conv1d::collect(NamedParams& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".W", W);
    out.emplace_back(prefix + ".b", b);
}

Conv2d::Conv2d(int cin, int cout, int k_, int stride_, Rng& rng, Init init)
    : k(k_), stride(stride_) {
    W = make_param({k * k * cin, cout}, init, k * k * cin, rng);
    b = make_param({cout}, Init::Zero, k * k * cin, rng);
}

void Conv2d::collect(NamedParams& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".W", W);
    out.emplace_back(prefix + ".b", b);
}

GroupNorm::GroupNorm(int channels, int groups_) : groups(groups_) {
    if (channels % groups != 0) throw std::invalid_argument("GroupNorm: C % groups != 0");
    gamma = Tensor::param({channels}, std::vector<double>(channels, 1.0));
    beta = Tensor::param({channels}, std::vector<double>(channels, 0.0));
}

void GroupNorm::collect(NamedParams& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".gamma", gamma);
    out.emplace_back(prefix + ".beta", beta);
}

SelfAttention::SelfAttention(int channels, int n_positions_, bool use_pos_, Rng& rng)
    : use_pos(use_pos_), n_positions(n_positions_) {
    Wq = make_param({channels, channels}, Init::Xavier, channels, rng);
    Wk = make_param({channels, channels}, Init::Xavier, channels, rng);
    Wv = make_param({channels, channels}, Init::Xavier, channels, rng);
    Wo = make_param({channels, channels}, Init::Zero, channels, rng);
    bo = make_param({channels}, Init::Zero, channels, rng);
    norm = GroupNorm(channels, std::min(8, channels));
    if (use_pos)
        pos = make_param({n_positions, channels}, Init::Zero, channels, rng);
}

Tensor SelfAttention::operator()(const Tensor& x, int batch) const {
    int n = x.rows() / batch;
    int c = x.cols();
    Tensor h = norm(x, batch, n);
    if (use_pos) {
        if (n != n_positions)
            throw std::invalid_argument("SelfAttention: position count mismatch");
        std::vector<Tensor> tiles(batch, pos);
        h = add(h, concat_rows(tiles));
    }
    double sc = 1.0 / std::sqrt(static_cast<double>(c));
    std::vector<Tensor> outs;
    outs.reserve(batch);
    for (int s = 0; s < batch; ++s) {
        Tensor hs = slice_rows(h, s * n, (s + 1) * n);
        Tensor q = matmul(hs, Wq);
        Tensor k = matmul(hs, Wk);
        Tensor v = matmul(hs, Wv);
        Tensor att = softmax_rows(scale(matmul(q, transpose(k)), sc));
        outs.push_back(matmul(att, v));
    }
    Tensor o = linear(concat_rows(outs), Wo, bo);
    return add(x, o);
}

void SelfAttention::collect(NamedParams& out, const std::string& prefix) const {
    out.emplace_back(prefix + ".Wq", Wq);
    out.emplace_back(prefix + ".Wk", Wk);
    out.emplace_back(prefix + ".Wv", Wv);
    out.emplace_back(prefix + ".Wo", Wo);
    out.emplace_back(prefix + ".bo", bo);
    norm.collect(out, prefix + ".norm");
    if (use_pos) out.emplace_back(prefix + ".pos", pos);
}

Tensor timestep_embedding(int t, int dim) {
    std::vector<double> e(dim, 0.0);
    int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        double freq = std::exp(-std::log(10000.0) * i / half);
        e[i] = std::sin(t * freq);
        e[half + i] = std::cos(t * freq);
    }
    return Tensor::from({1, dim}, std::move(e));
}

void Adam::init(const std::vector<Tensor>& params) {
    m.clear();
    v.clear();
    for (const auto& p : params) {
        m.emplace_back(p.size(), 0.0);
        v.emplace_back(p.size(), 0.0);
    }
    step_count = 0;
}

void Adam::zero_grad(std::vector<Tensor>& params) {
    for (auto& p : params) std::fill(p.grad().begin(), p.grad().end(), 0.0);
}

void Adam::step(std::vector<Tensor>& params) {
    if (m.size() != params.size()) throw std::runtime_error("Adam: not initialized");
    ++step_count;
    double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
    for (size_t i = 0; i < params.size(); ++i) {
        auto& val = params[i].val();
        auto& grd = params[i].grad();
        for (size_t j = 0; j < val.size(); ++j) {
            m[i][j] = beta1 * m[i][j] + (1.0 - beta1) * grd[j];
            v[i][j] = beta2 * v[i][j] + (1.0 - beta2) * grd[j] * grd[j];
            double mh = m[i][j] / bc1;
            double vh = v[i][j] / bc2;
            val[j] -= lr * mh / (std::sqrt(vh) + eps);
        }
    }
}

}  // namespace dh::nn
