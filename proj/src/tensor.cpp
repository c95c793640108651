#define EIGEN_DONT_PARALLELIZE
#include "dh/tensor.hpp"

#include <Eigen/Core>

#include <cmath>
#include <stdexcept>
#include <unordered_set>

namespace dh {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<Mat>;
using CMatMap = Eigen::Map<const Mat>;

namespace {

thread_local int g_no_grad_depth = 0;

MatMap as_mat(TensorNode& n) {
    return MatMap(n.val.data(), n.shape[0], n.size() / n.shape[0]);
}
CMatMap as_cmat(const TensorNode& n) {
    return CMatMap(n.val.data(), n.shape[0], n.size() / n.shape[0]);
}
MatMap grad_mat(TensorNode& n) {
    n.ensure_grad();
    return MatMap(n.grad.data(), n.shape[0], n.size() / n.shape[0]);
}

NodePtr make_node(std::vector<int> shape) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->val.assign(n->size(), 0.0);
    return n;
}

void attach(NodePtr n, std::vector<NodePtr> parents,
            std::function<void(TensorNode&)> backfn) {
    if (g_no_grad_depth > 0) return;
    n->parents = std::move(parents);
    n->backfn = std::move(backfn);
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

}  // namespace

NoGradGuard::NoGradGuard() { ++g_no_grad_depth; }
NoGradGuard::~NoGradGuard() { --g_no_grad_depth; }
bool grad_enabled() { return g_no_grad_depth == 0; }

Tensor Tensor::zeros(std::vector<int> shape) { return Tensor(make_node(std::move(shape))); }

Tensor Tensor::full(std::vector<int> shape, double v) {
    auto n = make_node(std::move(shape));
    std::fill(n->val.begin(), n->val.end(), v);
    return Tensor(n);
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> data) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    if (static_cast<long>(data.size()) != n->size())
        throw std::invalid_argument("Tensor::from: data size does not match shape");
    n->val = std::move(data);
    return Tensor(n);
}

Tensor Tensor::param(std::vector<int> shape, std::vector<double> data) {
    Tensor t = from(std::move(shape), std::move(data));
    t.node()->is_param = true;
    return t;
}

// ---------------- elementwise ----------------

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    auto out = make_node(a.shape());
    for (long i = 0; i < a.size(); ++i) out->val[i] = a.val()[i] + b.val()[i];
    attach(out, {a.node(), b.node()}, [](TensorNode& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        pa.ensure_grad();
        pb.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            pa.grad[i] += n.grad[i];
            pb.grad[i] += n.grad[i];
        }
    });
    return Tensor(out);
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    auto out = make_node(a.shape());
    for (long i = 0; i < a.size(); ++i) out->val[i] = a.val()[i] - b.val()[i];
    attach(out, {a.node(), b.node()}, [](TensorNode& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        pa.ensure_grad();
        pb.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            pa.grad[i] += n.grad[i];
            pb.grad[i] -= n.grad[i];
        }
    });
    return Tensor(out);
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    auto out = make_node(a.shape());
    for (long i = 0; i < a.size(); ++i) out->val[i] = a.val()[i] * b.val()[i];
    attach(out, {a.node(), b.node()}, [](TensorNode& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        pa.ensure_grad();
        pb.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            pa.grad[i] += n.grad[i] * pb.val[i];
            pb.grad[i] += n.grad[i] * pa.val[i];
        }
    });
    return Tensor(out);
}

Tensor scale(const Tensor& a, double c) {
    auto out = make_node(a.shape());
    for (long i = 0; i < a.size(); ++i) out->val[i] = a.val()[i] * c;
    attach(out, {a.node()}, [c](TensorNode& n) {
        auto& pa = *n.parents[0];
        pa.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i] * c;
    });
    return Tensor(out);
}

Tensor relu(const Tensor& x) {
    auto out = make_node(x.shape());
    for (long i = 0; i < x.size(); ++i) out->val[i] = x.val()[i] > 0.0 ? x.val()[i] : 0.0;
    attach(out, {x.node()}, [](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i)
            if (p.val[i] > 0.0) p.grad[i] += n.grad[i];
    });
    return Tensor(out);
}

Tensor silu(const Tensor& x) {
    auto out = make_node(x.shape());
    for (long i = 0; i < x.size(); ++i) {
        double s = 1.0 / (1.0 + std::exp(-x.val()[i]));
        out->val[i] = x.val()[i] * s;
    }
    attach(out, {x.node()}, [](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            double s = 1.0 / (1.0 + std::exp(-p.val[i]));
            p.grad[i] += n.grad[i] * s * (1.0 + p.val[i] * (1.0 - s));
        }
    });
    return Tensor(out);
}

Tensor square(const Tensor& x) {
    auto out = make_node(x.shape());
    for (long i = 0; i < x.size(); ++i) out->val[i] = x.val()[i] * x.val()[i];
    attach(out, {x.node()}, [](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += 2.0 * p.val[i] * n.grad[i];
    });
    return Tensor(out);
}

Tensor abs_elems(const Tensor& x) {
    auto out = make_node(x.shape());
    for (long i = 0; i < x.size(); ++i) out->val[i] = std::abs(x.val()[i]);
    attach(out, {x.node()}, [](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            double s = p.val[i] > 0.0 ? 1.0 : (p.val[i] < 0.0 ? -1.0 : 0.0);
            p.grad[i] += s * n.grad[i];
        }
    });
    return Tensor(out);
}

Tensor mean_all(const Tensor& x) {
    auto out = make_node({1});
    double s = 0.0;
    for (long i = 0; i < x.size(); ++i) s += x.val()[i];
    long n_elems = x.size();
    out->val[0] = s / static_cast<double>(n_elems);
    attach(out, {x.node()}, [n_elems](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        double g = n.grad[0] / static_cast<double>(n_elems);
        for (auto& pg : p.grad) pg += g;
    });
    return Tensor(out);
}

// ---------------- linear algebra ----------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.cols() != b.rows()) throw std::invalid_argument("matmul: inner dims differ");
    auto out = make_node({a.rows(), b.cols()});
    as_mat(*out) = as_cmat(*a.node()) * as_cmat(*b.node());
    attach(out, {a.node(), b.node()}, [](TensorNode& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        MatMap dC(n.grad.data(), n.shape[0], n.shape[1]);
        grad_mat(pa).noalias() += dC * as_cmat(pb).transpose();
        grad_mat(pb).noalias() += as_cmat(pa).transpose() * dC;
    });
    return Tensor(out);
}

Tensor transpose(const Tensor& a) {
    auto out = make_node({a.cols(), a.rows()});
    as_mat(*out) = as_cmat(*a.node()).transpose();
    attach(out, {a.node()}, [](TensorNode& n) {
        auto& p = *n.parents[0];
        MatMap dC(n.grad.data(), n.shape[0], n.shape[1]);
        grad_mat(p).noalias() += dC.transpose();
    });
    return Tensor(out);
}

Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b) {
    if (x.cols() != W.rows()) throw std::invalid_argument("linear: x/W dims differ");
    if (b.size() != W.cols()) throw std::invalid_argument("linear: bias dim differs");
    auto out = make_node({x.rows(), W.cols()});
    CMatMap bm(b.val().data(), 1, b.size());
    as_mat(*out) = (as_cmat(*x.node()) * as_cmat(*W.node())).rowwise() + bm.row(0);
    attach(out, {x.node(), W.node(), b.node()}, [](TensorNode& n) {
        auto& px = *n.parents[0];
        auto& pw = *n.parents[1];
        auto& pb = *n.parents[2];
        MatMap dY(n.grad.data(), n.shape[0], n.shape[1]);
        grad_mat(px).noalias() += dY * as_cmat(pw).transpose();
        grad_mat(pw).noalias() += as_cmat(px).transpose() * dY;
        pb.ensure_grad();
        MatMap dB(pb.grad.data(), 1, static_cast<long>(pb.grad.size()));
        dB.row(0) += dY.colwise().sum();
    });
    return Tensor(out);
}

Tensor softmax_rows(const Tensor& x) {
    auto out = make_node(x.shape());
    int r = x.rows(), c = x.cols();
    for (int i = 0; i < r; ++i) {
        const double* xi = x.val().data() + static_cast<long>(i) * c;
        double* yi = out->val.data() + static_cast<long>(i) * c;
        double mx = xi[0];
        for (int j = 1; j < c; ++j) mx = std::max(mx, xi[j]);
        double s = 0.0;
        for (int j = 0; j < c; ++j) {
            yi[j] = std::exp(xi[j] - mx);
            s += yi[j];
        }
        for (int j = 0; j < c; ++j) yi[j] /= s;
    }
    attach(out, {x.node()}, [r, c](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (int i = 0; i < r; ++i) {
            const double* y = n.val.data() + static_cast<long>(i) * c;
            const double* dy = n.grad.data() + static_cast<long>(i) * c;
            double* dx = p.grad.data() + static_cast<long>(i) * c;
            double dot = 0.0;
            for (int j = 0; j < c; ++j) dot += y[j] * dy[j];
            for (int j = 0; j < c; ++j) dx[j] += y[j] * (dy[j] - dot);
        }
    });
    return Tensor(out);
}

// ---------------- normalization ----------------

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    int r = x.rows(), c = x.cols();
    if (gamma.size() != c || beta.size() != c)
        throw std::invalid_argument("layer_norm: affine dims differ");
    auto out = make_node(x.shape());
    // cache normalized values and inverse stddev per row for the backward pass
    auto xhat = std::make_shared<std::vector<double>>(x.size());
    auto istd = std::make_shared<std::vector<double>>(r);
    for (int i = 0; i < r; ++i) {
        const double* xi = x.val().data() + static_cast<long>(i) * c;
        double mu = 0.0;
        for (int j = 0; j < c; ++j) mu += xi[j];
        mu /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) var += (xi[j] - mu) * (xi[j] - mu);
        var /= c;
        double is = 1.0 / std::sqrt(var + eps);
        (*istd)[i] = is;
        double* h = xhat->data() + static_cast<long>(i) * c;
        double* yi = out->val.data() + static_cast<long>(i) * c;
        for (int j = 0; j < c; ++j) {
            h[j] = (xi[j] - mu) * is;
            yi[j] = gamma.val()[j] * h[j] + beta.val()[j];
        }
    }
    attach(out, {x.node(), gamma.node(), beta.node()},
           [r, c, xhat, istd](TensorNode& n) {
               auto& px = *n.parents[0];
               auto& pg = *n.parents[1];
               auto& pb = *n.parents[2];
               px.ensure_grad();
               pg.ensure_grad();
               pb.ensure_grad();
               for (int i = 0; i < r; ++i) {
                   const double* dy = n.grad.data() + static_cast<long>(i) * c;
                   const double* h = xhat->data() + static_cast<long>(i) * c;
                   double* dx = px.grad.data() + static_cast<long>(i) * c;
                   double m1 = 0.0, m2 = 0.0;
                   for (int j = 0; j < c; ++j) {
                       double dxh = pg.val[j] * dy[j];
                       m1 += dxh;
                       m2 += dxh * h[j];
                       pg.grad[j] += dy[j] * h[j];
                       pb.grad[j] += dy[j];
                   }
                   m1 /= c;
                   m2 /= c;
                   double is = (*istd)[i];
                   for (int j = 0; j < c; ++j) {
                       double dxh = pg.val[j] * dy[j];
                       dx[j] += (dxh - m1 - h[j] * m2) * is;
                   }
               }
           });
    return Tensor(out);
}

Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  int batch, int hw, int groups, double eps) {
    int c = x.cols();
    if (x.rows() != batch * hw) throw std::invalid_argument("group_norm: rows != B*HW");
    if (c % groups != 0) throw std::invalid_argument("group_norm: C % groups != 0");
    if (gamma.size() != c || beta.size() != c)
        throw std::invalid_argument("group_norm: affine dims differ");
    int cg = c / groups;
    auto out = make_node(x.shape());
    auto xhat = std::make_shared<std::vector<double>>(x.size());
    auto istd = std::make_shared<std::vector<double>>(static_cast<size_t>(batch) * groups);

    for (int s = 0; s < batch; ++s) {
        for (int g = 0; g < groups; ++g) {
            double mu = 0.0;
            for (int p = 0; p < hw; ++p) {
                const double* row = x.val().data() + (static_cast<long>(s) * hw + p) * c;
                for (int j = g * cg; j < (g + 1) * cg; ++j) mu += row[j];
            }
            long cnt = static_cast<long>(hw) * cg;
            mu /= cnt;
            double var = 0.0;
            for (int p = 0; p < hw; ++p) {
                const double* row = x.val().data() + (static_cast<long>(s) * hw + p) * c;
                for (int j = g * cg; j < (g + 1) * cg; ++j) var += (row[j] - mu) * (row[j] - mu);
            }
            var /= cnt;
            double is = 1.0 / std::sqrt(var + eps);
            (*istd)[static_cast<size_t>(s) * groups + g] = is;
            for (int p = 0; p < hw; ++p) {
                long base = (static_cast<long>(s) * hw + p) * c;
                for (int j = g * cg; j < (g + 1) * cg; ++j) {
                    double h = (x.val()[base + j] - mu) * is;
                    (*xhat)[base + j] = h;
                    out->val[base + j] = gamma.val()[j] * h + beta.val()[j];
                }
            }
        }
    }
    attach(out, {x.node(), gamma.node(), beta.node()},
           [batch, hw, groups, cg, c, xhat, istd](TensorNode& n) {
               auto& px = *n.parents[0];
               auto& pg = *n.parents[1];
               auto& pb = *n.parents[2];
               px.ensure_grad();
               pg.ensure_grad();
               pb.ensure_grad();
               for (int s = 0; s < batch; ++s) {
                   for (int g = 0; g < groups; ++g) {
                       long cnt = static_cast<long>(hw) * cg;
                       double m1 = 0.0, m2 = 0.0;
                       for (int p = 0; p < hw; ++p) {
                           long base = (static_cast<long>(s) * hw + p) * c;
                           for (int j = g * cg; j < (g + 1) * cg; ++j) {
                               double dxh = pg.val[j] * n.grad[base + j];
                               m1 += dxh;
                               m2 += dxh * (*xhat)[base + j];
                               pg.grad[j] += n.grad[base + j] * (*xhat)[base + j];
                               pb.grad[j] += n.grad[base + j];
                           }
                       }
                       m1 /= cnt;
                       m2 /= cnt;
                       double is = (*istd)[static_cast<size_t>(s) * groups + g];
                       for (int p = 0; p < hw; ++p) {
                           long base = (static_cast<long>(s) * hw + p) * c;
                           for (int j = g * cg; j < (g + 1) * cg; ++j) {
                               double dxh = pg.val[j] * n.grad[base + j];
                               px.grad[base + j] += (dxh - m1 - (*xhat)[base + j] * m2) * is;
                           }
                       }
                   }
               }
           });
    return Tensor(out);
}

// ---------------- convolutions ----------------

namespace {

// Gather the 1-D im2col matrix: row (s,i) holds the k taps around frame i of
// sample s, zero-padded at sample boundaries.
std::vector<double> im2col_1d(const std::vector<double>& x, int batch, int len,
                              int cin, int k) {
    std::vector<double> col(static_cast<size_t>(batch) * len * k * cin, 0.0);
    int half = k / 2;
    for (int s = 0; s < batch; ++s)
        for (int i = 0; i < len; ++i) {
            double* dst = col.data() + ((static_cast<long>(s) * len + i) * k) * cin;
            for (int t = 0; t < k; ++t) {
                int src = i + t - half;
                if (src < 0 || src >= len) continue;
                const double* srow = x.data() + (static_cast<long>(s) * len + src) * cin;
                std::copy(srow, srow + cin, dst + static_cast<long>(t) * cin);
            }
        }
    return col;
}

std::vector<double> im2col_2d(const std::vector<double>& x, int batch, int h, int w,
                              int cin, int k, int stride, int ho, int wo) {
    std::vector<double> col(static_cast<size_t>(batch) * ho * wo * k * k * cin, 0.0);
    int half = k / 2;
    for (int s = 0; s < batch; ++s)
        for (int oy = 0; oy < ho; ++oy)
            for (int ox = 0; ox < wo; ++ox) {
                double* dst = col.data() +
                              ((static_cast<long>(s) * ho + oy) * wo + ox) *
                                  (static_cast<long>(k) * k * cin);
                for (int ky = 0; ky < k; ++ky) {
                    int sy = oy * stride + ky - half;
                    if (sy < 0 || sy >= h) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        int sx = ox * stride + kx - half;
                        if (sx < 0 || sx >= w) continue;
                        const double* srow =
                            x.data() + ((static_cast<long>(s) * h + sy) * w + sx) * cin;
                        std::copy(srow, srow + cin,
                                  dst + (static_cast<long>(ky) * k + kx) * cin);
                    }
                }
            }
    return col;
}

}  // namespace

Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b,
              int batch, int len, int k) {
    int cin = x.cols();
    if (x.rows() != batch * len) throw std::invalid_argument("conv1d: rows != B*len");
    if (w.rows() != k * cin) throw std::invalid_argument("conv1d: weight rows != k*Cin");
    int cout = w.cols();
    if (b.size() != cout) throw std::invalid_argument("conv1d: bias dim differs");

    auto col = std::make_shared<std::vector<double>>(
        im2col_1d(x.val(), batch, len, cin, k));
    auto out = make_node({batch * len, cout});
    CMatMap colm(col->data(), static_cast<long>(batch) * len, static_cast<long>(k) * cin);
    CMatMap bm(b.val().data(), 1, cout);
    as_mat(*out) = (colm * as_cmat(*w.node())).rowwise() + bm.row(0);

    attach(out, {x.node(), w.node(), b.node()},
           [batch, len, cin, cout, k, col](TensorNode& n) {
               auto& px = *n.parents[0];
               auto& pw = *n.parents[1];
               auto& pb = *n.parents[2];
               MatMap dY(n.grad.data(), static_cast<long>(batch) * len, cout);
               CMatMap colm(col->data(), static_cast<long>(batch) * len,
                            static_cast<long>(k) * cin);
               grad_mat(pw).noalias() += colm.transpose() * dY;
               pb.ensure_grad();
               MatMap dB(pb.grad.data(), 1, cout);
               dB.row(0) += dY.colwise().sum();
               // dCol = dY * W^T, then scatter back through the im2col map
               Mat dCol = dY * as_cmat(pw).transpose();
               px.ensure_grad();
               int half = k / 2;
               for (int s = 0; s < batch; ++s)
                   for (int i = 0; i < len; ++i)
                       for (int t = 0; t < k; ++t) {
                           int src = i + t - half;
                           if (src < 0 || src >= len) continue;
                           double* dxrow =
                               px.grad.data() + (static_cast<long>(s) * len + src) * cin;
                           const double* drow =
                               dCol.data() +
                               (static_cast<long>(s) * len + i) * (static_cast<long>(k) * cin) +
                               static_cast<long>(t) * cin;
                           for (int cidx = 0; cidx < cin; ++cidx) dxrow[cidx] += drow[cidx];
                       }
           });
    return Tensor(out);
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
              int batch, int h, int wdt, int k, int stride) {
    int cin = x.cols();
    if (x.rows() != batch * h * wdt) throw std::invalid_argument("conv2d: rows != B*H*W");
    if (w.rows() != k * k * cin) throw std::invalid_argument("conv2d: weight rows != k*k*Cin");
    int cout = w.cols();
    if (b.size() != cout) throw std::invalid_argument("conv2d: bias dim differs");
    int half = k / 2;
    int ho = (h + 2 * half - k) / stride + 1;
    int wo = (wdt + 2 * half - k) / stride + 1;

    auto col = std::make_shared<std::vector<double>>(
        im2col_2d(x.val(), batch, h, wdt, cin, k, stride, ho, wo));
    auto out = make_node({batch * ho * wo, cout});
    CMatMap colm(col->data(), static_cast<long>(batch) * ho * wo,
                 static_cast<long>(k) * k * cin);
    CMatMap bm(b.val().data(), 1, cout);
    as_mat(*out) = (colm * as_cmat(*w.node())).rowwise() + bm.row(0);

    attach(out, {x.node(), w.node(), b.node()},
           [batch, h, wdt, cin, cout, k, stride, ho, wo, col](TensorNode& n) {
               auto& px = *n.parents[0];
               auto& pw = *n.parents[1];
               auto& pb = *n.parents[2];
               MatMap dY(n.grad.data(), static_cast<long>(batch) * ho * wo, cout);
               CMatMap colm(col->data(), static_cast<long>(batch) * ho * wo,
                            static_cast<long>(k) * k * cin);
               grad_mat(pw).noalias() += colm.transpose() * dY;
               pb.ensure_grad();
               MatMap dB(pb.grad.data(), 1, cout);
               dB.row(0) += dY.colwise().sum();
               Mat dCol = dY * as_cmat(pw).transpose();
               px.ensure_grad();
               int half = k / 2;
               for (int s = 0; s < batch; ++s)
                   for (int oy = 0; oy < ho; ++oy)
                       for (int ox = 0; ox < wo; ++ox) {
                           const double* drow =
                               dCol.data() + ((static_cast<long>(s) * ho + oy) * wo + ox) *
                                                 (static_cast<long>(k) * k * cin);
                           for (int ky = 0; ky < k; ++ky) {
                               int sy = oy * stride + ky - half;
                               if (sy < 0 || sy >= h) continue;
                               for (int kx = 0; kx < k; ++kx) {
                                   int sx = ox * stride + kx - half;
                                   if (sx < 0 || sx >= wdt) continue;
                                   double* dxrow =
                                       px.grad.data() +
                                       ((static_cast<long>(s) * h + sy) * wdt + sx) * cin;
                                   const double* dsrc =
                                       drow + (static_cast<long>(ky) * k + kx) * cin;
                                   for (int cidx = 0; cidx < cin; ++cidx)
                                       dxrow[cidx] += dsrc[cidx];
                               }
                           }
                       }
           });
    return Tensor(out);
}

Tensor upsample2x(const Tensor& x, int batch, int h, int wdt) {
    int c = x.cols();
    if (x.rows() != batch * h * wdt) throw std::invalid_argument("upsample2x: rows != B*H*W");
    auto out = make_node({batch * 2 * h * 2 * wdt, c});
    for (int s = 0; s < batch; ++s)
        for (int y = 0; y < 2 * h; ++y)
            for (int xq = 0; xq < 2 * wdt; ++xq) {
                const double* srow =
                    x.val().data() + ((static_cast<long>(s) * h + y / 2) * wdt + xq / 2) * c;
                double* drow =
                    out->val.data() +
                    ((static_cast<long>(s) * 2 * h + y) * 2 * wdt + xq) * c;
                std::copy(srow, srow + c, drow);
            }
    attach(out, {x.node()}, [batch, h, wdt, c](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (int s = 0; s < batch; ++s)
            for (int y = 0; y < 2 * h; ++y)
                for (int xq = 0; xq < 2 * wdt; ++xq) {
                    double* drow =
                        p.grad.data() + ((static_cast<long>(s) * h + y / 2) * wdt + xq / 2) * c;
                    const double* srow =
                        n.grad.data() +
                        ((static_cast<long>(s) * 2 * h + y) * 2 * wdt + xq) * c;
                    for (int j = 0; j < c; ++j) drow[j] += srow[j];
                }
    });
    return Tensor(out);
}

// ---------------- shape plumbing ----------------

Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.rows() != b.rows()) throw std::invalid_argument("concat_cols: row mismatch");
    int r = a.rows(), ca = a.cols(), cb = b.cols();
    auto out = make_node({r, ca + cb});
    for (int i = 0; i < r; ++i) {
        std::copy(a.val().data() + static_cast<long>(i) * ca,
                  a.val().data() + static_cast<long>(i + 1) * ca,
                  out->val.data() + static_cast<long>(i) * (ca + cb));
        std::copy(b.val().data() + static_cast<long>(i) * cb,
                  b.val().data() + static_cast<long>(i + 1) * cb,
                  out->val.data() + static_cast<long>(i) * (ca + cb) + ca);
    }
    attach(out, {a.node(), b.node()}, [r, ca, cb](TensorNode& n) {
        auto& pa = *n.parents[0];
        auto& pb = *n.parents[1];
        pa.ensure_grad();
        pb.ensure_grad();
        for (int i = 0; i < r; ++i) {
            const double* g = n.grad.data() + static_cast<long>(i) * (ca + cb);
            double* ga = pa.grad.data() + static_cast<long>(i) * ca;
            double* gb = pb.grad.data() + static_cast<long>(i) * cb;
            for (int j = 0; j < ca; ++j) ga[j] += g[j];
            for (int j = 0; j < cb; ++j) gb[j] += g[ca + j];
        }
    });
    return Tensor(out);
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty");
    int c = parts[0].cols();
    int r = 0;
    for (const auto& p : parts) {
        if (p.cols() != c) throw std::invalid_argument("concat_rows: col mismatch");
        r += p.rows();
    }
    auto out = make_node({r, c});
    long off = 0;
    std::vector<NodePtr> parents;
    for (const auto& p : parts) {
        std::copy(p.val().begin(), p.val().end(), out->val.begin() + off);
        off += p.size();
        parents.push_back(p.node());
    }
    attach(out, parents, [](TensorNode& n) {
        long off = 0;
        for (auto& p : n.parents) {
            p->ensure_grad();
            for (size_t i = 0; i < p->grad.size(); ++i) p->grad[i] += n.grad[off + i];
            off += static_cast<long>(p->grad.size());
        }
    });
    return Tensor(out);
}

Tensor slice_rows(const Tensor& x, int r0, int r1) {
    if (r0 < 0 || r1 > x.rows() || r0 >= r1)
        throw std::invalid_argument("slice_rows: bad range");
    int c = x.cols();
    auto out = make_node({r1 - r0, c});
    std::copy(x.val().data() + static_cast<long>(r0) * c,
              x.val().data() + static_cast<long>(r1) * c, out->val.data());
    attach(out, {x.node()}, [r0, c](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        double* dst = p.grad.data() + static_cast<long>(r0) * c;
        for (size_t i = 0; i < n.grad.size(); ++i) dst[i] += n.grad[i];
    });
    return Tensor(out);
}

Tensor repeat_each_row(const Tensor& x, int k) {
    int r = x.rows(), c = x.cols();
    auto out = make_node({r * k, c});
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < k; ++j)
            std::copy(x.val().data() + static_cast<long>(i) * c,
                      x.val().data() + static_cast<long>(i + 1) * c,
                      out->val.data() + (static_cast<long>(i) * k + j) * c);
    attach(out, {x.node()}, [r, c, k](TensorNode& n) {
        auto& p = *n.parents[0];
        p.ensure_grad();
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < k; ++j) {
                const double* g = n.grad.data() + (static_cast<long>(i) * k + j) * c;
                double* dst = p.grad.data() + static_cast<long>(i) * c;
                for (int q = 0; q < c; ++q) dst[q] += g[q];
            }
    });
    return Tensor(out);
}

// ---------------- backward ----------------

void backward(const Tensor& loss) {
    if (loss.size() != 1) throw std::invalid_argument("backward: loss must be scalar");
    // iterative post-order DFS
    std::vector<TensorNode*> order;
    std::unordered_set<TensorNode*> seen;
    std::vector<std::pair<TensorNode*, size_t>> stack;
    stack.emplace_back(loss.node().get(), 0);
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            TensorNode* p = node->parents[idx++].get();
            if (seen.insert(p).second) stack.emplace_back(p, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }
    loss.node()->ensure_grad();
    loss.node()->grad[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        TensorNode* n = *it;
        if (n->backfn) {
            n->ensure_grad();
            n->backfn(*n);
        }
    }
}

}  // namespace dh
