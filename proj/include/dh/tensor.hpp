#pragma once

// Reverse-mode autodiff over dense double tensors.
//
// Graphs are built per forward call (define-by-run): each op allocates a node
// holding its value, its parent handles, and a closure that scatters the
// node's gradient into the parents. backward(loss) topologically sorts the
// graph and runs the closures. Parameter nodes outlive graphs and accumulate
// gradients until the optimizer clears them.
//
// Shapes are row-major. Most ops are plain 2-D [rows, cols]; batched image
// and sequence ops take the batch/spatial structure as explicit arguments
// (rows = B*H*W or B*len, cols = channels).

#include <functional>
#include <memory>
#include <vector>

namespace dh {

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

struct TensorNode {
    std::vector<int> shape;
    std::vector<double> val;
    std::vector<double> grad;  // allocated lazily by backward()
    bool is_param = false;
    std::vector<NodePtr> parents;
    std::function<void(TensorNode&)> backfn;

    long size() const {
        long n = 1;
        for (int d : shape) n *= d;
        return n;
    }
    void ensure_grad() {
        if (grad.size() != val.size()) grad.assign(val.size(), 0.0);
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(NodePtr n) : n_(std::move(n)) {}

    static Tensor zeros(std::vector<int> shape);
    static Tensor full(std::vector<int> shape, double v);
    static Tensor from(std::vector<int> shape, std::vector<double> data);
    // trainable leaf
    static Tensor param(std::vector<int> shape, std::vector<double> data);

    bool defined() const { return static_cast<bool>(n_); }
    const std::vector<int>& shape() const { return n_->shape; }
    int rows() const { return n_->shape[0]; }
    int cols() const { return n_->shape.size() > 1 ? n_->shape[1] : 1; }
    long size() const { return n_->size(); }

    std::vector<double>& val() { return n_->val; }
    const std::vector<double>& val() const { return n_->val; }
    std::vector<double>& grad() { n_->ensure_grad(); return n_->grad; }

    NodePtr node() const { return n_; }

private:
    NodePtr n_;
};

// While a guard is alive, ops record no parents/closures (pure inference).
class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;
};
bool grad_enabled();

// ---- elementwise / reduction ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor relu(const Tensor& x);
Tensor silu(const Tensor& x);
Tensor square(const Tensor& x);
Tensor abs_elems(const Tensor& x);
Tensor mean_all(const Tensor& x);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// y = x*W + b with x [n,in], W [in,out], b [out]
Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b);
Tensor softmax_rows(const Tensor& x);

// ---- normalization ----
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);
// x is [B*HW, C]; normalizes each (sample, channel-group) over HW*(C/groups)
Tensor group_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  int batch, int hw, int groups, double eps = 1e-5);

// ---- convolutions (same padding, odd kernels) ----
// x [B*len, Cin], w [k*Cin, Cout], b [Cout]; 1-D conv along the frame axis
Tensor conv1d(const Tensor& x, const Tensor& w, const Tensor& b,
              int batch, int len, int k);
// x [B*H*W, Cin], w [k*k*Cin, Cout]; stride 1 keeps H,W; stride 2 halves them
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
              int batch, int h, int wdt, int k, int stride = 1);
Tensor upsample2x(const Tensor& x, int batch, int h, int wdt);

// ---- shape plumbing ----
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, int r0, int r1);
// [B, D] -> [B*k, D], row b repeated k consecutive times
Tensor repeat_each_row(const Tensor& x, int k);

void backward(const Tensor& loss);

}  // namespace dh
