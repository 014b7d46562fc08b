#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "vecfont/error.hpp"

namespace vecfont {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

namespace detail {

// One recorded operation. Nodes form the backward graph: an acyclic DAG with
// parent references, rebuilt on every forward pass.
struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;  // allocated lazily, same length as value
    bool requires_grad = false;
    bool is_leaf = true;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&)> backward_fn;

    int64_t numel() const { return static_cast<int64_t>(value.size()); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

}  // namespace detail

class Tensor;

namespace detail {
// Allocates the result node of an op; graph edges and the backward closure
// are recorded only when grad mode is on and some parent requires grad.
Tensor make_op(Shape shape, std::vector<Tensor> parents, std::function<void(Node&)> backward_fn);
}  // namespace detail

// Dense 64-bit float tensor, row-major, with reverse-mode autodiff.
// Tensors are cheap shared handles to graph nodes; all op functions are pure
// with respect to their inputs.
class Tensor {
  public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, double v, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor randn(Shape shape, std::mt19937_64& rng, double stdev, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int ndim() const { return static_cast<int>(node_->shape.size()); }
    int64_t dim(int i) const;  // negative indices count from the back
    int64_t numel() const { return node_->numel(); }

    const std::vector<double>& data() const { return node_->value; }
    std::vector<double>& raw() { return node_->value; }  // in-place update (optimizers)
    double item() const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool b);
    const std::vector<double>& grad() const;
    void zero_grad();

    // Constant copy cut off from the graph.
    Tensor detached() const;

    std::shared_ptr<detail::Node> node() const { return node_; }
    static Tensor wrap(std::shared_ptr<detail::Node> n) {
        Tensor t;
        t.node_ = std::move(n);
        return t;
    }

  private:
    std::shared_ptr<detail::Node> node_;
};

// Disables graph recording in scope (forward-only evaluation).
struct NoGradGuard {
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    bool prev;
};
bool grad_enabled();

// Worker count for the parallel kernels. Default 1; parallel results are
// bitwise identical to the single-thread ones (each output row keeps its
// sequential reduction order).
void set_num_threads(int n);
int num_threads();

// --- ops ---------------------------------------------------------------------

// matmul(A, B):
//   B 2-D:              [..., k] x [k, n] -> [..., n]
//   A, B >2-D:          [batch..., m, k] x [batch..., k, n] -> [batch..., m, n]
Tensor matmul(const Tensor& a, const Tensor& b);

// add/sub: same shape, scalar rhs, or 1-D rhs broadcast over the last axis.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
// mul: same shape or scalar rhs.
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);

Tensor softmax(const Tensor& a);  // last axis
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor mean(const Tensor& a);  // scalar
Tensor sum(const Tensor& a);   // scalar

Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, int64_t start, int64_t end);
Tensor transpose(const Tensor& a, int axis0, int axis1);
Tensor reshape(const Tensor& a, Shape shape);

// Row lookup: table [V, d], ids of any shape -> [id_shape..., d].
Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids, const Shape& id_shape);

// x [B, C, H, W], w [F, C, kh, kw], bias [F] (optional, pass undefined Tensor).
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int padding);
// x [B, C, H, W], w [C, F, kh, kw], output [B, F, (H-1)*s - 2p + kh, ...].
Tensor transposed_conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride,
                         int padding);

// logits [..., C], one target id per row -> per-row CE [...].
Tensor cross_entropy_with_logits(const Tensor& logits, const std::vector<int>& targets);

// Last-axis select: a [..., n], one index per row -> [...].
Tensor gather(const Tensor& a, const std::vector<int>& idx);

// mask has one byte per element; value replaces masked positions.
// Use kNegInf as the value to zero out softmax attention weights exactly.
Tensor masked_fill(const Tensor& a, const std::vector<uint8_t>& mask, double value);

// -inf stand-in: large enough to underflow to exactly 0 through softmax,
// small enough not to produce NaNs in intermediate arithmetic.
inline constexpr double kNegInf = -1e30;

// --- backward ----------------------------------------------------------------

// Populates grads of every requires_grad leaf reachable from loss.
// Repeated calls without zero_grad accumulate leaf gradients.
void backward(const Tensor& loss);

// Central finite differences vs reverse mode; returns the max relative error
// with denominator max(|analytic|, |numeric|, 1e-8). Throws NumericError if f
// is not deterministic (two evaluations disagree bitwise).
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps = 1e-5);

}  // namespace vecfont
