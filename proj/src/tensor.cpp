#include "vecfont/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>
#include <unordered_set>

namespace vecfont {

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << ']';
    return os.str();
}

namespace {

thread_local bool g_grad_enabled = true;
int g_num_threads = 1;

void check_shape(const Shape& s) {
    for (int64_t d : s)
        if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(s));
}

}  // namespace

NoGradGuard::NoGradGuard() : prev(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = prev; }
bool grad_enabled() { return g_grad_enabled; }

void set_num_threads(int n) { g_num_threads = std::max(1, n); }
int num_threads() { return g_num_threads; }

// --- Tensor basics -------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    check_shape(shape);
    auto n = std::make_shared<detail::Node>();
    n->value.assign(static_cast<size_t>(shape_numel(shape)), 0.0);
    n->shape = std::move(shape);
    n->requires_grad = requires_grad;
    return wrap(std::move(n));
}

Tensor Tensor::full(Shape shape, double v, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::fill(t.raw().begin(), t.raw().end(), v);
    return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
    check_shape(shape);
    if (shape_numel(shape) != static_cast<int64_t>(data.size()))
        throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " +
                         shape_str(shape));
    auto n = std::make_shared<detail::Node>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    n->requires_grad = requires_grad;
    return wrap(std::move(n));
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from({1}, {v}, requires_grad); }

Tensor Tensor::randn(Shape shape, std::mt19937_64& rng, double stdev, bool requires_grad) {
    Tensor t = zeros(std::move(shape), requires_grad);
    std::normal_distribution<double> dist(0.0, stdev);
    for (double& v : t.raw()) v = dist(rng);
    return t;
}

int64_t Tensor::dim(int i) const {
    const int nd = ndim();
    if (i < 0) i += nd;
    if (i < 0 || i >= nd) throw ShapeError("dim index out of range");
    return node_->shape[static_cast<size_t>(i)];
}

double Tensor::item() const {
    if (numel() != 1) throw ShapeError("item() requires a scalar, got " + shape_str(shape()));
    return node_->value[0];
}

void Tensor::set_requires_grad(bool b) {
    if (!node_->is_leaf) throw Error("requires_grad can only be toggled on leaf tensors");
    node_->requires_grad = b;
}

const std::vector<double>& Tensor::grad() const {
    node_->ensure_grad();
    return node_->grad;
}

void Tensor::zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
}

Tensor Tensor::detached() const { return from(shape(), data(), false); }

// --- op helpers ----------------------------------------------------------------

namespace detail {

// Creates the result node of an op over the given parents. Graph edges and the
// backward closure are recorded only when grad mode is on and some parent
// requires grad.
Tensor make_op(Shape shape, std::vector<Tensor> parents, std::function<void(Node&)> backward_fn) {
    auto n = std::make_shared<Node>();
    n->shape = std::move(shape);
    n->value.assign(static_cast<size_t>(shape_numel(n->shape)), 0.0);
    bool needs = false;
    if (g_grad_enabled)
        for (const auto& p : parents) needs = needs || p.node()->requires_grad;
    if (needs) {
        n->requires_grad = true;
        n->is_leaf = false;
        for (auto& p : parents) n->parents.push_back(p.node());
        n->backward_fn = std::move(backward_fn);
    }
    return Tensor::wrap(std::move(n));
}

}  // namespace detail

using detail::Node;
using detail::make_op;

// --- elementwise ----------------------------------------------------------------

namespace {

enum class BroadcastKind { Same, Scalar, LastDim };

BroadcastKind classify_broadcast(const Tensor& a, const Tensor& b, const char* op, bool allow_lastdim) {
    if (a.shape() == b.shape()) return BroadcastKind::Same;
    if (b.numel() == 1) return BroadcastKind::Scalar;
    if (allow_lastdim && b.ndim() == 1 && b.dim(0) == a.dim(-1)) return BroadcastKind::LastDim;
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
}

Tensor pointwise(const Tensor& a, double (*fwd)(double), double (*dfd)(double), const char* /*name*/) {
    Tensor out = make_op(a.shape(), {a}, nullptr);
    Node* an = a.node().get();
    Node* on = out.node().get();
    const size_t n = an->value.size();
    for (size_t i = 0; i < n; ++i) on->value[i] = fwd(an->value[i]);
    if (on->requires_grad) {
        on->backward_fn = [an, dfd](Node& self) {
            an->ensure_grad();
            for (size_t i = 0; i < self.value.size(); ++i)
                an->grad[i] += self.grad[i] * dfd(an->value[i]);
        };
    }
    return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    const auto kind = classify_broadcast(a, b, "add", true);
    Tensor out = make_op(a.shape(), {a, b}, nullptr);
    Node* an = a.node().get();
    Node* bn = b.node().get();
    Node* on = out.node().get();
    const size_t n = an->value.size();
    if (kind == BroadcastKind::Same) {
        for (size_t i = 0; i < n; ++i) on->value[i] = an->value[i] + bn->value[i];
    } else if (kind == BroadcastKind::Scalar) {
        const double s = bn->value[0];
        for (size_t i = 0; i < n; ++i) on->value[i] = an->value[i] + s;
    } else {
        const size_t d = bn->value.size();
        for (size_t i = 0; i < n; ++i) on->value[i] = an->value[i] + bn->value[i % d];
    }
    if (on->requires_grad) {
        on->backward_fn = [an, bn, kind](Node& self) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                if (kind == BroadcastKind::Same) {
                    for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] += self.grad[i];
                } else if (kind == BroadcastKind::Scalar) {
                    double acc = 0.0;
                    for (double g : self.grad) acc += g;
                    bn->grad[0] += acc;
                } else {
                    const size_t d = bn->value.size();
                    for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i % d] += self.grad[i];
                }
            }
        };
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    const auto kind = classify_broadcast(a, b, "sub", true);
    Tensor out = make_op(a.shape(), {a, b}, nullptr);
    Node* an = a.node().get();
    Node* bn = b.node().get();
    Node* on = out.node().get();
    const size_t n = an->value.size();
    if (kind == BroadcastKind::Same) {
        for (size_t i = 0; i < n; ++i) on->value[i] = an->value[i] - bn->value[i];
    } else if (kind == BroadcastKind::Scalar) {
        const double s = bn->value[0];
        for (size_t i = 0; i < n; ++i) on->value[i] = an->value[i] - s;
    } else {
        const size_t d = bn->value.size();
        for (size_t i = 0; i < n; ++i) on->value[i] = an->value[i] - bn->value[i % d];
    }
    if (on->requires_grad) {
        on->backward_fn = [an, bn, kind](Node& self) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                if (kind == BroadcastKind::Same) {
                    for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i] -= self.grad[i];
                } else if (kind == BroadcastKind::Scalar) {
                    double acc = 0.0;
                    for (double g : self.grad) acc += g;
                    bn->grad[0] -= acc;
                } else {
                    const size_t d = bn->value.size();
                    for (size_t i = 0; i < self.grad.size(); ++i) bn->grad[i % d] -= self.grad[i];
                }
            }
        };
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    const auto kind = classify_broadcast(a, b, "mul", false);
    Tensor out = make_op(a.shape(), {a, b}, nullptr);
    Node* an = a.node().get();
    Node* bn = b.node().get();
    Node* on = out.node().get();
    const size_t n = an->value.size();
    if (kind == BroadcastKind::Same) {
        for (size_t i = 0; i < n; ++i) on->value[i] = an->value[i] * bn->value[i];
    } else {
        const double s = bn->value[0];
        for (size_t i = 0; i < n; ++i) on->value[i] = an->value[i] * s;
    }
    if (on->requires_grad) {
        on->backward_fn = [an, bn, kind](Node& self) {
            if (an->requires_grad) {
                an->ensure_grad();
                if (kind == BroadcastKind::Same) {
                    for (size_t i = 0; i < self.grad.size(); ++i)
                        an->grad[i] += self.grad[i] * bn->value[i];
                } else {
                    const double s = bn->value[0];
                    for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * s;
                }
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                if (kind == BroadcastKind::Same) {
                    for (size_t i = 0; i < self.grad.size(); ++i)
                        bn->grad[i] += self.grad[i] * an->value[i];
                } else {
                    double acc = 0.0;
                    for (size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * an->value[i];
                    bn->grad[0] += acc;
                }
            }
        };
    }
    return out;
}

Tensor scale(const Tensor& a, double s) {
    Tensor out = make_op(a.shape(), {a}, nullptr);
    Node* an = a.node().get();
    Node* on = out.node().get();
    for (size_t i = 0; i < an->value.size(); ++i) on->value[i] = an->value[i] * s;
    if (on->requires_grad) {
        on->backward_fn = [an, s](Node& self) {
            an->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i] * s;
        };
    }
    return out;
}

Tensor relu(const Tensor& a) {
    return pointwise(
        a, [](double x) { return x > 0.0 ? x : 0.0; }, [](double x) { return x > 0.0 ? 1.0 : 0.0; },
        "relu");
}

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
}  // namespace

Tensor gelu(const Tensor& a) {
    return pointwise(
        a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2)); },
        [](double x) {
            return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) +
                   x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
        },
        "gelu");
}

Tensor sigmoid(const Tensor& a) {
    Tensor out = make_op(a.shape(), {a}, nullptr);
    Node* an = a.node().get();
    Node* on = out.node().get();
    for (size_t i = 0; i < an->value.size(); ++i) {
        const double x = an->value[i];
        on->value[i] = x >= 0.0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
    }
    if (on->requires_grad) {
        on->backward_fn = [an](Node& self) {
            an->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) {
                const double y = self.value[i];
                an->grad[i] += self.grad[i] * y * (1.0 - y);
            }
        };
    }
    return out;
}

Tensor exp(const Tensor& a) {
    Tensor out = make_op(a.shape(), {a}, nullptr);
    Node* an = a.node().get();
    Node* on = out.node().get();
    for (size_t i = 0; i < an->value.size(); ++i) on->value[i] = std::exp(an->value[i]);
    if (on->requires_grad) {
        on->backward_fn = [an](Node& self) {
            an->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i)
                an->grad[i] += self.grad[i] * self.value[i];
        };
    }
    return out;
}

Tensor log(const Tensor& a) {
    return pointwise(
        a, [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; }, "log");
}

// --- reductions -----------------------------------------------------------------

Tensor sum(const Tensor& a) {
    Tensor out = make_op({1}, {a}, nullptr);
    Node* an = a.node().get();
    Node* on = out.node().get();
    double acc = 0.0;
    for (double v : an->value) acc += v;
    on->value[0] = acc;
    if (on->requires_grad) {
        on->backward_fn = [an](Node& self) {
            an->ensure_grad();
            const double g = self.grad[0];
            for (double& gv : an->grad) gv += g;
        };
    }
    return out;
}

Tensor mean(const Tensor& a) {
    Tensor out = make_op({1}, {a}, nullptr);
    Node* an = a.node().get();
    Node* on = out.node().get();
    double acc = 0.0;
    for (double v : an->value) acc += v;
    const double inv = 1.0 / static_cast<double>(an->value.size());
    on->value[0] = acc * inv;
    if (on->requires_grad) {
        on->backward_fn = [an, inv](Node& self) {
            an->ensure_grad();
            const double g = self.grad[0] * inv;
            for (double& gv : an->grad) gv += g;
        };
    }
    return out;
}

// --- row-structured ops -----------------------------------------------------------

Tensor softmax(const Tensor& a) {
    const int64_t c = a.dim(-1);
    const int64_t rows = a.numel() / c;
    Tensor out = make_op(a.shape(), {a}, nullptr);
    Node* an = a.node().get();
    Node* on = out.node().get();
    for (int64_t r = 0; r < rows; ++r) {
        const double* x = an->value.data() + r * c;
        double* y = on->value.data() + r * c;
        double m = x[0];
        for (int64_t i = 1; i < c; ++i) m = std::max(m, x[i]);
        double z = 0.0;
        for (int64_t i = 0; i < c; ++i) {
            y[i] = std::exp(x[i] - m);
            z += y[i];
        }
        const double inv = 1.0 / z;
        for (int64_t i = 0; i < c; ++i) y[i] *= inv;
    }
    if (on->requires_grad) {
        on->backward_fn = [an, rows, c](Node& self) {
            an->ensure_grad();
            for (int64_t r = 0; r < rows; ++r) {
                const double* y = self.value.data() + r * c;
                const double* gy = self.grad.data() + r * c;
                double* gx = an->grad.data() + r * c;
                double dot = 0.0;
                for (int64_t i = 0; i < c; ++i) dot += gy[i] * y[i];
                for (int64_t i = 0; i < c; ++i) gx[i] += (gy[i] - dot) * y[i];
            }
        };
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps) {
    const int64_t c = x.dim(-1);
    if (gamma.ndim() != 1 || gamma.dim(0) != c || beta.ndim() != 1 || beta.dim(0) != c)
        throw ShapeError("layer_norm: affine parameters must be [" + std::to_string(c) + "]");
    const int64_t rows = x.numel() / c;
    Tensor out = make_op(x.shape(), {x, gamma, beta}, nullptr);
    Node* xn = x.node().get();
    Node* gn = gamma.node().get();
    Node* bn = beta.node().get();
    Node* on = out.node().get();
    // cache per-row mean and inverse stddev for the backward pass
    auto stats = std::make_shared<std::vector<double>>(static_cast<size_t>(rows) * 2);
    for (int64_t r = 0; r < rows; ++r) {
        const double* xv = xn->value.data() + r * c;
        double* y = on->value.data() + r * c;
        double mu = 0.0;
        for (int64_t i = 0; i < c; ++i) mu += xv[i];
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (int64_t i = 0; i < c; ++i) var += (xv[i] - mu) * (xv[i] - mu);
        var /= static_cast<double>(c);
        const double inv_std = 1.0 / std::sqrt(var + eps);
        (*stats)[2 * r] = mu;
        (*stats)[2 * r + 1] = inv_std;
        for (int64_t i = 0; i < c; ++i)
            y[i] = (xv[i] - mu) * inv_std * gn->value[i] + bn->value[i];
    }
    if (on->requires_grad) {
        on->backward_fn = [xn, gn, bn, stats, rows, c](Node& self) {
            for (int64_t r = 0; r < rows; ++r) {
                const double mu = (*stats)[2 * r];
                const double inv_std = (*stats)[2 * r + 1];
                const double* xv = xn->value.data() + r * c;
                const double* gy = self.grad.data() + r * c;
                if (gn->requires_grad) {
                    gn->ensure_grad();
                    for (int64_t i = 0; i < c; ++i)
                        gn->grad[i] += gy[i] * (xv[i] - mu) * inv_std;
                }
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    for (int64_t i = 0; i < c; ++i) bn->grad[i] += gy[i];
                }
                if (xn->requires_grad) {
                    xn->ensure_grad();
                    double* gx = xn->grad.data() + r * c;
                    double sum_g = 0.0, sum_gx = 0.0;
                    for (int64_t i = 0; i < c; ++i) {
                        const double gi = gy[i] * gn->value[i];
                        const double xhat = (xv[i] - mu) * inv_std;
                        sum_g += gi;
                        sum_gx += gi * xhat;
                    }
                    const double invc = 1.0 / static_cast<double>(c);
                    for (int64_t i = 0; i < c; ++i) {
                        const double gi = gy[i] * gn->value[i];
                        const double xhat = (xv[i] - mu) * inv_std;
                        gx[i] += inv_std * (gi - invc * sum_g - xhat * invc * sum_gx);
                    }
                }
            }
        };
    }
    return out;
}

Tensor cross_entropy_with_logits(const Tensor& logits, const std::vector<int>& targets) {
    const int64_t c = logits.dim(-1);
    const int64_t rows = logits.numel() / c;
    if (static_cast<int64_t>(targets.size()) != rows)
        throw ShapeError("cross_entropy_with_logits: " + std::to_string(targets.size()) +
                         " targets for " + std::to_string(rows) + " rows");
    for (int t : targets)
        if (t < 0 || t >= c) throw DomainError("cross_entropy_with_logits: target id out of range");
    Shape out_shape(logits.shape().begin(), logits.shape().end() - 1);
    if (out_shape.empty()) out_shape = {1};
    Tensor out = make_op(out_shape, {logits}, nullptr);
    Node* ln = logits.node().get();
    Node* on = out.node().get();
    for (int64_t r = 0; r < rows; ++r) {
        const double* x = ln->value.data() + r * c;
        double m = x[0];
        for (int64_t i = 1; i < c; ++i) m = std::max(m, x[i]);
        double z = 0.0;
        for (int64_t i = 0; i < c; ++i) z += std::exp(x[i] - m);
        on->value[r] = m + std::log(z) - x[targets[r]];
    }
    if (on->requires_grad) {
        auto tgt = std::make_shared<std::vector<int>>(targets);
        on->backward_fn = [ln, tgt, rows, c](Node& self) {
            ln->ensure_grad();
            for (int64_t r = 0; r < rows; ++r) {
                const double* x = ln->value.data() + r * c;
                double* gx = ln->grad.data() + r * c;
                const double g = self.grad[r];
                if (g == 0.0) continue;
                double m = x[0];
                for (int64_t i = 1; i < c; ++i) m = std::max(m, x[i]);
                double z = 0.0;
                for (int64_t i = 0; i < c; ++i) z += std::exp(x[i] - m);
                const double inv = 1.0 / z;
                for (int64_t i = 0; i < c; ++i) gx[i] += g * std::exp(x[i] - m) * inv;
                gx[(*tgt)[r]] -= g;
            }
        };
    }
    return out;
}

Tensor gather(const Tensor& a, const std::vector<int>& idx) {
    const int64_t c = a.dim(-1);
    const int64_t rows = a.numel() / c;
    if (static_cast<int64_t>(idx.size()) != rows)
        throw ShapeError("gather: index count does not match row count");
    for (int i : idx)
        if (i < 0 || i >= c) throw DomainError("gather: index out of range");
    Shape out_shape(a.shape().begin(), a.shape().end() - 1);
    if (out_shape.empty()) out_shape = {1};
    Tensor out = make_op(out_shape, {a}, nullptr);
    Node* an = a.node().get();
    Node* on = out.node().get();
    for (int64_t r = 0; r < rows; ++r) on->value[r] = an->value[r * c + idx[r]];
    if (on->requires_grad) {
        auto ids = std::make_shared<std::vector<int>>(idx);
        on->backward_fn = [an, ids, rows, c](Node& self) {
            an->ensure_grad();
            for (int64_t r = 0; r < rows; ++r) an->grad[r * c + (*ids)[r]] += self.grad[r];
        };
    }
    return out;
}

Tensor masked_fill(const Tensor& a, const std::vector<uint8_t>& mask, double value) {
    if (static_cast<int64_t>(mask.size()) != a.numel())
        throw ShapeError("masked_fill: mask length does not match tensor");
    Tensor out = make_op(a.shape(), {a}, nullptr);
    Node* an = a.node().get();
    Node* on = out.node().get();
    for (size_t i = 0; i < an->value.size(); ++i)
        on->value[i] = mask[i] ? value : an->value[i];
    if (on->requires_grad) {
        auto m = std::make_shared<std::vector<uint8_t>>(mask);
        on->backward_fn = [an, m](Node& self) {
            an->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i)
                if (!(*m)[i]) an->grad[i] += self.grad[i];
        };
    }
    return out;
}

// --- backward -------------------------------------------------------------------

void backward(const Tensor& loss) {
    if (loss.numel() != 1) throw ShapeError("backward: loss must be a scalar, got " + shape_str(loss.shape()));
    if (!loss.node()->requires_grad) return;

    // iterative post-order DFS for the topological order
    std::vector<Node*> order;
    std::unordered_set<Node*> visited;
    struct Frame {
        Node* n;
        size_t next_parent;
    };
    std::vector<Frame> stack{{loss.node().get(), 0}};
    visited.insert(loss.node().get());
    while (!stack.empty()) {
        Frame& f = stack.back();
        if (f.next_parent < f.n->parents.size()) {
            Node* p = f.n->parents[f.next_parent++].get();
            if (p->requires_grad && visited.insert(p).second) stack.push_back({p, 0});
        } else {
            order.push_back(f.n);
            stack.pop_back();
        }
    }

    // intermediate grads are scratch; leaves accumulate across calls
    for (Node* n : order)
        if (!n->is_leaf) n->grad.assign(n->value.size(), 0.0);
    Node* root = loss.node().get();
    root->ensure_grad();
    root->grad[0] += 1.0;

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
    }
}

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps) {
    if (!(eps > 0.0)) throw DomainError("grad_check: eps must be positive");
    x.set_requires_grad(true);
    x.zero_grad();

    Tensor y = f(x);
    if (y.numel() != 1) throw ShapeError("grad_check: f must return a scalar");
    {
        NoGradGuard ng;
        Tensor y2 = f(x);
        if (std::memcmp(y.data().data(), y2.data().data(), sizeof(double)) != 0)
            throw NumericError("grad_check: f is not deterministic");
    }
    backward(y);
    std::vector<double> analytic = x.grad();

    double max_rel = 0.0;
    NoGradGuard ng;
    auto& xv = x.raw();
    for (size_t i = 0; i < xv.size(); ++i) {
        const double keep = xv[i];
        xv[i] = keep + eps;
        const double fp = f(x).item();
        xv[i] = keep - eps;
        const double fm = f(x).item();
        xv[i] = keep;
        const double numeric = (fp - fm) / (2.0 * eps);
        const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-8});
        max_rel = std::max(max_rel, std::abs(analytic[i] - numeric) / denom);
    }
    return max_rel;
}

}  // namespace vecfont
