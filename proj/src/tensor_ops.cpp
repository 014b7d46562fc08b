#include <Eigen/Dense>
#include <algorithm>
#include <cstring>
#include <memory>

#include "vecfont/tensor.hpp"

namespace vecfont {

using detail::Node;
using detail::make_op;

namespace {

using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;

// Row-parallel GEMM wrappers. Each output row block is computed by one
// sequential Eigen kernel, so results do not depend on the thread count.
constexpr int64_t kParallelFlops = 1 << 18;

void gemm_nn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
             bool accumulate) {
    CMap A(a, m, k), B(b, k, n);
    MMap C(c, m, n);
    const int nt = num_threads();
    if (nt > 1 && 2 * m * k * n >= kParallelFlops && m >= nt) {
#pragma omp parallel for schedule(static) num_threads(nt)
        for (int t = 0; t < nt; ++t) {
            const int64_t r0 = m * t / nt, r1 = m * (t + 1) / nt;
            if (accumulate)
                C.middleRows(r0, r1 - r0).noalias() += A.middleRows(r0, r1 - r0) * B;
            else
                C.middleRows(r0, r1 - r0).noalias() = A.middleRows(r0, r1 - r0) * B;
        }
        return;
    }
    if (accumulate)
        C.noalias() += A * B;
    else
        C.noalias() = A * B;
}

// c [m,n] (+)= a [m,k] * b[n,k]^T
void gemm_nt(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
             bool accumulate) {
    CMap A(a, m, k), B(b, n, k);
    MMap C(c, m, n);
    const int nt = num_threads();
    if (nt > 1 && 2 * m * k * n >= kParallelFlops && m >= nt) {
#pragma omp parallel for schedule(static) num_threads(nt)
        for (int t = 0; t < nt; ++t) {
            const int64_t r0 = m * t / nt, r1 = m * (t + 1) / nt;
            if (accumulate)
                C.middleRows(r0, r1 - r0).noalias() += A.middleRows(r0, r1 - r0) * B.transpose();
            else
                C.middleRows(r0, r1 - r0).noalias() = A.middleRows(r0, r1 - r0) * B.transpose();
        }
        return;
    }
    if (accumulate)
        C.noalias() += A * B.transpose();
    else
        C.noalias() = A * B.transpose();
}

// c [m,n] (+)= a [k,m]^T * b [k,n]
void gemm_tn(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n,
             bool accumulate) {
    CMap A(a, k, m), B(b, k, n);
    MMap C(c, m, n);
    const int nt = num_threads();
    if (nt > 1 && 2 * m * k * n >= kParallelFlops && m >= nt) {
#pragma omp parallel for schedule(static) num_threads(nt)
        for (int t = 0; t < nt; ++t) {
            const int64_t r0 = m * t / nt, r1 = m * (t + 1) / nt;
            if (accumulate)
                C.middleRows(r0, r1 - r0).noalias() +=
                    A.middleCols(r0, r1 - r0).transpose() * B;
            else
                C.middleRows(r0, r1 - r0).noalias() = A.middleCols(r0, r1 - r0).transpose() * B;
        }
        return;
    }
    if (accumulate)
        C.noalias() += A.transpose() * B;
    else
        C.noalias() = A.transpose() * B;
}

}  // namespace

// --- matmul -------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() < 1 || b.ndim() < 2)
        throw ShapeError("matmul: need at least [.,k] x [k,n], got " + shape_str(a.shape()) +
                         " and " + shape_str(b.shape()));

    if (b.ndim() == 2) {
        const int64_t k = a.dim(-1);
        if (b.dim(0) != k)
            throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
        const int64_t n = b.dim(1);
        const int64_t m = a.numel() / k;
        Shape out_shape(a.shape().begin(), a.shape().end() - 1);
        out_shape.push_back(n);
        Tensor out = make_op(out_shape, {a, b}, nullptr);
        Node* an = a.node().get();
        Node* bn = b.node().get();
        Node* on = out.node().get();
        gemm_nn(an->value.data(), bn->value.data(), on->value.data(), m, k, n, false);
        if (on->requires_grad) {
            on->backward_fn = [an, bn, m, k, n](Node& self) {
                if (an->requires_grad) {
                    an->ensure_grad();
                    gemm_nt(self.grad.data(), bn->value.data(), an->grad.data(), m, n, k, true);
                }
                if (bn->requires_grad) {
                    bn->ensure_grad();
                    gemm_tn(an->value.data(), self.grad.data(), bn->grad.data(), k, m, n, true);
                }
            };
        }
        return out;
    }

    // batched: identical leading dims
    if (a.ndim() != b.ndim() || a.ndim() < 3)
        throw ShapeError("matmul: batched operands need equal rank >= 3, got " +
                         shape_str(a.shape()) + " and " + shape_str(b.shape()));
    for (int i = 0; i + 2 < a.ndim(); ++i)
        if (a.shape()[i] != b.shape()[i])
            throw ShapeError("matmul: batch dims differ, " + shape_str(a.shape()) + " x " +
                             shape_str(b.shape()));
    const int64_t m = a.dim(-2), k = a.dim(-1), n = b.dim(-1);
    if (b.dim(-2) != k)
        throw ShapeError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
    const int64_t batch = a.numel() / (m * k);
    Shape out_shape(a.shape().begin(), a.shape().end() - 1);
    out_shape.back() = m;  // leading dims + m
    out_shape.push_back(n);
    Tensor out = make_op(out_shape, {a, b}, nullptr);
    Node* an = a.node().get();
    Node* bn = b.node().get();
    Node* on = out.node().get();
    const int nt = num_threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1 && batch > 1)
    for (int64_t i = 0; i < batch; ++i)
        gemm_nn(an->value.data() + i * m * k, bn->value.data() + i * k * n,
                on->value.data() + i * m * n, m, k, n, false);
    if (on->requires_grad) {
        on->backward_fn = [an, bn, batch, m, k, n](Node& self) {
            if (an->requires_grad) an->ensure_grad();
            if (bn->requires_grad) bn->ensure_grad();
            const int nthr = num_threads();
#pragma omp parallel for schedule(static) num_threads(nthr) if (nthr > 1 && batch > 1)
            for (int64_t i = 0; i < batch; ++i) {
                if (an->requires_grad)
                    gemm_nt(self.grad.data() + i * m * n, bn->value.data() + i * k * n,
                            an->grad.data() + i * m * k, m, n, k, true);
                if (bn->requires_grad)
                    gemm_tn(an->value.data() + i * m * k, self.grad.data() + i * m * n,
                            bn->grad.data() + i * k * n, k, m, n, true);
            }
        };
    }
    return out;
}

// --- layout ops ------------------------------------------------------------------

Tensor reshape(const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel())
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    Tensor out = make_op(shape, {a}, nullptr);
    Node* an = a.node().get();
    Node* on = out.node().get();
    on->value = an->value;
    if (on->requires_grad) {
        on->backward_fn = [an](Node& self) {
            an->ensure_grad();
            for (size_t i = 0; i < self.grad.size(); ++i) an->grad[i] += self.grad[i];
        };
    }
    return out;
}

Tensor transpose(const Tensor& a, int axis0, int axis1) {
    const int nd = a.ndim();
    if (axis0 < 0) axis0 += nd;
    if (axis1 < 0) axis1 += nd;
    if (axis0 < 0 || axis0 >= nd || axis1 < 0 || axis1 >= nd)
        throw ShapeError("transpose: axis out of range for " + shape_str(a.shape()));
    if (axis0 == axis1) return reshape(a, a.shape());

    Shape out_shape = a.shape();
    std::swap(out_shape[axis0], out_shape[axis1]);
    Tensor out = make_op(out_shape, {a}, nullptr);
    Node* an = a.node().get();
    Node* on = out.node().get();

    std::vector<int64_t> in_strides(nd, 1), perm_strides(nd);
    for (int i = nd - 2; i >= 0; --i) in_strides[i] = in_strides[i + 1] * a.shape()[i + 1];
    for (int i = 0; i < nd; ++i) perm_strides[i] = in_strides[i];
    std::swap(perm_strides[axis0], perm_strides[axis1]);

    const int64_t n = a.numel();
    auto out_to_in = std::make_shared<std::vector<int64_t>>(static_cast<size_t>(n));
    {
        std::vector<int64_t> idx(nd, 0);
        for (int64_t o = 0; o < n; ++o) {
            int64_t src = 0;
            for (int i = 0; i < nd; ++i) src += idx[i] * perm_strides[i];
            (*out_to_in)[o] = src;
            for (int i = nd - 1; i >= 0; --i) {
                if (++idx[i] < out_shape[i]) break;
                idx[i] = 0;
            }
        }
    }
    for (int64_t o = 0; o < n; ++o) on->value[o] = an->value[(*out_to_in)[o]];
    if (on->requires_grad) {
        on->backward_fn = [an, out_to_in](Node& self) {
            an->ensure_grad();
            for (size_t o = 0; o < self.grad.size(); ++o)
                an->grad[(*out_to_in)[o]] += self.grad[o];
        };
    }
    return out;
}

namespace {

// axis split of a shape into [outer, dim, inner]
void axis_split(const Shape& s, int axis, int64_t& outer, int64_t& dim, int64_t& inner) {
    outer = 1;
    inner = 1;
    for (int i = 0; i < axis; ++i) outer *= s[i];
    dim = s[axis];
    for (size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
}

}  // namespace

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const int nd = parts[0].ndim();
    if (axis < 0) axis += nd;
    if (axis < 0 || axis >= nd) throw ShapeError("concat: axis out of range");
    Shape out_shape = parts[0].shape();
    int64_t total = 0;
    for (const auto& p : parts) {
        if (p.ndim() != nd) throw ShapeError("concat: rank mismatch");
        for (int i = 0; i < nd; ++i)
            if (i != axis && p.shape()[i] != out_shape[i])
                throw ShapeError("concat: shape mismatch at " + shape_str(p.shape()));
        total += p.shape()[axis];
    }
    out_shape[axis] = total;

    Tensor out = make_op(out_shape, parts, nullptr);
    Node* on = out.node().get();
    int64_t outer, dim_total, inner;
    axis_split(out_shape, axis, outer, dim_total, inner);

    int64_t offset = 0;
    std::vector<Node*> pn;
    std::vector<int64_t> pdim, poff;
    for (const auto& p : parts) {
        int64_t po, pd, pi;
        axis_split(p.shape(), axis, po, pd, pi);
        pn.push_back(p.node().get());
        pdim.push_back(pd);
        poff.push_back(offset);
        for (int64_t o = 0; o < outer; ++o)
            std::memcpy(on->value.data() + (o * dim_total + offset) * inner,
                        p.data().data() + o * pd * inner,
                        static_cast<size_t>(pd * inner) * sizeof(double));
        offset += pd;
    }
    if (on->requires_grad) {
        on->backward_fn = [pn, pdim, poff, outer, dim_total, inner](Node& self) {
            for (size_t q = 0; q < pn.size(); ++q) {
                if (!pn[q]->requires_grad) continue;
                pn[q]->ensure_grad();
                for (int64_t o = 0; o < outer; ++o) {
                    const double* src = self.grad.data() + (o * dim_total + poff[q]) * inner;
                    double* dst = pn[q]->grad.data() + o * pdim[q] * inner;
                    for (int64_t i = 0; i < pdim[q] * inner; ++i) dst[i] += src[i];
                }
            }
        };
    }
    return out;
}

Tensor slice(const Tensor& a, int axis, int64_t start, int64_t end) {
    const int nd = a.ndim();
    if (axis < 0) axis += nd;
    if (axis < 0 || axis >= nd) throw ShapeError("slice: axis out of range");
    const int64_t d = a.shape()[axis];
    if (start < 0 || end > d || start >= end)
        throw ShapeError("slice: bad range [" + std::to_string(start) + "," + std::to_string(end) +
                         ") for axis of size " + std::to_string(d));
    Shape out_shape = a.shape();
    out_shape[axis] = end - start;
    Tensor out = make_op(out_shape, {a}, nullptr);
    Node* an = a.node().get();
    Node* on = out.node().get();
    int64_t outer, dim, inner;
    axis_split(a.shape(), axis, outer, dim, inner);
    const int64_t od = end - start;
    for (int64_t o = 0; o < outer; ++o)
        std::memcpy(on->value.data() + o * od * inner,
                    an->value.data() + (o * dim + start) * inner,
                    static_cast<size_t>(od * inner) * sizeof(double));
    if (on->requires_grad) {
        on->backward_fn = [an, outer, dim, inner, od, start](Node& self) {
            an->ensure_grad();
            for (int64_t o = 0; o < outer; ++o) {
                const double* src = self.grad.data() + o * od * inner;
                double* dst = an->grad.data() + (o * dim + start) * inner;
                for (int64_t i = 0; i < od * inner; ++i) dst[i] += src[i];
            }
        };
    }
    return out;
}

Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids, const Shape& id_shape) {
    if (table.ndim() != 2) throw ShapeError("embedding_lookup: table must be 2-D");
    if (shape_numel(id_shape) != static_cast<int64_t>(ids.size()))
        throw ShapeError("embedding_lookup: id count does not match id_shape");
    const int64_t v = table.dim(0), d = table.dim(1);
    for (int id : ids)
        if (id < 0 || id >= v) throw DomainError("embedding_lookup: id out of range");
    Shape out_shape = id_shape;
    out_shape.push_back(d);
    Tensor out = make_op(out_shape, {table}, nullptr);
    Node* tn = table.node().get();
    Node* on = out.node().get();
    for (size_t r = 0; r < ids.size(); ++r)
        std::memcpy(on->value.data() + r * d, tn->value.data() + static_cast<int64_t>(ids[r]) * d,
                    static_cast<size_t>(d) * sizeof(double));
    if (on->requires_grad) {
        auto idv = std::make_shared<std::vector<int>>(ids);
        on->backward_fn = [tn, idv, d](Node& self) {
            tn->ensure_grad();
            for (size_t r = 0; r < idv->size(); ++r) {
                const double* src = self.grad.data() + r * d;
                double* dst = tn->grad.data() + static_cast<int64_t>((*idv)[r]) * d;
                for (int64_t i = 0; i < d; ++i) dst[i] += src[i];
            }
        };
    }
    return out;
}

// --- convolutions -----------------------------------------------------------------

namespace {

// Patches of src [C,H,W] on the (OH,OW) output grid -> cols [C*kh*kw, OH*OW].
void im2col(const double* src, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw, int64_t s,
            int64_t p, int64_t OH, int64_t OW, double* cols) {
    const int64_t plane = OH * OW;
    for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < kh; ++i)
            for (int64_t j = 0; j < kw; ++j) {
                double* row = cols + ((c * kh + i) * kw + j) * plane;
                for (int64_t oh = 0; oh < OH; ++oh) {
                    const int64_t y = oh * s + i - p;
                    if (y < 0 || y >= H) {
                        std::fill(row + oh * OW, row + (oh + 1) * OW, 0.0);
                        continue;
                    }
                    for (int64_t ow = 0; ow < OW; ++ow) {
                        const int64_t x = ow * s + j - p;
                        row[oh * OW + ow] = (x >= 0 && x < W) ? src[(c * H + y) * W + x] : 0.0;
                    }
                }
            }
}

// Adjoint of im2col: scatter-add cols back into dst [C,H,W].
void col2im_add(const double* cols, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
                int64_t s, int64_t p, int64_t OH, int64_t OW, double* dst) {
    const int64_t plane = OH * OW;
    for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < kh; ++i)
            for (int64_t j = 0; j < kw; ++j) {
                const double* row = cols + ((c * kh + i) * kw + j) * plane;
                for (int64_t oh = 0; oh < OH; ++oh) {
                    const int64_t y = oh * s + i - p;
                    if (y < 0 || y >= H) continue;
                    for (int64_t ow = 0; ow < OW; ++ow) {
                        const int64_t x = ow * s + j - p;
                        if (x >= 0 && x < W) dst[(c * H + y) * W + x] += row[oh * OW + ow];
                    }
                }
            }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int padding) {
    if (x.ndim() != 4 || w.ndim() != 4)
        throw ShapeError("conv2d: x and w must be 4-D, got " + shape_str(x.shape()) + " and " +
                         shape_str(w.shape()));
    const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t F = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (w.dim(1) != C)
        throw ShapeError("conv2d: channel mismatch, " + shape_str(x.shape()) + " vs " +
                         shape_str(w.shape()));
    if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != F))
        throw ShapeError("conv2d: bias must be [F]");
    const int64_t OH = (H + 2 * padding - kh) / stride + 1;
    const int64_t OW = (W + 2 * padding - kw) / stride + 1;
    if (OH <= 0 || OW <= 0) throw ShapeError("conv2d: kernel larger than padded input");

    std::vector<Tensor> parents{x, w};
    if (bias.defined()) parents.push_back(bias);
    Tensor out = make_op({B, F, OH, OW}, parents, nullptr);
    Node* xn = x.node().get();
    Node* wn = w.node().get();
    Node* bn = bias.defined() ? bias.node().get() : nullptr;
    Node* on = out.node().get();

    const int64_t ckk = C * kh * kw;
    const int64_t plane = OH * OW;
    auto cols_all = std::make_shared<std::vector<double>>(static_cast<size_t>(B * ckk * plane));
    const int nt = num_threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1 && B > 1)
    for (int64_t b = 0; b < B; ++b) {
        double* cols = cols_all->data() + b * ckk * plane;
        im2col(xn->value.data() + b * C * H * W, C, H, W, kh, kw, stride, padding, OH, OW, cols);
        gemm_nn(wn->value.data(), cols, on->value.data() + b * F * plane, F, ckk, plane, false);
        if (bn)
            for (int64_t f = 0; f < F; ++f) {
                double* o = on->value.data() + (b * F + f) * plane;
                const double bv = bn->value[f];
                for (int64_t i = 0; i < plane; ++i) o[i] += bv;
            }
    }

    if (on->requires_grad) {
        const int64_t CHW = C * H * W;
        on->backward_fn = [=](Node& self) {
            std::vector<double> dcols(static_cast<size_t>(ckk * plane));
            for (int64_t b = 0; b < B; ++b) {
                const double* dout = self.grad.data() + b * F * plane;
                const double* cols = cols_all->data() + b * ckk * plane;
                if (wn->requires_grad) {
                    wn->ensure_grad();
                    gemm_nt(dout, cols, wn->grad.data(), F, plane, ckk, true);
                }
                if (bn && bn->requires_grad) {
                    bn->ensure_grad();
                    for (int64_t f = 0; f < F; ++f) {
                        double acc = 0.0;
                        for (int64_t i = 0; i < plane; ++i) acc += dout[f * plane + i];
                        bn->grad[f] += acc;
                    }
                }
                if (xn->requires_grad) {
                    xn->ensure_grad();
                    gemm_tn(wn->value.data(), dout, dcols.data(), ckk, F, plane, false);
                    col2im_add(dcols.data(), C, H, W, kh, kw, stride, padding, OH, OW,
                               xn->grad.data() + b * CHW);
                }
            }
        };
    }
    return out;
}

Tensor transposed_conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride,
                         int padding) {
    if (x.ndim() != 4 || w.ndim() != 4)
        throw ShapeError("transposed_conv2d: x and w must be 4-D, got " + shape_str(x.shape()) +
                         " and " + shape_str(w.shape()));
    const int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t F = w.dim(1), kh = w.dim(2), kw = w.dim(3);
    if (w.dim(0) != C)
        throw ShapeError("transposed_conv2d: channel mismatch, " + shape_str(x.shape()) + " vs " +
                         shape_str(w.shape()));
    if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != F))
        throw ShapeError("transposed_conv2d: bias must be [F]");
    const int64_t OH = (H - 1) * stride - 2 * padding + kh;
    const int64_t OW = (W - 1) * stride - 2 * padding + kw;
    if (OH <= 0 || OW <= 0) throw ShapeError("transposed_conv2d: empty output");

    std::vector<Tensor> parents{x, w};
    if (bias.defined()) parents.push_back(bias);
    Tensor out = make_op({B, F, OH, OW}, parents, nullptr);
    Node* xn = x.node().get();
    Node* wn = w.node().get();
    Node* bn = bias.defined() ? bias.node().get() : nullptr;
    Node* on = out.node().get();

    const int64_t fkk = F * kh * kw;
    const int64_t plane = H * W;     // input grid plays the role of the conv output grid
    const int64_t oplane = OH * OW;
    const int nt = num_threads();
#pragma omp parallel for schedule(static) num_threads(nt) if (nt > 1 && B > 1)
    for (int64_t b = 0; b < B; ++b) {
        std::vector<double> cols(static_cast<size_t>(fkk * plane));
        gemm_tn(wn->value.data(), xn->value.data() + b * C * plane, cols.data(), fkk, C, plane,
                false);
        double* o = on->value.data() + b * F * oplane;
        col2im_add(cols.data(), F, OH, OW, kh, kw, stride, padding, H, W, o);
        if (bn)
            for (int64_t f = 0; f < F; ++f) {
                const double bv = bn->value[f];
                for (int64_t i = 0; i < oplane; ++i) o[f * oplane + i] += bv;
            }
    }

    if (on->requires_grad) {
        on->backward_fn = [=](Node& self) {
            std::vector<double> dcols(static_cast<size_t>(fkk * plane));
            for (int64_t b = 0; b < B; ++b) {
                const double* dout = self.grad.data() + b * F * oplane;
                im2col(dout, F, OH, OW, kh, kw, stride, padding, H, W, dcols.data());
                if (xn->requires_grad) {
                    xn->ensure_grad();
                    gemm_nn(wn->value.data(), dcols.data(), xn->grad.data() + b * C * plane, C,
                            fkk, plane, true);
                }
                if (wn->requires_grad) {
                    wn->ensure_grad();
                    gemm_nt(xn->value.data() + b * C * plane, dcols.data(), wn->grad.data(), C,
                            plane, fkk, true);
                }
                if (bn && bn->requires_grad) {
                    bn->ensure_grad();
                    for (int64_t f = 0; f < F; ++f) {
                        double acc = 0.0;
                        for (int64_t i = 0; i < oplane; ++i) acc += dout[f * oplane + i];
                        bn->grad[f] += acc;
                    }
                }
            }
        };
    }
    return out;
}

}  // namespace vecfont
