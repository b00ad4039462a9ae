#include "maskforge/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <stdexcept>
#include <string>

namespace maskforge::ops {

namespace {

void require_same_shape(const char* op, const TensorPtr& a, const TensorPtr& b) {
    if (a->shape != b->shape) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a->shape) +
                                    " vs " + shape_str(b->shape));
    }
}

TensorPtr out_like(const std::vector<int>& shape, bool requires_grad) {
    return Tensor::zeros(shape, requires_grad);
}

}  // namespace

void gemm_nn(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = b + static_cast<std::size_t>(j) * k;
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n) {
    for (int p = 0; p < k; ++p) {
        const double* arow = a + static_cast<std::size_t>(p) * m;
        const double* brow = b + static_cast<std::size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* crow = c + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    require_same_shape("add", a, b);
    auto out = out_like(a->shape, a->requires_grad || b->requires_grad);
    for (std::size_t i = 0; i < out->values.size(); ++i) out->values[i] = a->values[i] + b->values[i];
    if (out->requires_grad) {
        tape.record([a, b, out] {
            if (a->requires_grad)
                for (std::size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i];
            if (b->requires_grad)
                for (std::size_t i = 0; i < out->grad.size(); ++i) b->grad[i] += out->grad[i];
        });
    }
    return out;
}

TensorPtr sub(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    require_same_shape("sub", a, b);
    auto out = out_like(a->shape, a->requires_grad || b->requires_grad);
    for (std::size_t i = 0; i < out->values.size(); ++i) out->values[i] = a->values[i] - b->values[i];
    if (out->requires_grad) {
        tape.record([a, b, out] {
            if (a->requires_grad)
                for (std::size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i];
            if (b->requires_grad)
                for (std::size_t i = 0; i < out->grad.size(); ++i) b->grad[i] -= out->grad[i];
        });
    }
    return out;
}

TensorPtr mul(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    require_same_shape("mul_elementwise", a, b);
    auto out = out_like(a->shape, a->requires_grad || b->requires_grad);
    for (std::size_t i = 0; i < out->values.size(); ++i) out->values[i] = a->values[i] * b->values[i];
    if (out->requires_grad) {
        tape.record([a, b, out] {
            if (a->requires_grad)
                for (std::size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i] * b->values[i];
            if (b->requires_grad)
                for (std::size_t i = 0; i < out->grad.size(); ++i) b->grad[i] += out->grad[i] * a->values[i];
        });
    }
    return out;
}

TensorPtr add_const(Tape& tape, const TensorPtr& a, const std::vector<double>& c) {
    if (c.size() != a->values.size()) {
        throw std::invalid_argument("add_const: constant size " + std::to_string(c.size()) +
                                    " vs tensor " + shape_str(a->shape));
    }
    auto out = out_like(a->shape, a->requires_grad);
    for (std::size_t i = 0; i < out->values.size(); ++i) out->values[i] = a->values[i] + c[i];
    if (out->requires_grad) {
        tape.record([a, out] {
            for (std::size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i];
        });
    }
    return out;
}

TensorPtr mul_const(Tape& tape, const TensorPtr& a, const std::vector<double>& c) {
    if (c.size() != a->values.size()) {
        throw std::invalid_argument("mul_const: constant size " + std::to_string(c.size()) +
                                    " vs tensor " + shape_str(a->shape));
    }
    auto out = out_like(a->shape, a->requires_grad);
    for (std::size_t i = 0; i < out->values.size(); ++i) out->values[i] = a->values[i] * c[i];
    if (out->requires_grad) {
        auto cc = c;  // keep the coefficients alive
        tape.record([a, out, cc = std::move(cc)] {
            for (std::size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += out->grad[i] * cc[i];
        });
    }
    return out;
}

TensorPtr scale(Tape& tape, const TensorPtr& a, double s) {
    auto out = out_like(a->shape, a->requires_grad);
    for (std::size_t i = 0; i < out->values.size(); ++i) out->values[i] = s * a->values[i];
    if (out->requires_grad) {
        tape.record([a, out, s] {
            for (std::size_t i = 0; i < out->grad.size(); ++i) a->grad[i] += s * out->grad[i];
        });
    }
    return out;
}

TensorPtr matmul(Tape& tape, const TensorPtr& a, const TensorPtr& b) {
    if (a->shape.size() != 2 || b->shape.size() != 2 || a->shape[1] != b->shape[0]) {
        throw std::invalid_argument("matmul: shape mismatch " + shape_str(a->shape) + " vs " +
                                    shape_str(b->shape));
    }
    const int m = a->shape[0], k = a->shape[1], n = b->shape[1];
    auto out = out_like({m, n}, a->requires_grad || b->requires_grad);
    gemm_nn(a->values.data(), b->values.data(), out->values.data(), m, k, n);
    if (out->requires_grad) {
        tape.record([a, b, out, m, k, n] {
            if (a->requires_grad)  // dA += G * B^T
                gemm_nt(out->grad.data(), b->values.data(), a->grad.data(), m, n, k);
            if (b->requires_grad)  // dB += A^T * G
                gemm_tn(a->values.data(), out->grad.data(), b->grad.data(), k, m, n);
        });
    }
    return out;
}

namespace {

// Unpacks one image [c,h,w] into col rows [oh*ow x c*kh*kw].
void im2col(const double* x, int c, int h, int w, int kh, int kw, int stride, int pad, int oh,
            int ow, double* col) {
    const int ckk = c * kh * kw;
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            double* row = col + static_cast<std::size_t>(oy * ow + ox) * ckk;
            int idx = 0;
            for (int ci = 0; ci < c; ++ci) {
                const double* plane = x + static_cast<std::size_t>(ci) * h * w;
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = oy * stride + ky - pad;
                    for (int kx = 0; kx < kw; ++kx, ++idx) {
                        const int ix = ox * stride + kx - pad;
                        row[idx] = (iy >= 0 && iy < h && ix >= 0 && ix < w)
                                       ? plane[iy * w + ix]
                                       : 0.0;
                    }
                }
            }
        }
    }
}

void col2im_acc(const double* col, int c, int h, int w, int kh, int kw, int stride, int pad,
                int oh, int ow, double* dx) {
    const int ckk = c * kh * kw;
    for (int oy = 0; oy < oh; ++oy) {
        for (int ox = 0; ox < ow; ++ox) {
            const double* row = col + static_cast<std::size_t>(oy * ow + ox) * ckk;
            int idx = 0;
            for (int ci = 0; ci < c; ++ci) {
                double* plane = dx + static_cast<std::size_t>(ci) * h * w;
                for (int ky = 0; ky < kh; ++ky) {
                    const int iy = oy * stride + ky - pad;
                    for (int kx = 0; kx < kw; ++kx, ++idx) {
                        const int ix = ox * stride + kx - pad;
                        if (iy >= 0 && iy < h && ix >= 0 && ix < w) plane[iy * w + ix] += row[idx];
                    }
                }
            }
        }
    }
}

}  // namespace

TensorPtr conv2d(Tape& tape, const TensorPtr& x, const TensorPtr& kernel, const TensorPtr& bias,
                 int stride, int pad) {
    if (x->shape.size() != 4 || kernel->shape.size() != 4) {
        throw std::invalid_argument("conv2d: expected NCHW input and OIHW kernel, got " +
                                    shape_str(x->shape) + " and " + shape_str(kernel->shape));
    }
    if (stride != 1 && stride != 2) throw std::invalid_argument("conv2d: stride must be 1 or 2");
    if (pad < 0) throw std::invalid_argument("conv2d: negative padding");
    const int n = x->shape[0], c = x->shape[1], h = x->shape[2], w = x->shape[3];
    const int oc = kernel->shape[0], ic = kernel->shape[1], kh = kernel->shape[2],
              kw = kernel->shape[3];
    if (ic != c) {
        throw std::invalid_argument("conv2d: input channels " + shape_str(x->shape) +
                                    " do not match kernel " + shape_str(kernel->shape));
    }
    if (bias->shape != std::vector<int>{oc}) {
        throw std::invalid_argument("conv2d: bias " + shape_str(bias->shape) + " vs out channels " +
                                    std::to_string(oc));
    }
    const int oh = (h + 2 * pad - kh) / stride + 1;
    const int ow = (w + 2 * pad - kw) / stride + 1;
    if (oh <= 0 || ow <= 0) {
        throw std::invalid_argument("conv2d: kernel " + shape_str(kernel->shape) +
                                    " does not fit input " + shape_str(x->shape));
    }
    const int ckk = c * kh * kw, ohow = oh * ow;

    auto out = out_like({n, oc, oh, ow},
                        x->requires_grad || kernel->requires_grad || bias->requires_grad);
    // col buffer for the whole batch is kept for the backward pass
    auto col = std::make_shared<std::vector<double>>(
        static_cast<std::size_t>(n) * ohow * ckk);
    for (int i = 0; i < n; ++i) {
        double* col_i = col->data() + static_cast<std::size_t>(i) * ohow * ckk;
        im2col(x->values.data() + static_cast<std::size_t>(i) * c * h * w, c, h, w, kh, kw, stride,
               pad, oh, ow, col_i);
        double* out_i = out->values.data() + static_cast<std::size_t>(i) * oc * ohow;
        gemm_nt(kernel->values.data(), col_i, out_i, oc, ckk, ohow);
        for (int o = 0; o < oc; ++o) {
            const double bv = bias->values[o];
            double* orow = out_i + static_cast<std::size_t>(o) * ohow;
            for (int j = 0; j < ohow; ++j) orow[j] += bv;
        }
    }

    if (out->requires_grad) {
        tape.record([x, kernel, bias, out, col, n, c, h, w, oc, kh, kw, stride, pad, oh, ow, ckk,
                     ohow] {
            std::vector<double> dcol(static_cast<std::size_t>(ohow) * ckk);
            for (int i = 0; i < n; ++i) {
                const double* g_i = out->grad.data() + static_cast<std::size_t>(i) * oc * ohow;
                const double* col_i = col->data() + static_cast<std::size_t>(i) * ohow * ckk;
                if (kernel->requires_grad)  // dW += G_i * col_i
                    gemm_nn(g_i, col_i, kernel->grad.data(), oc, ohow, ckk);
                if (bias->requires_grad) {
                    for (int o = 0; o < oc; ++o) {
                        double acc = 0.0;
                        const double* grow = g_i + static_cast<std::size_t>(o) * ohow;
                        for (int j = 0; j < ohow; ++j) acc += grow[j];
                        bias->grad[o] += acc;
                    }
                }
                if (x->requires_grad) {
                    std::fill(dcol.begin(), dcol.end(), 0.0);
                    gemm_tn(g_i, kernel->values.data(), dcol.data(), ohow, oc, ckk);
                    col2im_acc(dcol.data(), c, h, w, kh, kw, stride, pad, oh, ow,
                               x->grad.data() + static_cast<std::size_t>(i) * c * h * w);
                }
            }
        });
    }
    return out;
}

TensorPtr maxpool2x2(Tape& tape, const TensorPtr& x) {
    if (x->shape.size() != 4 || x->shape[2] % 2 != 0 || x->shape[3] % 2 != 0) {
        throw std::invalid_argument("maxpool2x2: need NCHW input with even spatial dims, got " +
                                    shape_str(x->shape));
    }
    const int n = x->shape[0], c = x->shape[1], h = x->shape[2], w = x->shape[3];
    const int oh = h / 2, ow = w / 2;
    auto out = out_like({n, c, oh, ow}, x->requires_grad);
    auto argmax = std::make_shared<std::vector<std::int32_t>>(out->values.size());
    std::size_t oi = 0;
    for (int i = 0; i < n; ++i) {
        for (int ci = 0; ci < c; ++ci) {
            const double* plane =
                x->values.data() + (static_cast<std::size_t>(i) * c + ci) * h * w;
            for (int oy = 0; oy < oh; ++oy) {
                for (int ox = 0; ox < ow; ++ox, ++oi) {
                    const int base = (2 * oy) * w + 2 * ox;
                    // ties keep the first position in scan order
                    int best = base;
                    double bv = plane[base];
                    const int cand[3] = {base + 1, base + w, base + w + 1};
                    for (int cix : cand) {
                        if (plane[cix] > bv) {
                            bv = plane[cix];
                            best = cix;
                        }
                    }
                    out->values[oi] = bv;
                    (*argmax)[oi] = best;
                }
            }
        }
    }
    if (out->requires_grad) {
        tape.record([x, out, argmax, n, c, h, w, oh, ow] {
            std::size_t oi = 0;
            for (int i = 0; i < n; ++i) {
                for (int ci = 0; ci < c; ++ci) {
                    double* gplane =
                        x->grad.data() + (static_cast<std::size_t>(i) * c + ci) * h * w;
                    for (int j = 0; j < oh * ow; ++j, ++oi) gplane[(*argmax)[oi]] += out->grad[oi];
                }
            }
        });
    }
    return out;
}

TensorPtr relu(Tape& tape, const TensorPtr& x) {
    auto out = out_like(x->shape, x->requires_grad);
    for (std::size_t i = 0; i < out->values.size(); ++i)
        out->values[i] = x->values[i] > 0.0 ? x->values[i] : 0.0;
    if (out->requires_grad) {
        tape.record([x, out] {
            // subgradient at 0 is 0
            for (std::size_t i = 0; i < out->grad.size(); ++i)
                if (x->values[i] > 0.0) x->grad[i] += out->grad[i];
        });
    }
    return out;
}

TensorPtr log(Tape& tape, const TensorPtr& x) {
    for (double v : x->values) {
        if (!(v > 0.0)) {
            throw std::invalid_argument("log: non-positive input value " + std::to_string(v));
        }
    }
    auto out = out_like(x->shape, x->requires_grad);
    for (std::size_t i = 0; i < out->values.size(); ++i) out->values[i] = std::log(x->values[i]);
    if (out->requires_grad) {
        tape.record([x, out] {
            for (std::size_t i = 0; i < out->grad.size(); ++i)
                x->grad[i] += out->grad[i] / x->values[i];
        });
    }
    return out;
}

TensorPtr exp(Tape& tape, const TensorPtr& x) {
    auto out = out_like(x->shape, x->requires_grad);
    for (std::size_t i = 0; i < out->values.size(); ++i) out->values[i] = std::exp(x->values[i]);
    if (out->requires_grad) {
        tape.record([x, out] {
            for (std::size_t i = 0; i < out->grad.size(); ++i)
                x->grad[i] += out->grad[i] * out->values[i];
        });
    }
    return out;
}

TensorPtr softmax_lastaxis(Tape& tape, const TensorPtr& x) {
    const int last = x->shape.back();
    const std::size_t rows = x->values.size() / static_cast<std::size_t>(last);
    auto out = out_like(x->shape, x->requires_grad);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* xi = x->values.data() + r * last;
        double* yi = out->values.data() + r * last;
        double m = xi[0];
        for (int j = 1; j < last; ++j) m = std::max(m, xi[j]);
        double s = 0.0;
        for (int j = 0; j < last; ++j) {
            yi[j] = std::exp(xi[j] - m);
            s += yi[j];
        }
        for (int j = 0; j < last; ++j) yi[j] /= s;
    }
    if (out->requires_grad) {
        tape.record([x, out, last, rows] {
            for (std::size_t r = 0; r < rows; ++r) {
                const double* y = out->values.data() + r * last;
                const double* g = out->grad.data() + r * last;
                double dot = 0.0;
                for (int j = 0; j < last; ++j) dot += g[j] * y[j];
                double* dx = x->grad.data() + r * last;
                for (int j = 0; j < last; ++j) dx[j] += y[j] * (g[j] - dot);
            }
        });
    }
    return out;
}

TensorPtr reduce_sum(Tape& tape, const TensorPtr& x) {
    double s = 0.0;
    for (double v : x->values) s += v;
    auto out = Tensor::scalar(s, x->requires_grad);
    if (out->requires_grad) {
        tape.record([x, out] {
            const double g = out->grad[0];
            for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += g;
        });
    }
    return out;
}

TensorPtr reduce_mean(Tape& tape, const TensorPtr& x) {
    double s = 0.0;
    for (double v : x->values) s += v;
    const double inv_n = 1.0 / static_cast<double>(x->values.size());
    auto out = Tensor::scalar(s * inv_n, x->requires_grad);
    if (out->requires_grad) {
        tape.record([x, out, inv_n] {
            const double g = out->grad[0] * inv_n;
            for (std::size_t i = 0; i < x->grad.size(); ++i) x->grad[i] += g;
        });
    }
    return out;
}

namespace {

// Source strides aligned to the target's trailing axes; 0 where broadcast.
std::vector<std::int64_t> broadcast_strides(const std::vector<int>& src,
                                            const std::vector<int>& target) {
    if (src.size() > target.size()) {
        throw std::invalid_argument("broadcast_to: source rank exceeds target, " + shape_str(src) +
                                    " vs " + shape_str(target));
    }
    std::vector<std::int64_t> sstrides(src.size());
    std::int64_t acc = 1;
    for (int ax = static_cast<int>(src.size()) - 1; ax >= 0; --ax) {
        sstrides[ax] = acc;
        acc *= src[ax];
    }
    std::vector<std::int64_t> aligned(target.size(), 0);
    const std::size_t off = target.size() - src.size();
    for (std::size_t ax = 0; ax < src.size(); ++ax) {
        if (src[ax] == target[off + ax]) {
            aligned[off + ax] = sstrides[ax];
        } else if (src[ax] == 1) {
            aligned[off + ax] = 0;
        } else {
            throw std::invalid_argument("broadcast_to: cannot expand " + shape_str(src) + " to " +
                                        shape_str(target));
        }
    }
    return aligned;
}

template <typename Fn>
void for_each_broadcast(const std::vector<int>& target, const std::vector<std::int64_t>& sstride,
                        Fn&& fn) {
    const std::size_t rank = target.size();
    std::vector<int> idx(rank, 0);
    std::int64_t soff = 0;
    const std::int64_t total = shape_numel(target);
    for (std::int64_t t = 0; t < total; ++t) {
        fn(t, soff);
        for (int ax = static_cast<int>(rank) - 1; ax >= 0; --ax) {
            ++idx[ax];
            soff += sstride[ax];
            if (idx[ax] < target[ax]) break;
            idx[ax] = 0;
            soff -= sstride[ax] * target[ax];
        }
    }
}

}  // namespace

TensorPtr broadcast_to(Tape& tape, const TensorPtr& x, const std::vector<int>& target) {
    auto sstride = broadcast_strides(x->shape, target);
    auto out = out_like(target, x->requires_grad);
    for_each_broadcast(target, sstride,
                       [&](std::int64_t t, std::int64_t s) { out->values[t] = x->values[s]; });
    if (out->requires_grad) {
        auto tshape = target;
        tape.record([x, out, sstride, tshape] {
            for_each_broadcast(tshape, sstride,
                               [&](std::int64_t t, std::int64_t s) { x->grad[s] += out->grad[t]; });
        });
    }
    return out;
}

TensorPtr reshape(Tape& tape, const TensorPtr& x, const std::vector<int>& shape) {
    if (shape_numel(shape) != x->numel()) {
        throw std::invalid_argument("reshape: element count mismatch " + shape_str(x->shape) +
                                    " -> " + shape_str(shape));
    }
    auto out = Tensor::of(shape, x->values, x->requires_grad);
    if (out->requires_grad) {
        tape.record([x, out] {
            for (std::size_t i = 0; i < out->grad.size(); ++i) x->grad[i] += out->grad[i];
        });
    }
    return out;
}

TensorPtr concat_axis(Tape& tape, const std::vector<TensorPtr>& parts, int axis) {
    if (parts.empty()) throw std::invalid_argument("concat_axis: no inputs");
    const auto& ref = parts[0]->shape;
    if (axis < 0 || axis >= static_cast<int>(ref.size()))
        throw std::invalid_argument("concat_axis: axis out of range");
    int cat = 0;
    bool needs_grad = false;
    for (const auto& p : parts) {
        if (p->shape.size() != ref.size())
            throw std::invalid_argument("concat_axis: rank mismatch");
        for (std::size_t ax = 0; ax < ref.size(); ++ax) {
            if (static_cast<int>(ax) != axis && p->shape[ax] != ref[ax]) {
                throw std::invalid_argument("concat_axis: shape mismatch " + shape_str(p->shape) +
                                            " vs " + shape_str(ref));
            }
        }
        cat += p->shape[axis];
        needs_grad = needs_grad || p->requires_grad;
    }
    auto oshape = ref;
    oshape[axis] = cat;
    auto out = out_like(oshape, needs_grad);

    std::int64_t outer = 1, inner = 1;
    for (int ax = 0; ax < axis; ++ax) outer *= ref[ax];
    for (std::size_t ax = axis + 1; ax < ref.size(); ++ax) inner *= ref[ax];

    std::size_t base = 0;
    std::vector<std::size_t> offsets(parts.size());
    for (std::size_t pi = 0; pi < parts.size(); ++pi) {
        offsets[pi] = base;
        base += static_cast<std::size_t>(parts[pi]->shape[axis]) * inner;
    }
    const std::size_t ostride = static_cast<std::size_t>(cat) * inner;
    for (std::int64_t o = 0; o < outer; ++o) {
        for (std::size_t pi = 0; pi < parts.size(); ++pi) {
            const std::size_t blk = static_cast<std::size_t>(parts[pi]->shape[axis]) * inner;
            std::memcpy(out->values.data() + o * ostride + offsets[pi],
                        parts[pi]->values.data() + o * blk, blk * sizeof(double));
        }
    }
    if (needs_grad) {
        tape.record([parts, out, outer, inner, offsets, ostride] {
            for (std::int64_t o = 0; o < outer; ++o) {
                for (std::size_t pi = 0; pi < parts.size(); ++pi) {
                    if (!parts[pi]->requires_grad) continue;
                    const std::size_t bsz =
                        parts[pi]->values.size() / static_cast<std::size_t>(outer);
                    const double* g = out->grad.data() + o * ostride + offsets[pi];
                    double* dst = parts[pi]->grad.data() + o * bsz;
                    for (std::size_t i = 0; i < bsz; ++i) dst[i] += g[i];
                }
            }
        });
    }
    return out;
}

TensorPtr slice_lastaxis(Tape& tape, const TensorPtr& x, int index) {
    const int last = x->shape.back();
    if (index < 0 || index >= last)
        throw std::invalid_argument("slice_lastaxis: index " + std::to_string(index) +
                                    " out of range for " + shape_str(x->shape));
    std::vector<int> oshape(x->shape.begin(), x->shape.end() - 1);
    if (oshape.empty()) oshape = {1};
    const std::size_t rows = x->values.size() / static_cast<std::size_t>(last);
    auto out = out_like(oshape, x->requires_grad);
    for (std::size_t r = 0; r < rows; ++r) out->values[r] = x->values[r * last + index];
    if (out->requires_grad) {
        tape.record([x, out, last, index, rows] {
            for (std::size_t r = 0; r < rows; ++r) x->grad[r * last + index] += out->grad[r];
        });
    }
    return out;
}

namespace {

// pixel -> grid cell, last cell absorbs the remainder
inline int cell_of(int p, int cell, int cells) { return std::min(p / cell, cells - 1); }

}  // namespace

TensorPtr block_upsample(Tape& tape, const TensorPtr& x, int w, int h) {
    if (x->shape.size() != 3) {
        throw std::invalid_argument("block_upsample: expected [gw,gh,k] grid, got " +
                                    shape_str(x->shape));
    }
    const int gw = x->shape[0], gh = x->shape[1], k = x->shape[2];
    if (gw > w || gh > h)
        throw std::invalid_argument("block_upsample: grid " + shape_str(x->shape) +
                                    " larger than image " + std::to_string(w) + "x" +
                                    std::to_string(h));
    const int cw = w / gw, ch = h / gh;
    auto out = out_like({w, h, k}, x->requires_grad);
    for (int px = 0; px < w; ++px) {
        const int gx = cell_of(px, cw, gw);
        for (int py = 0; py < h; ++py) {
            const int gy = cell_of(py, ch, gh);
            const double* src = x->values.data() + (static_cast<std::size_t>(gx) * gh + gy) * k;
            double* dst = out->values.data() + (static_cast<std::size_t>(px) * h + py) * k;
            for (int ci = 0; ci < k; ++ci) dst[ci] = src[ci];
        }
    }
    if (out->requires_grad) {
        tape.record([x, out, w, h, k, cw, ch, gw, gh] {
            for (int px = 0; px < w; ++px) {
                const int gx = cell_of(px, cw, gw);
                for (int py = 0; py < h; ++py) {
                    const int gy = cell_of(py, ch, gh);
                    double* dst = x->grad.data() + (static_cast<std::size_t>(gx) * gh + gy) * k;
                    const double* g = out->grad.data() + (static_cast<std::size_t>(px) * h + py) * k;
                    for (int ci = 0; ci < k; ++ci) dst[ci] += g[ci];
                }
            }
        });
    }
    return out;
}

TensorPtr permute4(Tape& tape, const TensorPtr& x, const std::array<int, 4>& order) {
    if (x->shape.size() != 4)
        throw std::invalid_argument("permute4: expected rank-4 input, got " + shape_str(x->shape));
    std::array<bool, 4> seen{};
    for (int ax : order) {
        if (ax < 0 || ax > 3 || seen[ax]) throw std::invalid_argument("permute4: invalid order");
        seen[ax] = true;
    }
    const auto& s = x->shape;
    std::vector<int> oshape = {s[order[0]], s[order[1]], s[order[2]], s[order[3]]};
    std::array<std::int64_t, 4> xstride;
    xstride[3] = 1;
    for (int ax = 2; ax >= 0; --ax) xstride[ax] = xstride[ax + 1] * s[ax + 1];
    std::array<std::int64_t, 4> pstride = {xstride[order[0]], xstride[order[1]],
                                           xstride[order[2]], xstride[order[3]]};
    auto out = out_like(oshape, x->requires_grad);
    std::size_t oi = 0;
    for (int a = 0; a < oshape[0]; ++a)
        for (int b = 0; b < oshape[1]; ++b)
            for (int c = 0; c < oshape[2]; ++c) {
                std::int64_t base = a * pstride[0] + b * pstride[1] + c * pstride[2];
                for (int d = 0; d < oshape[3]; ++d, ++oi)
                    out->values[oi] = x->values[base + d * pstride[3]];
            }
    if (out->requires_grad) {
        tape.record([x, out, oshape, pstride] {
            std::size_t oi = 0;
            for (int a = 0; a < oshape[0]; ++a)
                for (int b = 0; b < oshape[1]; ++b)
                    for (int c = 0; c < oshape[2]; ++c) {
                        std::int64_t base = a * pstride[0] + b * pstride[1] + c * pstride[2];
                        for (int d = 0; d < oshape[3]; ++d, ++oi)
                            x->grad[base + d * pstride[3]] += out->grad[oi];
                    }
        });
    }
    return out;
}

TensorPtr cross_entropy_with_logits(Tape& tape, const TensorPtr& logits,
                                    const std::vector<int>& labels) {
    if (logits->shape.size() != 2) {
        throw std::invalid_argument("cross_entropy: expected [batch, classes] logits, got " +
                                    shape_str(logits->shape));
    }
    const int n = logits->shape[0], classes = logits->shape[1];
    if (static_cast<int>(labels.size()) != n) {
        throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) +
                                    " labels for batch " + std::to_string(n));
    }
    for (int y : labels) {
        if (y < 0 || y >= classes) {
            throw std::invalid_argument("cross_entropy: label " + std::to_string(y) +
                                        " out of range [0," + std::to_string(classes) + ")");
        }
    }
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
        const double* row = logits->values.data() + static_cast<std::size_t>(i) * classes;
        double m = row[0];
        for (int j = 1; j < classes; ++j) m = std::max(m, row[j]);
        double s = 0.0;
        for (int j = 0; j < classes; ++j) s += std::exp(row[j] - m);
        total += m + std::log(s) - row[labels[i]];
    }
    auto out = Tensor::scalar(total / n, logits->requires_grad);
    if (out->requires_grad) {
        auto yv = labels;
        tape.record([logits, out, yv = std::move(yv), n, classes] {
            const double g = out->grad[0] / n;
            for (int i = 0; i < n; ++i) {
                const double* row = logits->values.data() + static_cast<std::size_t>(i) * classes;
                double* drow = logits->grad.data() + static_cast<std::size_t>(i) * classes;
                double m = row[0];
                for (int j = 1; j < classes; ++j) m = std::max(m, row[j]);
                double s = 0.0;
                for (int j = 0; j < classes; ++j) s += std::exp(row[j] - m);
                for (int j = 0; j < classes; ++j) {
                    const double p = std::exp(row[j] - m) / s;
                    drow[j] += g * (p - (j == yv[i] ? 1.0 : 0.0));
                }
            }
        });
    }
    return out;
}

}  // namespace maskforge::ops
