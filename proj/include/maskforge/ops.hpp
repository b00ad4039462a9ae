#pragma once

#include <array>
#include <vector>

#include "maskforge/tensor.hpp"

namespace maskforge::ops {

// Differentiable building blocks. Every op validates its shape rule, computes
// the output value, and records one backward closure on the tape. Reduction
// orders inside kernels are fixed (sequential over the contraction axis), so
// replaying a tape is bit-deterministic.

TensorPtr add(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr sub(Tape& tape, const TensorPtr& a, const TensorPtr& b);
TensorPtr mul(Tape& tape, const TensorPtr& a, const TensorPtr& b);

// y = a + c, c constant (no grad flow into c).
TensorPtr add_const(Tape& tape, const TensorPtr& a, const std::vector<double>& c);
// y = a .* c, c constant.
TensorPtr mul_const(Tape& tape, const TensorPtr& a, const std::vector<double>& c);
// y = s * a, scalar constant s.
TensorPtr scale(Tape& tape, const TensorPtr& a, double s);

// a [m x k] * b [k x n] -> [m x n]
TensorPtr matmul(Tape& tape, const TensorPtr& a, const TensorPtr& b);

// x [n,c,h,w], kernel [oc,ic,kh,kw], bias [oc]; stride in {1,2}, zero padding.
TensorPtr conv2d(Tape& tape, const TensorPtr& x, const TensorPtr& kernel, const TensorPtr& bias,
                 int stride, int pad);

// 2x2 max pooling, stride 2; spatial dims must be even.
TensorPtr maxpool2x2(Tape& tape, const TensorPtr& x);

TensorPtr relu(Tape& tape, const TensorPtr& x);
TensorPtr log(Tape& tape, const TensorPtr& x);   // rejects non-positive values
TensorPtr exp(Tape& tape, const TensorPtr& x);

// Softmax over the last axis, max-shifted for stability.
TensorPtr softmax_lastaxis(Tape& tape, const TensorPtr& x);

TensorPtr reduce_sum(Tape& tape, const TensorPtr& x);   // -> scalar
TensorPtr reduce_mean(Tape& tape, const TensorPtr& x);  // -> scalar

// Expands x to `target`: shapes are aligned on trailing axes; missing leading
// axes are treated as 1; each source dim must equal the target dim or be 1.
TensorPtr broadcast_to(Tape& tape, const TensorPtr& x, const std::vector<int>& target);

TensorPtr reshape(Tape& tape, const TensorPtr& x, const std::vector<int>& shape);

TensorPtr concat_axis(Tape& tape, const std::vector<TensorPtr>& parts, int axis);

// y[...] = x[..., index]; drops the last axis.
TensorPtr slice_lastaxis(Tape& tape, const TensorPtr& x, int index);

// Grid tensor [gw,gh,k] -> pixel tensor [w,h,k]; cell (i,j) covers the pixel
// region [i*floor(w/gw), ...) with the last cell absorbing the remainder.
TensorPtr block_upsample(Tape& tape, const TensorPtr& x, int w, int h);

// 4-D axis permutation; order[i] names the source axis for output axis i.
TensorPtr permute4(Tape& tape, const TensorPtr& x, const std::array<int, 4>& order);

// Mean over the batch of -log softmax(logits)[label]. logits [n, classes].
TensorPtr cross_entropy_with_logits(Tape& tape, const TensorPtr& logits,
                                    const std::vector<int>& labels);

// Plain GEMM kernels (row-major, accumulate into C). Exposed for reuse; the
// contraction loop order is fixed for determinism.
void gemm_nn(const double* a, const double* b, double* c, int m, int k, int n);  // C += A*B
void gemm_nt(const double* a, const double* b, double* c, int m, int k, int n);  // C += A*B^T, B [n x k]
void gemm_tn(const double* a, const double* b, double* c, int m, int k, int n);  // C += A^T*B, A [k x m]

}  // namespace maskforge::ops
