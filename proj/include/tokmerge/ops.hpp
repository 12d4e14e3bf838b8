#pragma once

#include "tokmerge/tensor.hpp"

namespace tokmerge {

// a[M x K] * b[K x P] -> [M x P]. Counts M*K*P MACs.
Tensor matmul(const Tensor& a, const Tensor& b);

// a[M x K] * b[P x K]^T -> [M x P], i.e. one dot product per output element.
// Counts M*K*P MACs.
Tensor matmul_nt(const Tensor& a, const Tensor& b);

// Row-wise softmax of a [M x P] matrix, max-subtracted for stability. No
// epsilon in the denominator; NaN inputs propagate to NaN outputs.
Tensor softmax_rows(const Tensor& x);

// Cross-correlation of x[H x W x Cin] with weights[k x k x Cin x Cout] and
// bias[Cout]. Output [H' x W' x Cout] with H' = (H + 2p - k)/s + 1.
// Counts H'*W'*Cout*k*k*Cin MACs.
Tensor conv2d(const Tensor& x, const Tensor& weights, const Tensor& bias, int stride, int padding);

// Depthwise cross-correlation: x[H x W x C], weights[k x k x C], bias[C].
// Counts H'*W'*C*k*k MACs.
Tensor depthwise_conv2d(const Tensor& x, const Tensor& weights, const Tensor& bias, int stride,
                        int padding);

// 2x2 average pooling with stride 2 on x[H x W x C]; H and W must be even.
Tensor avgpool2d(const Tensor& x);

// Layer normalization over the last dimension. gamma/beta have that
// dimension's length; eps must be > 0.
Tensor layernorm(const Tensor& x, const Tensor& gamma, const Tensor& beta, float eps);

// Exact (erf-based) GELU, elementwise.
Tensor gelu(const Tensor& x);

// Bilinear resize of x[H x W x C] to [out_h x out_w x C], half-pixel centers,
// edge-clamped. Uses the lerp form, so constant fields are preserved exactly.
Tensor bilinear_resize(const Tensor& x, int64_t out_h, int64_t out_w);

// out += x, elementwise; shapes must match.
void add_inplace(Tensor& out, const Tensor& x);

// x[N x Din] * w[Din x Dout] + b[Dout] broadcast over rows.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);

// Sequential dot product kernel shared by matmul_nt and the matcher oracle
// (fixed 4-accumulator order, deterministic).
float dot(const float* a, const float* b, int64_t n);

}  // namespace tokmerge
