#pragma once

#include <cstdint>
#include <vector>

#include "metagrad/autodiff.hpp"
#include "metagrad/tensor.hpp"

namespace metagrad {

// Elementwise binary ops with right-aligned broadcasting (equal dims, 1-dims,
// or missing leading dims). Broadcasts are materialized as recorded nodes so
// their adjoints (axis sums) participate in double backward.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor sqrt(const Tensor& a);
Tensor relu(const Tensor& a);

Tensor matmul(const Tensor& a, const Tensor& b); // [M,K] x [K,N]
Tensor transpose(const Tensor& a);               // 2-D

Tensor reshape(const Tensor& a, Shape shape);
Tensor flatten_from(const Tensor& a, int axis); // collapse trailing axes

Tensor sum_axes(const Tensor& a, std::vector<int> axes, bool keepdims);
Tensor sum(const Tensor& a);
Tensor mean_axes(const Tensor& a, std::vector<int> axes, bool keepdims);
Tensor mean(const Tensor& a);
Tensor broadcast_to(const Tensor& a, const Shape& target);

/// NCHW input, OIHW kernel, symmetric stride/padding.
Tensor conv2d(const Tensor& x, const Tensor& k, int stride, int pad);
/// Adjoint of conv2d w.r.t. its input (transposed convolution).
Tensor conv2d_input_grad(const Tensor& gy, const Tensor& k, int stride, int pad,
                         std::int64_t in_h, std::int64_t in_w);
/// Adjoint of conv2d w.r.t. its kernel.
Tensor conv2d_kernel_grad(const Tensor& x, const Tensor& gy, int stride, int pad,
                          std::int64_t kh, std::int64_t kw);

Tensor softmax(const Tensor& a);     // last axis, max-stabilized
Tensor log_softmax(const Tensor& a); // last axis, max-stabilized

/// Mean over the batch of -log softmax(logits)[label]. Labels are class
/// indices, validated against the trailing logits extent.
Tensor cross_entropy(const Tensor& logits, const std::vector<std::int64_t>& labels);

/// x + bias broadcast along axis 1 (features of [B,F] or channels of NCHW).
Tensor add_bias(const Tensor& x, const Tensor& bias);

// Value-only helpers (constants; no provenance).
Tensor row_max_detached(const Tensor& a);                    // last axis, keepdims
Tensor onehot(const std::vector<std::int64_t>& labels, std::int64_t classes, DType dt);
std::vector<std::int64_t> argmax_rows(const Tensor& a);      // [B,C] -> B indices
Tensor zeros_like(const Tensor& t);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }
inline Tensor operator-(const Tensor& a) { return neg(a); }
inline Tensor operator*(const Tensor& a, double c) { return scale(a, c); }
inline Tensor operator*(double c, const Tensor& a) { return scale(a, c); }

} // namespace metagrad
