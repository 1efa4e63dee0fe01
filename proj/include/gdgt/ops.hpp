#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "gdgt/tensor.hpp"

namespace gdgt {

// Elementwise binary ops. `b` may match `a` exactly, be a single value, or be
// a per-channel vector: length C broadcasts over axis 1 of a 4-D `a` (also
// accepted as 1xCx1x1), and over the last axis of any other rank.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// Throws std::domain_error when any divisor has magnitude below 1e-30.
Tensor div(const Tensor& a, const Tensor& b);

inline Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
inline Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
inline Tensor operator*(const Tensor& a, const Tensor& b) { return mul(a, b); }
inline Tensor operator/(const Tensor& a, const Tensor& b) { return div(a, b); }

Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor relu(const Tensor& x);
/// log(1 + exp(x)), evaluated without overflow.
Tensor softplus(const Tensor& x);

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Batched product over matching leading dims: (...,M,K) x (...,K,N).
/// A rank-2 `b` is shared across all leading slices of `a`.
Tensor matmul(const Tensor& a, const Tensor& b);

/// x (..., D) * weight (D, E) + bias (E). Rows are processed one leading
/// slice at a time so a batch item's result does not depend on batch size.
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias = {});

/// Cross-correlation. input BxCxHxW, weight Ox(C/groups)xKxK, bias O.
/// Zero padding.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias = {},
              std::size_t stride = 1, std::size_t padding = 0, std::size_t groups = 1);

/// Reflection padding of both spatial dims of a BxCxHxW tensor (edge pixel
/// not repeated).
Tensor pad_reflect(const Tensor& x, std::size_t pad);

/// Numerically stable softmax; negative axis counts from the end.
Tensor softmax(const Tensor& x, int axis);

enum class UpsampleMode { nearest, bilinear };

/// Integer-factor spatial upsampling of BxCxHxW. Bilinear uses corner-aligned
/// sampling: output pixel o maps to input coordinate o*(H-1)/(factor*H-1).
Tensor upsample(const Tensor& x, std::size_t factor, UpsampleMode mode);

/// Resizes BxCxHxW to an arbitrary output size with corner-aligned bilinear
/// sampling.
Tensor resize_bilinear(const Tensor& x, std::size_t out_h, std::size_t out_w);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& axes);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length);

/// Normalizes each (sample, group) of a BxCxHxW tensor, then applies the
/// per-channel affine gamma/beta (length C).
Tensor group_norm(const Tensor& x, std::size_t groups, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

/// Normalizes over the last axis, then applies gamma/beta of that length.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5);

/// Mean pixel-wise cross-entropy of BxKxHxW logits against labels laid out
/// as B*H*W row-major values in [0, K).
Tensor cross_entropy(const Tensor& logits, std::span<const std::uint8_t> labels);

}  // namespace gdgt
