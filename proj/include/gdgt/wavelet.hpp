#pragma once

#include "gdgt/tensor.hpp"

namespace gdgt {

/// The four components of a single-level 2x2 Haar decomposition, each
/// B x C x H/2 x W/2.
struct WaveletBands {
  Tensor ll;  ///< low frequency (block sum)
  Tensor lh;  ///< horizontal detail
  Tensor hl;  ///< vertical detail
  Tensor hh;  ///< diagonal detail
};

/// Unnormalized Haar transform over disjoint 2x2 blocks. With a, b the top
/// row and c, d the bottom row of a block:
///
///   LL =  a + b + c + d      LH = -a - b + c + d
///   HL = -a + b - c + d      HH =  a - b - c + d
///
/// A constant block of value v gives LL = 4v. Odd spatial sizes are rejected.
WaveletBands haar_dwt(const Tensor& x);

/// Exact inverse of haar_dwt:
///   a = (LL-LH-HL+HH)/4, b = (LL-LH+HL-HH)/4,
///   c = (LL+LH-HL-HH)/4, d = (LL+LH+HL+HH)/4.
Tensor inverse_haar_dwt(const WaveletBands& bands);

}  // namespace gdgt
