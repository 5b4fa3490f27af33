#pragma once

#include "stcm/tensor.hpp"

namespace stcm {

/// Zero padding for convolutions. `same` pads (k-1)/2 before and k-1-(k-1)/2 after so the
/// output keeps the input's spatial size; `valid` pads nothing.
enum class Padding { valid, same };

struct PoolSpec {
  Index feature_group = 1;  // channels pooled together, non-overlapping
  Index spatial_h = 1;
  Index spatial_w = 1;
  double order = 2.0;  // p
  double epsilon = 1e-8;

  void validate() const;
};

struct AffineGrads {
  Tensor gx, gW, gb;
};

struct ConvGrads {
  Tensor gx, gK, gb;
};

struct ConvTransposeGrads {
  Tensor gh, gK;
};

// ---- affine ---------------------------------------------------------------

/// out[n,o] = sum_i W[o,i] x[n,i] + b[o]. `x` may have any rank >= 2; trailing axes are
/// flattened. `b` may be null.
Tensor affine_forward(const Tensor& x, const Tensor& W, const Tensor& b);
/// `gx` has the shape of `x`; `gb` is null when `has_bias` is false.
AffineGrads affine_backward(const Tensor& x, const Tensor& W, const Tensor& gout, bool has_bias = true);

// ---- convolution ----------------------------------------------------------
//
// Cross-correlation, stride 1:
//   out[n,d,i,j] = b[d] + sum_{c,u,v} K[d,c,u,v] * xpad[n,c,i+u,j+v]

Index conv_output_extent(Index input, Index kernel, Padding padding);

Tensor conv2d_forward(const Tensor& x, const Tensor& K, const Tensor& b, Padding padding = Padding::valid);

/// Gradients of conv2d_forward. `gx` is skipped (null) when `need_gx` is false; `gb` is
/// null when `has_bias` is false.
ConvGrads conv2d_backward(const Tensor& x, const Tensor& K, const Tensor& gout, Padding padding = Padding::valid,
                          bool need_gx = true, bool has_bias = true);

/// Adjoint of conv2d_forward in x: <conv(x,K), h> == <x, convT(h,K)>.
/// `h` is [N,D,H',W']; the result is [N,C,H'+kh-1,W'+kw-1] for `valid` and [N,C,H',W']
/// for `same`.
Tensor conv2d_transpose_forward(const Tensor& h, const Tensor& K, Padding padding = Padding::valid);

ConvTransposeGrads conv2d_transpose_backward(const Tensor& h, const Tensor& K, const Tensor& gout,
                                             Padding padding = Padding::valid, bool need_gh = true);

// ---- rectifier ------------------------------------------------------------

Tensor relu_forward(const Tensor& x);
/// gout * 1[x > 0]; the subgradient at 0 is 0.
Tensor relu_backward(const Tensor& x, const Tensor& gout);

// ---- Lp pooling -----------------------------------------------------------
//
// Input [N,C,H,W] (or [N,D], treated as [N,D,1,1]). Output channel g pools input channels
// [g*fg, (g+1)*fg) over non-overlapping spatial windows:
//   z = (eps + sum |h|^p)^(1/p)
// With p = 2 and eps = 0 this is the plain group L2 norm.

Shape pooled_shape(const Shape& input, const PoolSpec& spec);

Tensor l2pool_forward(const Tensor& h, const PoolSpec& spec);
Tensor l2pool_backward(const Tensor& h, const PoolSpec& spec, const Tensor& gout);

}  // namespace stcm
