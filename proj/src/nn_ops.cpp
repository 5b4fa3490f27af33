#include "stcm/nn_ops.hpp"

#include <cmath>
#include <string>

namespace stcm {

namespace {

using Matrix = RowMatrix<double>;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

struct ConvGeometry {
  Index n, c, h, w;      // input
  Index d, kh, kw;       // kernel
  Index pad_top, pad_left;
  Index out_h, out_w;

  Index patch() const { return c * kh * kw; }
  Index out_area() const { return out_h * out_w; }
  Index in_area() const { return h * w; }
};

std::pair<Index, Index> pad_before_after(Index kernel, Padding padding) {
  if (padding == Padding::valid) return {0, 0};
  const Index before = (kernel - 1) / 2;
  return {before, kernel - 1 - before};
}

void require_rank(const Tensor& t, std::size_t rank, const char* what) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(what) + ": expected rank " + std::to_string(rank) + ", got shape " +
                     shape_to_string(t.shape()));
  }
}

ConvGeometry conv_geometry(const Shape& x, const Shape& K, Padding padding, const char* what) {
  if (x.size() != 4 || K.size() != 4) throw ShapeError(std::string(what) + ": expected rank-4 input and kernel");
  if (x[1] != K[1]) {
    throw ShapeError(std::string(what) + ": input has " + std::to_string(x[1]) + " channels, kernel expects " +
                     std::to_string(K[1]));
  }
  ConvGeometry g{x[0], x[1], x[2], x[3], K[0], K[2], K[3], 0, 0, 0, 0};
  g.pad_top = pad_before_after(g.kh, padding).first;
  g.pad_left = pad_before_after(g.kw, padding).first;
  g.out_h = conv_output_extent(g.h, g.kh, padding);
  g.out_w = conv_output_extent(g.w, g.kw, padding);
  return g;
}

// cols[(c*kh+u)*kw+v, i*out_w+j] = xpad[c, i+u, j+v]
void im2col(const double* x, const ConvGeometry& g, Matrix& cols) {
  cols.resize(g.patch(), g.out_area());
  for (Index c = 0; c < g.c; ++c) {
    for (Index u = 0; u < g.kh; ++u) {
      for (Index v = 0; v < g.kw; ++v) {
        double* row = cols.data() + ((c * g.kh + u) * g.kw + v) * g.out_area();
        for (Index i = 0; i < g.out_h; ++i) {
          const Index y = i + u - g.pad_top;
          double* dst = row + i * g.out_w;
          if (y < 0 || y >= g.h) {
            std::fill(dst, dst + g.out_w, 0.0);
            continue;
          }
          const double* src = x + (c * g.h + y) * g.w;
          for (Index j = 0; j < g.out_w; ++j) {
            const Index xx = j + v - g.pad_left;
            dst[j] = (xx >= 0 && xx < g.w) ? src[xx] : 0.0;
          }
        }
      }
    }
  }
}

// Scatter-add of im2col's adjoint.
void col2im_add(const Matrix& cols, const ConvGeometry& g, double* x) {
  for (Index c = 0; c < g.c; ++c) {
    for (Index u = 0; u < g.kh; ++u) {
      for (Index v = 0; v < g.kw; ++v) {
        const double* row = cols.data() + ((c * g.kh + u) * g.kw + v) * g.out_area();
        for (Index i = 0; i < g.out_h; ++i) {
          const Index y = i + u - g.pad_top;
          if (y < 0 || y >= g.h) continue;
          const double* src = row + i * g.out_w;
          double* dst = x + (c * g.h + y) * g.w;
          for (Index j = 0; j < g.out_w; ++j) {
            const Index xx = j + v - g.pad_left;
            if (xx >= 0 && xx < g.w) dst[xx] += src[j];
          }
        }
      }
    }
  }
}

struct PoolGeometry {
  Index n, c, h, w;
  Index groups, out_h, out_w;
};

PoolGeometry pool_geometry(const Shape& in, const PoolSpec& spec) {
  spec.validate();
  if (in.size() != 2 && in.size() != 4) {
    throw ShapeError("l2pool: expected [N,C,H,W] or [N,D], got " + shape_to_string(in));
  }
  PoolGeometry g{in[0], in[1], in.size() == 4 ? in[2] : 1, in.size() == 4 ? in[3] : 1, 0, 0, 0};
  if (g.c % spec.feature_group != 0 || g.h % spec.spatial_h != 0 || g.w % spec.spatial_w != 0) {
    throw ShapeError("l2pool: pooling (" + std::to_string(spec.feature_group) + "," + std::to_string(spec.spatial_h) +
                     "," + std::to_string(spec.spatial_w) + ") does not divide " + shape_to_string(in));
  }
  g.groups = g.c / spec.feature_group;
  g.out_h = g.h / spec.spatial_h;
  g.out_w = g.w / spec.spatial_w;
  return g;
}

// Visits every input element of output cell (n, g, i, j); f(flat input index).
template <typename F>
void for_each_member(const PoolGeometry& geo, const PoolSpec& spec, Index n, Index grp, Index i, Index j, F&& f) {
  for (Index c = grp * spec.feature_group; c < (grp + 1) * spec.feature_group; ++c) {
    for (Index y = i * spec.spatial_h; y < (i + 1) * spec.spatial_h; ++y) {
      const Index base = ((n * geo.c + c) * geo.h + y) * geo.w;
      for (Index x = j * spec.spatial_w; x < (j + 1) * spec.spatial_w; ++x) f(base + x);
    }
  }
}

double pow_abs(double v, double p) { return p == 2.0 ? v * v : std::pow(std::abs(v), p); }

}  // namespace

void PoolSpec::validate() const {
  if (feature_group < 1 || spatial_h < 1 || spatial_w < 1) throw ShapeError("PoolSpec: group sizes must be positive");
  if (!(order >= 1.0)) throw ArgumentError("PoolSpec: order p must be >= 1");
  if (!(epsilon >= 0.0)) throw ArgumentError("PoolSpec: epsilon must be >= 0");
}

// ---- affine ---------------------------------------------------------------

Tensor affine_forward(const Tensor& x, const Tensor& W, const Tensor& b) {
  require_rank(W, 2, "affine_forward weight");
  if (x.rank() < 2) throw ShapeError("affine_forward: input must be [batch, ...]");
  const Index n = x.extent(0);
  const Index in = x.size() / n;
  if (in != W.extent(1)) {
    throw ShapeError("affine_forward: input dim " + std::to_string(in) + " vs weight " + shape_to_string(W.shape()));
  }
  Tensor out({n, W.extent(0)});
  out.rows().noalias() = x.rows() * W.rows().transpose();
  if (!b.is_null()) {
    if (b.shape() != Shape{W.extent(0)}) throw ShapeError("affine_forward: bias shape " + shape_to_string(b.shape()));
    out.rows().rowwise() += b.vec().transpose();
  }
  return out;
}

AffineGrads affine_backward(const Tensor& x, const Tensor& W, const Tensor& gout, bool has_bias) {
  require_rank(W, 2, "affine_backward weight");
  const Index n = x.extent(0);
  if (x.size() / n != W.extent(1) || gout.shape() != Shape{n, W.extent(0)}) {
    throw ShapeError("affine_backward: inconsistent shapes x " + shape_to_string(x.shape()) + ", W " +
                     shape_to_string(W.shape()) + ", gout " + shape_to_string(gout.shape()));
  }
  AffineGrads g;
  g.gx = Tensor(x.shape());
  g.gx.rows().noalias() = gout.rows() * W.rows();
  g.gW = Tensor(W.shape());
  g.gW.rows().noalias() = gout.rows().transpose() * x.rows();
  if (has_bias) {
    g.gb = Tensor({W.extent(0)});
    g.gb.vec() = gout.rows().colwise().sum().transpose();
  }
  return g;
}

// ---- convolution ----------------------------------------------------------

Index conv_output_extent(Index input, Index kernel, Padding padding) {
  const auto [before, after] = pad_before_after(kernel, padding);
  const Index out = input + before + after - kernel + 1;
  if (out < 1) {
    throw ShapeError("kernel extent " + std::to_string(kernel) + " larger than input extent " + std::to_string(input));
  }
  return out;
}

Tensor conv2d_forward(const Tensor& x, const Tensor& K, const Tensor& b, Padding padding) {
  const ConvGeometry g = conv_geometry(x.shape(), K.shape(), padding, "conv2d_forward");
  if (!b.is_null() && b.shape() != Shape{g.d}) throw ShapeError("conv2d_forward: bias shape " + shape_to_string(b.shape()));
  Tensor out({g.n, g.d, g.out_h, g.out_w});
  const ConstMatrixMap kmat(K.data(), g.d, g.patch());
  Matrix cols;
  for (Index s = 0; s < g.n; ++s) {
    im2col(x.data() + s * g.c * g.in_area(), g, cols);
    MatrixMap o(out.data() + s * g.d * g.out_area(), g.d, g.out_area());
    o.noalias() = kmat * cols;
    if (!b.is_null()) o.colwise() += b.vec();
  }
  return out;
}

ConvGrads conv2d_backward(const Tensor& x, const Tensor& K, const Tensor& gout, Padding padding, bool need_gx,
                          bool has_bias) {
  const ConvGeometry g = conv_geometry(x.shape(), K.shape(), padding, "conv2d_backward");
  require_same_shape(gout.shape(), Shape{g.n, g.d, g.out_h, g.out_w}, "conv2d_backward gout");
  ConvGrads grads;
  grads.gK = Tensor(K.shape());
  MatrixMap gk(grads.gK.data(), g.d, g.patch());
  const ConstMatrixMap kmat(K.data(), g.d, g.patch());
  if (need_gx) grads.gx = Tensor(x.shape());
  if (has_bias) grads.gb = Tensor({g.d});
  Matrix cols, gcols;
  for (Index s = 0; s < g.n; ++s) {
    const ConstMatrixMap go(gout.data() + s * g.d * g.out_area(), g.d, g.out_area());
    im2col(x.data() + s * g.c * g.in_area(), g, cols);
    gk.noalias() += go * cols.transpose();
    if (has_bias) grads.gb.vec() += go.rowwise().sum();
    if (need_gx) {
      gcols.noalias() = kmat.transpose() * go;
      col2im_add(gcols, g, grads.gx.data() + s * g.c * g.in_area());
    }
  }
  return grads;
}

Tensor conv2d_transpose_forward(const Tensor& h, const Tensor& K, Padding padding) {
  require_rank(h, 4, "conv2d_transpose_forward");
  require_rank(K, 4, "conv2d_transpose_forward kernel");
  if (h.extent(1) != K.extent(0)) {
    throw ShapeError("conv2d_transpose_forward: " + std::to_string(h.extent(1)) + " maps vs kernel " +
                     shape_to_string(K.shape()));
  }
  const Index kh = K.extent(2), kw = K.extent(3);
  const Index out_h = padding == Padding::valid ? h.extent(2) + kh - 1 : h.extent(2);
  const Index out_w = padding == Padding::valid ? h.extent(3) + kw - 1 : h.extent(3);
  const ConvGeometry g = conv_geometry({h.extent(0), K.extent(1), out_h, out_w}, K.shape(), padding,
                                       "conv2d_transpose_forward");
  Tensor out({g.n, g.c, out_h, out_w});
  const ConstMatrixMap kmat(K.data(), g.d, g.patch());
  Matrix cols;
  for (Index s = 0; s < g.n; ++s) {
    const ConstMatrixMap hs(h.data() + s * g.d * g.out_area(), g.d, g.out_area());
    cols.noalias() = kmat.transpose() * hs;
    col2im_add(cols, g, out.data() + s * g.c * g.in_area());
  }
  return out;
}

ConvTransposeGrads conv2d_transpose_backward(const Tensor& h, const Tensor& K, const Tensor& gout, Padding padding,
                                             bool need_gh) {
  require_rank(h, 4, "conv2d_transpose_backward");
  const ConvGeometry g = conv_geometry(gout.shape(), K.shape(), padding, "conv2d_transpose_backward");
  require_same_shape(h.shape(), Shape{g.n, g.d, g.out_h, g.out_w}, "conv2d_transpose_backward h");
  ConvTransposeGrads grads;
  grads.gK = Tensor(K.shape());
  MatrixMap gk(grads.gK.data(), g.d, g.patch());
  Matrix cols;
  for (Index s = 0; s < g.n; ++s) {
    const ConstMatrixMap hs(h.data() + s * g.d * g.out_area(), g.d, g.out_area());
    im2col(gout.data() + s * g.c * g.in_area(), g, cols);
    gk.noalias() += hs * cols.transpose();
  }
  if (need_gh) grads.gh = conv2d_forward(gout, K, Tensor(), padding);
  return grads;
}

// ---- rectifier ------------------------------------------------------------

Tensor relu_forward(const Tensor& x) {
  return tensor_map(x, [](double v) { return v > 0.0 ? v : 0.0; });
}

Tensor relu_backward(const Tensor& x, const Tensor& gout) {
  require_same_shape(x.shape(), gout.shape(), "relu_backward");
  return tensor_zip(x, gout, [](double v, double g) { return v > 0.0 ? g : 0.0; });
}

// ---- pooling --------------------------------------------------------------

Shape pooled_shape(const Shape& input, const PoolSpec& spec) {
  const PoolGeometry g = pool_geometry(input, spec);
  if (input.size() == 2) return {g.n, g.groups};
  return {g.n, g.groups, g.out_h, g.out_w};
}

Tensor l2pool_forward(const Tensor& h, const PoolSpec& spec) {
  const PoolGeometry geo = pool_geometry(h.shape(), spec);
  Tensor out(pooled_shape(h.shape(), spec));
  const double* in = h.data();
  double* o = out.data();
  for (Index n = 0; n < geo.n; ++n)
    for (Index grp = 0; grp < geo.groups; ++grp)
      for (Index i = 0; i < geo.out_h; ++i)
        for (Index j = 0; j < geo.out_w; ++j) {
          double acc = spec.epsilon;
          for_each_member(geo, spec, n, grp, i, j, [&](Index k) { acc += pow_abs(in[k], spec.order); });
          *o++ = spec.order == 2.0 ? std::sqrt(acc) : std::pow(acc, 1.0 / spec.order);
        }
  return out;
}

Tensor l2pool_backward(const Tensor& h, const PoolSpec& spec, const Tensor& gout) {
  const PoolGeometry geo = pool_geometry(h.shape(), spec);
  require_same_shape(gout.shape(), pooled_shape(h.shape(), spec), "l2pool_backward gout");
  Tensor z = l2pool_forward(h, spec);
  Tensor gh(h.shape());
  const double* in = h.data();
  double* g = gh.data();
  Index cell = 0;
  for (Index n = 0; n < geo.n; ++n)
    for (Index grp = 0; grp < geo.groups; ++grp)
      for (Index i = 0; i < geo.out_h; ++i)
        for (Index j = 0; j < geo.out_w; ++j, ++cell) {
          const double zc = z[cell];
          const double go = gout[cell];
          if (zc == 0.0) continue;
          if (spec.order == 2.0) {
            const double scale = go / zc;
            for_each_member(geo, spec, n, grp, i, j, [&](Index k) { g[k] = in[k] * scale; });
          } else {
            const double scale = go * std::pow(zc, 1.0 - spec.order);
            for_each_member(geo, spec, n, grp, i, j, [&](Index k) {
              const double a = std::abs(in[k]);
              g[k] = a == 0.0 ? 0.0 : std::copysign(std::pow(a, spec.order - 1.0), in[k]) * scale;
            });
          }
        }
  return gh;
}

}  // namespace stcm
