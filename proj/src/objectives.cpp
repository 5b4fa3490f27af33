#include "stcm/objectives.hpp"

#include <cmath>

namespace stcm {

namespace {

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

const Model& require_single_stage(const Model& model, const char* what) {
  if (model.encoder.layers.size() != 1 || model.decoder.weights.size() != 1) {
    throw ArgumentError(std::string(what) + ": requires a single-stage model with a decoder");
  }
  return model;
}

Tensor concat_batches(const Tensor& a, const Tensor& b) {
  Shape s = a.shape();
  s[0] = a.extent(0) + b.extent(0);
  Tensor out(s);
  out.vec().head(a.size()) = a.vec();
  out.vec().tail(b.size()) = b.vec();
  return out;
}

Tensor concat_or_null(const Tensor& a, const Tensor& b) { return a.is_null() ? Tensor() : concat_batches(a, b); }

// Encodes the two halves as separate, equally sized batches so that a frame gets the same
// code in either half (GEMM kernels may round differently by row position within a batch).
Encoding encode_pair(const EncoderModel& model, const Tensor& a, const Tensor& b) {
  const Encoding ea = encode(model, a);
  const Encoding eb = encode(model, b);
  Encoding out;
  out.code = concat_batches(ea.code, eb.code);
  for (std::size_t k = 0; k < ea.layers.size(); ++k) {
    const LayerCache& ca = ea.layers[k];
    const LayerCache& cb = eb.layers[k];
    out.layers.push_back({concat_or_null(ca.input, cb.input), concat_or_null(ca.pre, cb.pre),
                          concat_or_null(ca.hidden, cb.hidden), concat_or_null(ca.output, cb.output)});
  }
  return out;
}

// Reconstruction term and the decoder/hidden gradients it induces.
struct ReconResult {
  double value = 0.0;
  Tensor g_decoder;
  Tensor g_hidden;
};

ReconResult reconstruction(const Model& model, const Tensor& h, const Tensor& x) {
  const Tensor recon = decode_layer(model, 0, h);
  require_same_shape(recon.shape(), x.shape(), "reconstruction");
  Tensor residual = recon - x;
  ReconResult r;
  r.value = residual.vec().squaredNorm();
  residual.vec() *= 2.0;
  DecoderGrads dg = decode_layer_backward(model, 0, h, residual);
  r.g_decoder = std::move(dg.weight);
  r.g_hidden = std::move(dg.hidden);
  return r;
}

}  // namespace

LossTerms& LossTerms::operator+=(const LossTerms& o) {
  reconstruction += o.reconstruction;
  l1 += o.l1;
  slowness += o.slowness;
  group_sparsity += o.group_sparsity;
  contrastive_positive += o.contrastive_positive;
  contrastive_negative += o.contrastive_negative;
  return *this;
}

LossTerms LossTerms::scaled(double s) const {
  LossTerms t = *this;
  t.reconstruction *= s;
  t.l1 *= s;
  t.slowness *= s;
  t.group_sparsity *= s;
  t.contrastive_positive *= s;
  t.contrastive_negative *= s;
  return t;
}

DrlimResult drlim_loss(const Tensor& z_a, const Tensor& z_b, PairRelation relation, double margin, double p) {
  require_same_shape(z_a.shape(), z_b.shape(), "drlim_loss");
  if (!(margin > 0.0)) throw ArgumentError("drlim_loss: margin must be positive");
  if (!(p >= 1.0)) throw ArgumentError("drlim_loss: distance order must be >= 1");
  const Tensor diff = z_a - z_b;
  double acc = 0.0;
  for (double v : diff) acc += p == 2.0 ? v * v : std::pow(std::abs(v), p);
  const double dist = p == 2.0 ? std::sqrt(acc) : std::pow(acc, 1.0 / p);

  DrlimResult r;
  r.grad_a = Tensor::zeros_like(z_a);
  r.grad_b = Tensor::zeros_like(z_b);
  double outer = 0.0;  // dL/d(dist)
  if (relation == PairRelation::temporal_neighbor) {
    r.loss = dist;
    outer = 1.0;
  } else if (dist < margin) {
    r.loss = margin - dist;
    outer = -1.0;
  }
  if (outer == 0.0 || dist == 0.0) return r;
  const double scale = outer * std::pow(dist, 1.0 - p);
  for (Index i = 0; i < diff.size(); ++i) {
    const double d = diff[i];
    const double g = p == 2.0 ? d * scale : sign(d) * std::pow(std::abs(d), p - 1.0) * scale;
    r.grad_a[i] = g;
    r.grad_b[i] = -g;
  }
  return r;
}

ObjectiveResult drlim_objective(const Model& model, const Tensor& x_a, const Tensor& x_b,
                                const std::vector<PairRelation>& relations, double margin, double p) {
  require_same_shape(x_a.shape(), x_b.shape(), "drlim_objective");
  const Index n = x_a.extent(0);
  if (static_cast<Index>(relations.size()) != n) throw ShapeError("drlim_objective: one relation per pair required");
  const SiameseOutput enc = siamese_apply(model.encoder, x_a, x_b);
  const Index per = enc.a.code.size() / n;
  Shape row_shape(enc.a.code.shape().begin() + 1, enc.a.code.shape().end());
  Tensor gcode_a = Tensor::zeros_like(enc.a.code);
  Tensor gcode_b = Tensor::zeros_like(enc.b.code);
  ObjectiveResult out;
  for (Index i = 0; i < n; ++i) {
    const Tensor za(row_shape, Tensor::Vector(enc.a.code.vec().segment(i * per, per)));
    const Tensor zb(row_shape, Tensor::Vector(enc.b.code.vec().segment(i * per, per)));
    const DrlimResult r = drlim_loss(za, zb, relations[i], margin, p);
    if (relations[i] == PairRelation::temporal_neighbor) {
      out.terms.contrastive_positive += r.loss;
    } else {
      out.terms.contrastive_negative += r.loss;
    }
    gcode_a.vec().segment(i * per, per) = r.grad_a.vec();
    gcode_b.vec().segment(i * per, per) = r.grad_b.vec();
  }
  // One backward pass per branch, summed: the shared weights get exactly g_a + g_b.
  out.grads = pack_gradients(model, encoder_backward(model.encoder, enc.a, gcode_a));
  accumulate(out.grads, pack_gradients(model, encoder_backward(model.encoder, enc.b, gcode_b)));
  return out;
}

L1Result l1_penalty(const Tensor& h) {
  L1Result r;
  r.grad = tensor_map(h, [](double v) { return sign(v); });
  for (double v : h) r.value += std::abs(v);
  return r;
}

ObjectiveResult slowness_ae_loss(const Model& model, const Tensor& x_t, const Tensor& x_tp, double alpha,
                                 double beta) {
  require_single_stage(model, "slowness_ae_loss");
  require_same_shape(x_t.shape(), x_tp.shape(), "slowness_ae_loss");
  if (!(alpha >= 0.0) || !(beta >= 0.0)) throw ArgumentError("slowness_ae_loss: alpha and beta must be >= 0");

  const Tensor x = concat_batches(x_t, x_tp);
  const Encoding enc = encode_pair(model.encoder, x_t, x_tp);
  const Tensor& h = enc.hidden(0);

  ObjectiveResult out;
  ReconResult rec = reconstruction(model, h, x);
  out.terms.reconstruction = rec.value;

  L1Result l1 = l1_penalty(h);
  out.terms.l1 = alpha * l1.value;
  Tensor g_hidden = std::move(rec.g_hidden);
  axpy(alpha, l1.grad, g_hidden);

  const Tensor& z = enc.code;
  const Index half = z.size() / 2;
  Tensor gcode = Tensor::zeros_like(z);
  double slow = 0.0;
  for (Index i = 0; i < half; ++i) {
    const double d = z[i] - z[half + i];
    slow += std::abs(d);
    gcode[i] = beta * sign(d);
    gcode[half + i] = -beta * sign(d);
  }
  out.terms.slowness = beta * slow;

  const EncoderGrads eg = encoder_backward(model.encoder, enc, gcode, {g_hidden});
  out.grads = pack_gradients(model, eg, {rec.g_decoder});
  return out;
}

ObjectiveResult group_sparsity_loss(const Model& model, const Tensor& x, double alpha) {
  require_single_stage(model, "group_sparsity_loss");
  if (!(alpha >= 0.0)) throw ArgumentError("group_sparsity_loss: alpha must be >= 0");
  const Encoding enc = encode(model.encoder, x);
  ObjectiveResult out;
  ReconResult rec = reconstruction(model, enc.hidden(0), x);
  out.terms.reconstruction = rec.value;
  out.terms.group_sparsity = alpha * sum(enc.code);
  const Tensor gcode = Tensor::filled(enc.code.shape(), alpha);
  const EncoderGrads eg = encoder_backward(model.encoder, enc, gcode, {rec.g_hidden});
  out.grads = pack_gradients(model, eg, {rec.g_decoder});
  return out;
}

double mean_pooled_difference(const Model& model, const Tensor& x_t, const Tensor& x_tp) {
  require_same_shape(x_t.shape(), x_tp.shape(), "mean_pooled_difference");
  const Tensor za = encode(model.encoder, x_t).code;
  const Tensor zb = encode(model.encoder, x_tp).code;
  double acc = 0.0;
  for (Index i = 0; i < za.size(); ++i) acc += std::abs(za[i] - zb[i]);
  return acc / static_cast<double>(za.size());
}

}  // namespace stcm
