#include "stcm/models.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "stcm/tensor_io.hpp"

namespace stcm {

namespace {

Shape batched(Index n, const Shape& per_sample) {
  Shape s{n};
  s.insert(s.end(), per_sample.begin(), per_sample.end());
  return s;
}

Shape drop_batch(const Shape& s) { return Shape(s.begin() + 1, s.end()); }

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? " " : "") + std::to_string(s[i]);
  return out;
}

}  // namespace

// ---- LayerSpec ----------------------------------------------------------------

LayerSpec LayerSpec::fully_connected(Index in_dim, Index out_dim, bool rectify, std::optional<PoolSpec> pool) {
  LayerSpec s;
  s.kind = LayerKind::fully_connected;
  s.in_dim = in_dim;
  s.out_dim = out_dim;
  s.rectify = rectify;
  s.pool = pool;
  return s;
}

LayerSpec LayerSpec::convolutional(Index in_channels, Index out_channels, Index kernel, Padding padding,
                                   std::optional<PoolSpec> pool) {
  LayerSpec s;
  s.kind = LayerKind::convolutional;
  s.in_channels = in_channels;
  s.out_channels = out_channels;
  s.kernel_h = kernel;
  s.kernel_w = kernel;
  s.padding = padding;
  s.pool = pool;
  return s;
}

Shape LayerSpec::weight_shape() const {
  if (kind == LayerKind::fully_connected) return {out_dim, in_dim};
  return {out_channels, in_channels, kernel_h, kernel_w};
}

Index LayerSpec::fan_in() const {
  return kind == LayerKind::fully_connected ? in_dim : in_channels * kernel_h * kernel_w;
}

Shape LayerSpec::hidden_shape(const Shape& input) const {
  if (kind == LayerKind::fully_connected) {
    if (shape_product(input) != in_dim) {
      throw ConfigError("fully-connected layer expects " + std::to_string(in_dim) + " inputs, got " +
                        shape_to_string(input));
    }
    return {out_dim};
  }
  if (input.size() != 3 || input[0] != in_channels) {
    throw ConfigError("convolutional layer expects " + std::to_string(in_channels) + " input maps, got " +
                      shape_to_string(input));
  }
  try {
    return {out_channels, conv_output_extent(input[1], kernel_h, padding), conv_output_extent(input[2], kernel_w, padding)};
  } catch (const ShapeError& e) {
    throw ConfigError(e.what());
  }
}

Shape LayerSpec::output_shape(const Shape& input) const {
  const Shape hidden = hidden_shape(input);
  if (!pool) return hidden;
  try {
    return drop_batch(pooled_shape(batched(1, hidden), *pool));
  } catch (const ShapeError& e) {
    throw ConfigError(e.what());
  }
}

// ---- EncoderModel -------------------------------------------------------------

void EncoderModel::validate() const {
  check_shape(input_shape);
  Shape cur = input_shape;
  for (std::size_t k = 0; k < layers.size(); ++k) {
    const Layer& L = layers[k];
    cur = L.spec.output_shape(cur);
    if (L.weight.shape() != L.spec.weight_shape()) {
      throw ConfigError("layer " + std::to_string(k) + ": weight shape " + shape_to_string(L.weight.shape()) +
                        " != " + shape_to_string(L.spec.weight_shape()));
    }
    const Index bias_len = L.spec.weight_shape()[0];
    if (L.spec.has_bias ? L.bias.shape() != Shape{bias_len} : !L.bias.is_null()) {
      throw ConfigError("layer " + std::to_string(k) + ": bias inconsistent with has_bias");
    }
  }
}

Shape EncoderModel::layer_input_shape(std::size_t k) const {
  Shape cur = input_shape;
  for (std::size_t i = 0; i < k; ++i) cur = layers.at(i).spec.output_shape(cur);
  return cur;
}

Shape EncoderModel::hidden_shape(std::size_t k) const { return layers.at(k).spec.hidden_shape(layer_input_shape(k)); }

Shape EncoderModel::code_shape() const { return layer_input_shape(layers.size()); }

DecoderModel make_decoder(const EncoderModel& encoder) {
  DecoderModel dec;
  for (std::size_t k = 0; k < encoder.layers.size(); ++k) {
    const LayerSpec& s = encoder.layers[k].spec;
    if (s.kind == LayerKind::fully_connected) {
      dec.weights.emplace_back(Shape{s.in_dim, s.out_dim});
    } else {
      dec.weights.emplace_back(s.weight_shape());
    }
  }
  return dec;
}

// ---- parameters -----------------------------------------------------------------

namespace {

template <typename M, typename T>
std::vector<std::pair<std::string, T*>> collect(M& model) {
  std::vector<std::pair<std::string, T*>> out;
  for (std::size_t k = 0; k < model.encoder.layers.size(); ++k) {
    auto& L = model.encoder.layers[k];
    out.emplace_back("enc" + std::to_string(k) + ".weight", &L.weight);
    if (L.spec.has_bias) out.emplace_back("enc" + std::to_string(k) + ".bias", &L.bias);
  }
  for (std::size_t k = 0; k < model.decoder.weights.size(); ++k) {
    out.emplace_back("dec" + std::to_string(k) + ".weight", &model.decoder.weights[k]);
  }
  return out;
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> parameters(Model& model) { return collect<Model, Tensor>(model); }

std::vector<std::pair<std::string, const Tensor*>> parameters(const Model& model) {
  return collect<const Model, const Tensor>(model);
}

Gradients zero_gradients(const Model& model) {
  Gradients g;
  for (const auto& [name, t] : parameters(model)) g.push_back(Tensor::zeros_like(*t));
  return g;
}

void accumulate(Gradients& into, const Gradients& g) {
  if (into.size() != g.size()) throw ShapeError("accumulate: gradient lists differ in length");
  for (std::size_t i = 0; i < g.size(); ++i) axpy(1.0, g[i], into[i]);
}

bool all_finite(const Gradients& g) {
  for (const auto& t : g) {
    if (!all_finite(t)) return false;
  }
  return true;
}

bool parameters_finite(const Model& model) {
  for (const auto& [name, t] : parameters(model)) {
    if (!all_finite(*t)) return false;
  }
  return true;
}

// ---- forward / backward -----------------------------------------------------------

Encoding encode(const EncoderModel& model, const Tensor& x) {
  if (x.rank() < 2 || drop_batch(x.shape()) != model.input_shape) {
    throw ShapeError("encode: input " + shape_to_string(x.shape()) + " does not match model input " +
                     shape_to_string(model.input_shape));
  }
  Encoding enc;
  enc.layers.reserve(model.layers.size());
  Tensor cur = x;
  for (const Layer& L : model.layers) {
    LayerCache c;
    c.input = std::move(cur);
    if (L.spec.kind == LayerKind::fully_connected) {
      c.pre = affine_forward(c.input, L.weight, L.bias);
    } else {
      c.pre = conv2d_forward(c.input, L.weight, L.bias, L.spec.padding);
    }
    c.hidden = L.spec.rectify ? relu_forward(c.pre) : c.pre;
    c.output = L.spec.pool ? l2pool_forward(c.hidden, *L.spec.pool) : c.hidden;
    cur = c.output;
    enc.layers.push_back(std::move(c));
  }
  enc.code = std::move(cur);
  return enc;
}

Encoding encode(const Model& model, const Tensor& x) { return encode(model.encoder, x); }

EncoderGrads encoder_backward(const EncoderModel& model, const Encoding& enc, const Tensor& gcode,
                              const std::vector<Tensor>& hidden_grads, bool need_input_grad) {
  const std::size_t n_layers = model.layers.size();
  if (enc.layers.size() != n_layers) throw ShapeError("encoder_backward: encoding from a different model");
  require_same_shape(gcode.shape(), enc.code.shape(), "encoder_backward gcode");
  EncoderGrads out;
  out.weight.resize(n_layers);
  out.bias.resize(n_layers);
  Tensor g = gcode;
  for (std::size_t k = n_layers; k-- > 0;) {
    const Layer& L = model.layers[k];
    const LayerCache& c = enc.layers[k];
    Tensor gh = L.spec.pool ? l2pool_backward(c.hidden, *L.spec.pool, g) : std::move(g);
    if (k < hidden_grads.size() && !hidden_grads[k].is_null()) axpy(1.0, hidden_grads[k], gh);
    const Tensor gpre = L.spec.rectify ? relu_backward(c.pre, gh) : std::move(gh);
    const bool need_gx = k > 0 || need_input_grad;
    if (L.spec.kind == LayerKind::fully_connected) {
      AffineGrads a = affine_backward(c.input, L.weight, gpre, L.spec.has_bias);
      out.weight[k] = std::move(a.gW);
      out.bias[k] = std::move(a.gb);
      g = std::move(a.gx);
    } else {
      ConvGrads a = conv2d_backward(c.input, L.weight, gpre, L.spec.padding, need_gx, L.spec.has_bias);
      out.weight[k] = std::move(a.gK);
      out.bias[k] = std::move(a.gb);
      g = std::move(a.gx);
    }
  }
  if (need_input_grad) out.input = std::move(g);
  return out;
}

Tensor decode_layer(const Model& model, std::size_t k, const Tensor& h) {
  if (k >= model.decoder.weights.size()) throw ShapeError("decode_layer: model has no decoder for layer " + std::to_string(k));
  const Layer& L = model.encoder.layers.at(k);
  const Tensor& W = model.decoder.weights[k];
  if (L.spec.kind == LayerKind::fully_connected) {
    const Tensor r = affine_forward(h, W, Tensor());
    return r.reshaped(batched(h.extent(0), model.encoder.layer_input_shape(k)));
  }
  return conv2d_transpose_forward(h, W, L.spec.padding);
}

DecoderGrads decode_layer_backward(const Model& model, std::size_t k, const Tensor& h, const Tensor& grecon) {
  const Layer& L = model.encoder.layers.at(k);
  const Tensor& W = model.decoder.weights.at(k);
  DecoderGrads out;
  if (L.spec.kind == LayerKind::fully_connected) {
    const Tensor g2 = grecon.reshaped({grecon.extent(0), grecon.size() / grecon.extent(0)});
    AffineGrads a = affine_backward(h, W, g2, false);
    out.weight = std::move(a.gW);
    out.hidden = std::move(a.gx);
  } else {
    ConvTransposeGrads a = conv2d_transpose_backward(h, W, grecon, L.spec.padding);
    out.weight = std::move(a.gK);
    out.hidden = std::move(a.gh);
  }
  return out;
}

Gradients pack_gradients(const Model& model, const EncoderGrads& enc, const std::vector<Tensor>& decoder) {
  Gradients g;
  for (std::size_t k = 0; k < model.encoder.layers.size(); ++k) {
    g.push_back(enc.weight.at(k));
    if (model.encoder.layers[k].spec.has_bias) g.push_back(enc.bias.at(k));
  }
  for (std::size_t k = 0; k < model.decoder.weights.size(); ++k) {
    if (k < decoder.size() && !decoder[k].is_null()) {
      g.push_back(decoder[k]);
    } else {
      g.push_back(Tensor::zeros_like(model.decoder.weights[k]));
    }
  }
  return g;
}

SiameseOutput siamese_apply(const EncoderModel& model, const Tensor& x_a, const Tensor& x_b) {
  require_same_shape(x_a.shape(), x_b.shape(), "siamese_apply");
  return SiameseOutput{encode(model, x_a), encode(model, x_b)};
}

// ---- construction -----------------------------------------------------------------

Preset parse_preset(const std::string& name) {
  if (name == "layer1") return Preset::layer1;
  if (name == "layer2") return Preset::layer2;
  if (name == "layer2_stage") return Preset::layer2_stage;
  if (name == "fc_toy") return Preset::fc_toy;
  if (name == "fc_patch") return Preset::fc_patch;
  throw ConfigError("unknown preset '" + name + "' (layer1|layer2|layer2_stage|fc_toy|fc_patch)");
}

std::string preset_name(Preset p) {
  switch (p) {
    case Preset::layer1: return "layer1";
    case Preset::layer2: return "layer2";
    case Preset::layer2_stage: return "layer2_stage";
    case Preset::fc_toy: return "fc_toy";
    case Preset::fc_patch: return "fc_patch";
  }
  return "custom";
}

namespace {

Layer make_layer(const LayerSpec& spec) {
  Layer L{spec, Tensor(spec.weight_shape()), Tensor()};
  if (spec.has_bias) L.bias = Tensor({spec.weight_shape()[0]});
  return L;
}

PoolSpec pool(Index group, Index spatial, double eps) { return PoolSpec{group, spatial, spatial, 2.0, eps}; }

}  // namespace

Model build_paper_architecture(Preset preset, const PresetOptions& opt) {
  Model m;
  m.preset = preset_name(preset);
  const auto layer1 = LayerSpec::convolutional(3, 64, 9, Padding::same, pool(4, 2, opt.pool_epsilon));
  const auto layer2 = LayerSpec::convolutional(16, 64, 5, Padding::same, pool(1, 4, opt.pool_epsilon));
  switch (preset) {
    case Preset::layer1:
      m.encoder.input_shape = {3, 32, 32};
      m.encoder.layers = {make_layer(layer1)};
      break;
    case Preset::layer2:
      m.encoder.input_shape = {3, 32, 32};
      m.encoder.layers = {make_layer(layer1), make_layer(layer2)};
      break;
    case Preset::layer2_stage:
      m.encoder.input_shape = {16, 16, 16};
      m.encoder.layers = {make_layer(layer2)};
      break;
    case Preset::fc_toy: {
      const Index r = opt.toy_resolution;
      m.encoder.input_shape = {1, r, r};
      m.encoder.layers = {make_layer(LayerSpec::fully_connected(r * r, opt.toy_hidden, true)),
                          make_layer(LayerSpec::fully_connected(opt.toy_hidden, 2, false))};
      break;
    }
    case Preset::fc_patch: {
      const Index p = opt.patch_size;
      m.encoder.input_shape = {1, p, p};
      m.encoder.layers = {make_layer(LayerSpec::fully_connected(p * p, 512, true, pool(4, 1, opt.pool_epsilon)))};
      break;
    }
  }
  if (preset != Preset::fc_toy) m.decoder = make_decoder(m.encoder);
  m.encoder.validate();
  return m;
}

void init_weights(Model& model, Rng& rng) {
  for (Layer& L : model.encoder.layers) {
    const double s = 1.0 / std::sqrt(static_cast<double>(L.spec.fan_in()));
    for (double& v : L.weight) v = rng.uniform(-s, s);
    if (L.spec.has_bias) L.bias = Tensor::zeros_like(L.bias);
  }
  for (std::size_t k = 0; k < model.decoder.weights.size(); ++k) {
    const LayerSpec& spec = model.encoder.layers.at(k).spec;
    const Index fan_in =
        spec.kind == LayerKind::fully_connected ? spec.out_dim : spec.out_channels * spec.kernel_h * spec.kernel_w;
    const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : model.decoder.weights[k]) v = rng.uniform(-s, s);
  }
}

Model stack_models(const std::vector<Model>& stages, const std::string& preset) {
  if (stages.empty()) throw ConfigError("stack_models: no stages");
  Model m;
  m.preset = preset;
  m.encoder.input_shape = stages.front().encoder.input_shape;
  bool decoders = true;
  for (const Model& s : stages) decoders = decoders && s.has_decoder();
  for (const Model& s : stages) {
    m.encoder.layers.insert(m.encoder.layers.end(), s.encoder.layers.begin(), s.encoder.layers.end());
    if (decoders) m.decoder.weights.insert(m.decoder.weights.end(), s.decoder.weights.begin(), s.decoder.weights.end());
  }
  m.encoder.validate();
  return m;
}

// ---- checkpoints ------------------------------------------------------------------

void save_checkpoint(const Model& model, const std::filesystem::path& dir, const Config& extra) {
  std::filesystem::create_directories(dir);
  Config manifest;
  manifest.set("preset", model.preset);
  manifest.set("input_shape", join(model.encoder.input_shape));
  manifest.set("layers", std::to_string(model.encoder.layers.size()));
  manifest.set("decoder_layers", std::to_string(model.decoder.weights.size()));
  for (std::size_t k = 0; k < model.encoder.layers.size(); ++k) {
    const LayerSpec& s = model.encoder.layers[k].spec;
    const std::string p = "layer." + std::to_string(k) + ".";
    const bool fc = s.kind == LayerKind::fully_connected;
    manifest.set(p + "kind", fc ? "fully_connected" : "convolutional");
    if (fc) {
      manifest.set(p + "dims", std::to_string(s.in_dim) + " " + std::to_string(s.out_dim));
    } else {
      manifest.set(p + "channels", std::to_string(s.in_channels) + " " + std::to_string(s.out_channels));
      manifest.set(p + "kernel", std::to_string(s.kernel_h) + " " + std::to_string(s.kernel_w));
      manifest.set(p + "padding", s.padding == Padding::same ? "same" : "valid");
    }
    manifest.set(p + "has_bias", s.has_bias ? "1" : "0");
    manifest.set(p + "rectify", s.rectify ? "1" : "0");
    if (s.pool) {
      manifest.set(p + "pool", std::to_string(s.pool->feature_group) + " " + std::to_string(s.pool->spatial_h) + " " +
                                   std::to_string(s.pool->spatial_w) + " " + fmt_double(s.pool->order) + " " +
                                   fmt_double(s.pool->epsilon));
    } else {
      manifest.set(p + "pool", "none");
    }
  }
  for (const auto& [k, v] : extra.entries()) manifest.set(k, v);
  {
    std::ofstream out(dir / "manifest.txt", std::ios::trunc);
    out << manifest.to_text();
    if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
  }
  for (const auto& [name, t] : parameters(model)) write_tensor(dir / (name + ".stcm"), *t);
}

Config load_manifest(const std::filesystem::path& dir) { return Config::load(dir / "manifest.txt"); }

Model load_checkpoint(const std::filesystem::path& dir) {
  const Config mf = load_manifest(dir);
  Model m;
  m.preset = mf.get_string("preset", "custom");
  for (long long e : mf.get_ints("input_shape", {})) m.encoder.input_shape.push_back(e);
  const long long n_layers = mf.get_int("layers", 0);
  for (long long k = 0; k < n_layers; ++k) {
    const std::string p = "layer." + std::to_string(k) + ".";
    LayerSpec s;
    const std::string kind = mf.get_string(p + "kind", "");
    if (kind == "fully_connected") {
      const auto dims = mf.get_ints(p + "dims", {});
      if (dims.size() != 2) throw ConfigError("manifest: bad " + p + "dims");
      s = LayerSpec::fully_connected(dims[0], dims[1]);
    } else if (kind == "convolutional") {
      const auto ch = mf.get_ints(p + "channels", {});
      const auto ker = mf.get_ints(p + "kernel", {});
      if (ch.size() != 2 || ker.size() != 2) throw ConfigError("manifest: bad " + p + "channels/kernel");
      s = LayerSpec::convolutional(ch[0], ch[1], ker[0], Padding::valid);
      s.kernel_w = ker[1];
      const std::string pad = mf.get_string(p + "padding", "valid");
      if (pad != "same" && pad != "valid") throw ConfigError("manifest: bad " + p + "padding");
      s.padding = pad == "same" ? Padding::same : Padding::valid;
    } else {
      throw ConfigError("manifest: bad " + p + "kind '" + kind + "'");
    }
    s.has_bias = mf.get_bool(p + "has_bias", true);
    s.rectify = mf.get_bool(p + "rectify", true);
    const std::string pool_text = mf.get_string(p + "pool", "none");
    if (pool_text != "none") {
      const auto v = mf.get_doubles(p + "pool", {});
      if (v.size() != 5) throw ConfigError("manifest: bad " + p + "pool");
      s.pool = PoolSpec{static_cast<Index>(v[0]), static_cast<Index>(v[1]), static_cast<Index>(v[2]), v[3], v[4]};
    }
    m.encoder.layers.push_back(make_layer(s));
  }
  const long long n_dec = mf.get_int("decoder_layers", 0);
  if (n_dec != 0) {
    if (n_dec != n_layers) throw ConfigError("manifest: decoder_layers must be 0 or equal to layers");
    m.decoder = make_decoder(m.encoder);
  }
  for (auto& [name, t] : parameters(m)) {
    Tensor loaded = read_tensor(dir / (name + ".stcm"));
    if (loaded.shape() != t->shape()) {
      throw ConfigError("checkpoint tensor " + name + " has shape " + shape_to_string(loaded.shape()) + ", expected " +
                        shape_to_string(t->shape()));
    }
    *t = std::move(loaded);
  }
  m.encoder.validate();
  return m;
}

}  // namespace stcm
