#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stcm/config.hpp"
#include "stcm/nn_ops.hpp"
#include "stcm/rng.hpp"

namespace stcm {

enum class LayerKind { fully_connected, convolutional };

/// Geometry of one encoder stage: linear map (affine or convolution), optional rectifier,
/// optional Lp pooling.
struct LayerSpec {
  LayerKind kind = LayerKind::fully_connected;
  // convolutional
  Index in_channels = 1;
  Index out_channels = 1;
  Index kernel_h = 1;
  Index kernel_w = 1;
  Padding padding = Padding::valid;
  // fully connected
  Index in_dim = 1;
  Index out_dim = 1;

  bool has_bias = true;
  bool rectify = true;
  std::optional<PoolSpec> pool;

  static LayerSpec fully_connected(Index in_dim, Index out_dim, bool rectify = true,
                                   std::optional<PoolSpec> pool = std::nullopt);
  static LayerSpec convolutional(Index in_channels, Index out_channels, Index kernel, Padding padding,
                                 std::optional<PoolSpec> pool = std::nullopt);

  Shape weight_shape() const;
  Index fan_in() const;
  /// Per-sample output of the linear stage (pre-pool hidden shape) for a per-sample input.
  Shape hidden_shape(const Shape& input) const;
  /// Per-sample output after pooling.
  Shape output_shape(const Shape& input) const;
};

struct Layer {
  LayerSpec spec;
  Tensor weight;
  Tensor bias;  // null when !spec.has_bias
};

struct EncoderModel {
  Shape input_shape;  // per sample, without the batch axis
  std::vector<Layer> layers;

  /// Throws ConfigError when consecutive layer shapes do not compose.
  void validate() const;
  Shape layer_input_shape(std::size_t k) const;
  Shape hidden_shape(std::size_t k) const;
  Shape code_shape() const;
  Index code_dim() const { return shape_product(code_shape()); }
};

/// One reconstruction map per encoder layer, from that layer's pre-pool activations back
/// to its input: [in_dim, out_dim] for fully-connected layers, a [D,C,kh,kw] kernel
/// applied as a transposed convolution for convolutional layers.
struct DecoderModel {
  std::vector<Tensor> weights;
};

struct Model {
  std::string preset = "custom";
  EncoderModel encoder;
  DecoderModel decoder;  // empty for purely discriminative (DrLIM) models

  bool has_decoder() const { return !decoder.weights.empty(); }
};

/// Builds the matching decoder weights (zero-filled) for every layer of `encoder`.
DecoderModel make_decoder(const EncoderModel& encoder);

// ---- parameters -------------------------------------------------------------

/// Trainable tensors in a fixed order: enc{k}.weight, enc{k}.bias, ..., dec{k}.weight.
std::vector<std::pair<std::string, Tensor*>> parameters(Model& model);
std::vector<std::pair<std::string, const Tensor*>> parameters(const Model& model);

/// Gradient buffers aligned with parameters(model).
using Gradients = std::vector<Tensor>;
Gradients zero_gradients(const Model& model);
void accumulate(Gradients& into, const Gradients& g);
bool all_finite(const Gradients& g);
bool parameters_finite(const Model& model);

// ---- forward / backward -----------------------------------------------------

struct LayerCache {
  Tensor input;   // layer input, batched
  Tensor pre;     // linear output
  Tensor hidden;  // after the rectifier: the pre-pool activations h
  Tensor output;  // after pooling (== hidden when the layer has no pool)
};

struct Encoding {
  Tensor code;  // final output, [N, code_shape...]
  std::vector<LayerCache> layers;

  const Tensor& hidden(std::size_t k) const { return layers.at(k).hidden; }
};

/// Runs the encoder on a batch `x` of shape [N, input_shape...].
Encoding encode(const EncoderModel& model, const Tensor& x);
Encoding encode(const Model& model, const Tensor& x);

struct EncoderGrads {
  std::vector<Tensor> weight;
  std::vector<Tensor> bias;  // null entries for layers without bias
  Tensor input;              // null unless requested
};

/// Backpropagates `gcode` (gradient w.r.t. the code) through the encoder. `hidden_grads`,
/// when non-empty, holds extra gradients w.r.t. each layer's pre-pool activations (null
/// entries allowed), e.g. from sparsity penalties.
EncoderGrads encoder_backward(const EncoderModel& model, const Encoding& enc, const Tensor& gcode,
                              const std::vector<Tensor>& hidden_grads = {}, bool need_input_grad = false);

/// Reconstruction of layer `k`'s input from pre-pool activations `h`.
Tensor decode_layer(const Model& model, std::size_t k, const Tensor& h);

struct DecoderGrads {
  Tensor weight;
  Tensor hidden;
};

/// Gradients of decode_layer w.r.t. the decoder weight and `h` for upstream gradient `grecon`.
DecoderGrads decode_layer_backward(const Model& model, std::size_t k, const Tensor& h, const Tensor& grecon);

/// Packs per-layer encoder grads (and optional decoder grads) into parameter order.
Gradients pack_gradients(const Model& model, const EncoderGrads& enc, const std::vector<Tensor>& decoder = {});

/// Both inputs through one parameter set.
struct SiameseOutput {
  Encoding a;
  Encoding b;
};
SiameseOutput siamese_apply(const EncoderModel& model, const Tensor& x_a, const Tensor& x_b);

// ---- construction -----------------------------------------------------------

enum class Preset { layer1, layer2, layer2_stage, fc_toy, fc_patch };

Preset parse_preset(const std::string& name);
std::string preset_name(Preset p);

struct PresetOptions {
  Index toy_resolution = 96;  // fc_toy input is toy_resolution^2 grayscale
  Index toy_hidden = 100;
  Index patch_size = 20;      // fc_patch input is patch_size^2 grayscale
  double pool_epsilon = 1e-8;
};

/// Architectures with the published dimension arithmetic:
///   layer1       3x32x32 -> 64 conv 9x9 (same) -> relu -> pool 4 maps x 2x2  => 16x16x16
///   layer2       layer1 followed by layer2_stage                              => 64x4x4
///   layer2_stage 16x16x16 -> 64 conv 5x5 (same) -> relu -> pool 4x4           => 64x4x4
///   fc_toy       r*r -> hidden (relu) -> 2 (linear)
///   fc_patch     20*20 -> 512 (relu) -> pool groups of 4                     => 128
/// Weights are zero; call init_weights.
Model build_paper_architecture(Preset preset, const PresetOptions& options = {});

/// Weights uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases 0. Encoder layers first,
/// then decoder weights, each in row-major order.
void init_weights(Model& model, Rng& rng);

/// Concatenates greedily trained single-stage models into one stack.
Model stack_models(const std::vector<Model>& stages, const std::string& preset);

// ---- checkpoints ------------------------------------------------------------

/// Writes one STCM1 file per parameter (`<name>.stcm`) and `manifest.txt`. `extra` entries
/// (seed, training config echo, ...) are appended to the manifest.
void save_checkpoint(const Model& model, const std::filesystem::path& dir, const Config& extra = {});
Model load_checkpoint(const std::filesystem::path& dir);
/// The manifest only.
Config load_manifest(const std::filesystem::path& dir);

}  // namespace stcm
