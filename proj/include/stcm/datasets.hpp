#pragma once

#include <filesystem>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "stcm/config.hpp"
#include "stcm/rng.hpp"
#include "stcm/tensor.hpp"

namespace stcm {

struct Scene {
  Index start = 0;
  Index length = 0;

  Index end() const { return start + length; }
  Index middle() const { return start + length / 2; }
  bool operator==(const Scene&) const = default;
};

/// Sorted, disjoint, contiguous frame ranges. Frames outside every scene (e.g. dropped
/// short segments) take part in retrieval as distractors but never in pair sampling.
struct SceneIndex {
  std::vector<Scene> scenes;

  /// Throws DataError unless scenes are sorted, disjoint, inside [0, n_frames) and have
  /// lengths in [min_len, max_len].
  void validate(Index n_frames, Index min_len = 1, Index max_len = std::numeric_limits<Index>::max()) const;
  Index covered_frames() const;
  Index adjacent_pairs() const;
  /// Scene number containing `frame`, if any.
  std::optional<std::size_t> scene_of(Index frame) const;
  bool operator==(const SceneIndex&) const = default;
};

struct FrameDataset {
  Tensor frames;  // [N, C, H, W]
  SceneIndex scenes;
  std::vector<int> labels;                   // empty or N entries
  std::vector<std::vector<double>> latents;  // empty or N entries

  Index size() const { return frames.is_null() ? 0 : frames.extent(0); }
  Shape frame_shape() const { return Shape(frames.shape().begin() + 1, frames.shape().end()); }
  void validate() const;
};

// ---- scene segmentation ---------------------------------------------------------

/// Cuts between t and t+1 whenever ||x_{t+1} - x_t|| > mean + k * stddev of all adjacent
/// distances (population stddev), forces a cut once a scene reaches `max_len`, and drops
/// scenes shorter than `min_len`.
SceneIndex segment_scenes(const Tensor& frames, double threshold_k = 3.0, Index min_len = 2, Index max_len = 40);

// ---- ZCA whitening --------------------------------------------------------------

struct ZcaTransform {
  Tensor mean;    // [dim]
  Tensor matrix;  // [dim, dim], symmetric
  double lambda = 0.0;  // absolute regularizer actually added to the eigenvalues
};

/// Covariance C = X^T X / N of the centred flattened frames, C = E diag(l) E^T, and
/// matrix = E diag(l + lambda)^(-1/2) E^T. When `relative` is set, the added regularizer
/// is lambda * mean(l). Throws NumericError on eigenvalues below -1e-10 or when a zero
/// eigenvalue meets a zero regularizer.
ZcaTransform zca_fit(const Tensor& frames, double lambda = 1e-5, bool relative = true);
Tensor zca_apply(const ZcaTransform& zca, const Tensor& frames);

// ---- generators -----------------------------------------------------------------

/// Shaded planar airplane silhouette under orthographic projection, rendered for every
/// (yaw, roll) in [0, 90) x [0, 90) degrees at `step_degrees`. Frames are [N,1,r,r]
/// ordered roll-major; each constant-roll row (a yaw sweep) is one scene; latents are
/// {yaw, roll} in degrees.
FrameDataset gen_toy_rotation(Index resolution = 96, double step_degrees = 1.0);

/// One toy frame; deterministic in its arguments.
Tensor render_toy_frame(Index resolution, double yaw_degrees, double roll_degrees);

enum class VideoKind { translating_texture, rotating_pattern, mixed };

VideoKind parse_video_kind(const std::string& name);
std::string video_kind_name(VideoKind kind);

struct VideoOptions {
  VideoKind kind = VideoKind::mixed;
  Index num_scenes = 60;
  Index min_scene_len = 8;
  Index max_scene_len = 20;
  Index resolution = 32;
  Index channels = 3;
  double speed = 1.0;           // pixels per frame
  double rotation_speed = 4.0;  // degrees per frame
};

/// Each scene is a fresh periodic random texture sampled bilinearly under a smooth
/// per-scene motion (sub-pixel translation, in-plane rotation, or both).
FrameDataset gen_synthetic_video(const VideoOptions& options, Rng& rng);

// ---- CIFAR-10 -------------------------------------------------------------------

enum class CifarSplit { train, test };

/// Reads CIFAR-10 binary batches: records of 1 label byte + 3072 pixel bytes (R, G, B
/// planes, each 32x32 row-major). `path` is a single batch file or the directory holding
/// data_batch_1..5.bin / test_batch.bin. Frames are scaled to [0, 1].
FrameDataset load_cifar10(const std::filesystem::path& path, CifarSplit split = CifarSplit::train);

// ---- patches ----------------------------------------------------------------------

/// `count` random crops, each taken at one position from both frames of a uniformly drawn
/// adjacent in-scene pair. Output frames are grayscale (channel mean); scene i is the
/// pair (2i, 2i+1). Draw order per crop: pair, row, column.
FrameDataset extract_patches(const FrameDataset& data, Index patch_size, Index count, Rng& rng);

// ---- splitting and storage -----------------------------------------------------------

/// Last `holdout_scenes` scenes (and their frames) go to the second dataset.
std::pair<FrameDataset, FrameDataset> split_scenes(const FrameDataset& data, Index holdout_scenes);

/// Copy of `data` with frames replaced (e.g. by codes); scene index, labels and latents kept.
FrameDataset with_frames(const FrameDataset& data, Tensor frames);

/// Directory layout: frames.stcm, scenes.txt ("start length" lines), optional labels.txt
/// and latents.txt, plus manifest.txt from `manifest`.
void save_dataset(const FrameDataset& data, const std::filesystem::path& dir, const Config& manifest = {});
FrameDataset load_dataset(const std::filesystem::path& dir);

}  // namespace stcm
