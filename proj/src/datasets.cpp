#include "stcm/datasets.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <sstream>

#include "stcm/tensor_io.hpp"

namespace stcm {

namespace {

constexpr Index kCifarRecord = 3073;
constexpr Index kCifarSide = 32;

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }

Tensor flatten_rows(const Tensor& frames) { return frames.reshaped({frames.extent(0), frames.size() / frames.extent(0)}); }

}  // namespace

// ---- SceneIndex -------------------------------------------------------------------

void SceneIndex::validate(Index n_frames, Index min_len, Index max_len) const {
  Index next_free = 0;
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    const Scene& s = scenes[i];
    if (s.start < next_free) throw DataError("scene " + std::to_string(i) + " overlaps or is out of order");
    if (s.length < min_len || s.length > max_len) {
      throw DataError("scene " + std::to_string(i) + " has length " + std::to_string(s.length) + " outside [" +
                      std::to_string(min_len) + ", " + std::to_string(max_len) + "]");
    }
    if (s.end() > n_frames) throw DataError("scene " + std::to_string(i) + " extends past the last frame");
    next_free = s.end();
  }
}

Index SceneIndex::covered_frames() const {
  Index n = 0;
  for (const Scene& s : scenes) n += s.length;
  return n;
}

Index SceneIndex::adjacent_pairs() const {
  Index n = 0;
  for (const Scene& s : scenes) n += s.length - 1;
  return n;
}

std::optional<std::size_t> SceneIndex::scene_of(Index frame) const {
  auto it = std::upper_bound(scenes.begin(), scenes.end(), frame,
                             [](Index f, const Scene& s) { return f < s.start; });
  if (it == scenes.begin()) return std::nullopt;
  --it;
  if (frame < it->end()) return static_cast<std::size_t>(it - scenes.begin());
  return std::nullopt;
}

void FrameDataset::validate() const {
  if (frames.is_null() || frames.rank() != 4) throw DataError("dataset frames must be [N,C,H,W]");
  scenes.validate(size());
  if (!labels.empty() && static_cast<Index>(labels.size()) != size()) throw DataError("labels must have one entry per frame");
  if (!latents.empty() && static_cast<Index>(latents.size()) != size()) {
    throw DataError("latents must have one entry per frame");
  }
}

// ---- segmentation ---------------------------------------------------------------------

SceneIndex segment_scenes(const Tensor& frames, double threshold_k, Index min_len, Index max_len) {
  if (frames.is_null() || frames.extent(0) < 2) throw DataError("segment_scenes: need at least 2 frames");
  if (min_len < 1 || max_len < min_len) throw ArgumentError("segment_scenes: require 1 <= min_len <= max_len");
  const Index n = frames.extent(0);
  const auto x = frames.rows();
  std::vector<double> dist(static_cast<std::size_t>(n - 1));
  for (Index t = 0; t + 1 < n; ++t) dist[t] = (x.row(t + 1) - x.row(t)).norm();
  double mean = 0.0;
  for (double d : dist) mean += d;
  mean /= static_cast<double>(dist.size());
  double var = 0.0;
  for (double d : dist) var += (d - mean) * (d - mean);
  const double stddev = std::sqrt(var / static_cast<double>(dist.size()));
  const double threshold = mean + threshold_k * stddev;

  SceneIndex index;
  Index start = 0;
  auto close = [&](Index end) {
    if (end - start >= min_len) index.scenes.push_back({start, end - start});
    start = end;
  };
  for (Index t = 1; t < n; ++t) {
    if (dist[t - 1] > threshold || t - start == max_len) close(t);
  }
  close(n);
  return index;
}

// ---- ZCA ------------------------------------------------------------------------------

ZcaTransform zca_fit(const Tensor& frames, double lambda, bool relative) {
  if (!(lambda >= 0.0)) throw ArgumentError("zca_fit: lambda must be >= 0");
  if (frames.is_null() || frames.rank() < 2) throw ShapeError("zca_fit: frames must be [N, ...]");
  const Tensor flat = flatten_rows(frames);
  const Index n = flat.extent(0);
  const Index dim = flat.extent(1);
  const auto X = flat.rows();

  ZcaTransform z;
  z.mean = Tensor({dim});
  z.mean.vec() = X.colwise().mean().transpose();
  const RowMatrix<double> centred = X.rowwise() - z.mean.vec().transpose();
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(dim, dim);
  cov.selfadjointView<Eigen::Lower>().rankUpdate(centred.transpose(), 1.0 / static_cast<double>(n));
  cov = cov.selfadjointView<Eigen::Lower>();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  if (solver.info() != Eigen::Success) throw NumericError("zca_fit: eigendecomposition failed");
  Eigen::VectorXd evals = solver.eigenvalues();
  if (evals.minCoeff() < -1e-10) {
    throw NumericError("zca_fit: covariance has negative eigenvalue " + std::to_string(evals.minCoeff()));
  }
  evals = evals.cwiseMax(0.0);
  z.lambda = relative ? lambda * evals.mean() : lambda;
  const Eigen::VectorXd shifted = evals.array() + z.lambda;
  if (shifted.minCoeff() <= 0.0) throw NumericError("zca_fit: singular covariance needs lambda > 0");
  const Eigen::VectorXd scale = shifted.cwiseSqrt().cwiseInverse();
  const Eigen::MatrixXd& E = solver.eigenvectors();
  Eigen::MatrixXd W = E * scale.asDiagonal() * E.transpose();
  W = 0.5 * (W + W.transpose()).eval();
  z.matrix = Tensor({dim, dim});
  z.matrix.rows() = W;
  return z;
}

Tensor zca_apply(const ZcaTransform& zca, const Tensor& frames) {
  const Tensor flat = flatten_rows(frames);
  if (flat.extent(1) != zca.mean.size()) {
    throw ShapeError("zca_apply: frame dimension " + std::to_string(flat.extent(1)) + " vs transform " +
                     std::to_string(zca.mean.size()));
  }
  Tensor out(frames.shape());
  auto Y = out.rows();
  Y.noalias() = (flat.rows().rowwise() - zca.mean.vec().transpose()) * zca.matrix.rows();
  return out;
}

// ---- toy rotation ------------------------------------------------------------------------

namespace {

struct Vec3 {
  double x, y, z;
};

// Planform in the object's plane; nose points to +a.
bool on_airplane(double a, double b) {
  const double ab = std::abs(b);
  const bool fuselage = (a / 0.85) * (a / 0.85) + (b / 0.13) * (b / 0.13) <= 1.0;
  const bool wing = ab <= 0.8 && a >= -0.22 - 0.3 * ab && a <= 0.12 - 0.3 * ab;
  const bool tail = ab <= 0.32 && a >= -0.86 - 0.1 * ab && a <= -0.66 - 0.2 * ab;
  return fuselage || wing || tail;
}

double albedo(double a, double b) {
  return 0.55 + 0.35 * (0.5 + 0.5 * std::sin(7.0 * a) * std::cos(5.0 * b + 1.0)) + 0.1 * b;
}

}  // namespace

Tensor render_toy_frame(Index resolution, double yaw_degrees, double roll_degrees) {
  if (resolution < 1) throw ArgumentError("render_toy_frame: resolution must be positive");
  const double yaw = deg2rad(yaw_degrees - 45.0);
  const double roll = deg2rad(roll_degrees - 45.0);
  const double cy = std::cos(yaw), sy = std::sin(yaw), cr = std::cos(roll), sr = std::sin(roll);
  // R = Ry(yaw) * Rx(roll); columns are the object's axes in view space.
  const Vec3 ax{cy, 0.0, -sy};
  const Vec3 ay{sy * sr, cr, cy * sr};
  const Vec3 n{sy * cr, -sr, cy * cr};
  const double light_norm = std::sqrt(0.4 * 0.4 + 0.5 * 0.5 + 0.77 * 0.77);
  const Vec3 light{0.4 / light_norm, 0.5 / light_norm, 0.77 / light_norm};
  const double shade = 0.25 + 0.75 * std::max(0.0, n.x * light.x + n.y * light.y + n.z * light.z);

  constexpr int kSuper = 3;
  Tensor frame({1, resolution, resolution});
  const double r = static_cast<double>(resolution);
  for (Index i = 0; i < resolution; ++i) {
    for (Index j = 0; j < resolution; ++j) {
      double acc = 0.0;
      for (int si = 0; si < kSuper; ++si) {
        for (int sj = 0; sj < kSuper; ++sj) {
          const double u = (static_cast<double>(j) + (sj + 0.5) / kSuper) / r * 2.0 - 1.0;
          const double v = 1.0 - (static_cast<double>(i) + (si + 0.5) / kSuper) / r * 2.0;
          const double z = -(n.x * u + n.y * v) / n.z;
          const double a = ax.x * u + ax.y * v + ax.z * z;
          const double b = ay.x * u + ay.y * v + ay.z * z;
          if (on_airplane(a, b)) acc += albedo(a, b) * shade;
        }
      }
      frame(0, i, j) = acc / (kSuper * kSuper);
    }
  }
  return frame;
}

FrameDataset gen_toy_rotation(Index resolution, double step_degrees) {
  if (!(step_degrees > 0.0)) throw ArgumentError("gen_toy_rotation: step must be positive");
  const double steps = 90.0 / step_degrees;
  const Index count = static_cast<Index>(std::llround(steps));
  if (count < 1 || std::abs(steps - static_cast<double>(count)) > 1e-9) {
    throw ArgumentError("gen_toy_rotation: 90 must be divisible by the step");
  }
  FrameDataset data;
  data.frames = Tensor({count * count, 1, resolution, resolution});
  const Index stride = resolution * resolution;
  for (Index ri = 0; ri < count; ++ri) {
    for (Index yi = 0; yi < count; ++yi) {
      const double yaw = static_cast<double>(yi) * step_degrees;
      const double roll = static_cast<double>(ri) * step_degrees;
      const Index idx = ri * count + yi;
      data.frames.vec().segment(idx * stride, stride) = render_toy_frame(resolution, yaw, roll).vec();
      data.latents.push_back({yaw, roll});
    }
    data.scenes.scenes.push_back({ri * count, count});
  }
  return data;
}

// ---- synthetic video -----------------------------------------------------------------------

VideoKind parse_video_kind(const std::string& name) {
  if (name == "translating_texture") return VideoKind::translating_texture;
  if (name == "rotating_pattern") return VideoKind::rotating_pattern;
  if (name == "mixed") return VideoKind::mixed;
  throw ConfigError("unknown video kind '" + name + "' (translating_texture|rotating_pattern|mixed)");
}

std::string video_kind_name(VideoKind kind) {
  switch (kind) {
    case VideoKind::translating_texture: return "translating_texture";
    case VideoKind::rotating_pattern: return "rotating_pattern";
    case VideoKind::mixed: return "mixed";
  }
  return "mixed";
}

namespace {

// Periodic texture [C, S, S] built from random low-frequency plane waves, scaled to [0, 1].
Tensor random_texture(Index channels, Index side, Rng& rng) {
  constexpr int kWaves = 8;
  constexpr int kMaxFreq = 5;
  Tensor tex({channels, side, side});
  const double two_pi_over_s = 2.0 * std::numbers::pi / static_cast<double>(side);
  // A luminance field shared by all channels plus one chroma field per channel.
  auto field = [&]() {
    struct Wave {
      double fx, fy, phase, amp;
    };
    std::vector<Wave> waves;
    for (int k = 0; k < kWaves; ++k) {
      Wave w{};
      do {
        w.fx = static_cast<double>(static_cast<Index>(rng.uniform_index(2 * kMaxFreq + 1)) - kMaxFreq);
        w.fy = static_cast<double>(static_cast<Index>(rng.uniform_index(2 * kMaxFreq + 1)) - kMaxFreq);
      } while (w.fx == 0.0 && w.fy == 0.0);
      w.phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
      w.amp = rng.uniform(0.2, 1.0);
      waves.push_back(w);
    }
    Tensor f({side, side});
    for (Index y = 0; y < side; ++y)
      for (Index x = 0; x < side; ++x) {
        double acc = 0.0;
        for (const Wave& w : waves) {
          acc += w.amp * std::cos(two_pi_over_s * (w.fx * static_cast<double>(x) + w.fy * static_cast<double>(y)) + w.phase);
        }
        f(y, x) = acc;
      }
    return f;
  };
  const Tensor luminance = field();
  for (Index c = 0; c < channels; ++c) {
    const Tensor chroma = field();
    const double mix = rng.uniform(0.2, 0.8);
    tex.vec().segment(c * side * side, side * side) = mix * luminance.vec() + (1.0 - mix) * chroma.vec();
  }
  const double lo = tex.vec().minCoeff(), hi = tex.vec().maxCoeff();
  tex.vec() = (tex.vec().array() - lo) / (hi - lo);
  return tex;
}

double sample_bilinear(const double* plane, Index side, double x, double y) {
  const double fx = std::floor(x), fy = std::floor(y);
  const double tx = x - fx, ty = y - fy;
  auto wrap = [side](double v) {
    Index i = static_cast<Index>(v) % side;
    return i < 0 ? i + side : i;
  };
  const Index x0 = wrap(fx), x1 = wrap(fx + 1.0), y0 = wrap(fy), y1 = wrap(fy + 1.0);
  const double top = plane[y0 * side + x0] * (1.0 - tx) + plane[y0 * side + x1] * tx;
  const double bottom = plane[y1 * side + x0] * (1.0 - tx) + plane[y1 * side + x1] * tx;
  return top * (1.0 - ty) + bottom * ty;
}

}  // namespace

FrameDataset gen_synthetic_video(const VideoOptions& o, Rng& rng) {
  if (o.num_scenes < 1 || o.min_scene_len < 1 || o.max_scene_len < o.min_scene_len || o.resolution < 1 ||
      o.channels < 1) {
    throw ArgumentError("gen_synthetic_video: sizes must be positive and min_scene_len <= max_scene_len");
  }
  const Index r = o.resolution;
  const Index side = 2 * r;
  std::vector<Index> lengths;
  for (Index s = 0; s < o.num_scenes; ++s) {
    lengths.push_back(o.min_scene_len + static_cast<Index>(rng.uniform_index(o.max_scene_len - o.min_scene_len + 1)));
  }
  Index total = 0;
  for (Index len : lengths) total += len;

  FrameDataset data;
  data.frames = Tensor({total, o.channels, r, r});
  const bool translate = o.kind != VideoKind::rotating_pattern;
  const bool rotate = o.kind != VideoKind::translating_texture;
  const double centre = 0.5 * static_cast<double>(r - 1);
  Index frame = 0;
  for (Index s = 0; s < o.num_scenes; ++s) {
    const Tensor tex = random_texture(o.channels, side, rng);
    const double ox = rng.uniform(0.0, static_cast<double>(side));
    const double oy = rng.uniform(0.0, static_cast<double>(side));
    const double heading = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double vx = translate ? o.speed * std::cos(heading) : 0.0;
    const double vy = translate ? o.speed * std::sin(heading) : 0.0;
    const double theta0 = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double omega = rotate ? (rng.uniform() < 0.5 ? -1.0 : 1.0) * deg2rad(o.rotation_speed) : 0.0;
    data.scenes.scenes.push_back({frame, lengths[s]});
    for (Index t = 0; t < lengths[s]; ++t, ++frame) {
      const double theta = theta0 + omega * static_cast<double>(t);
      const double c = std::cos(theta), sn = std::sin(theta);
      const double tx = ox + vx * static_cast<double>(t), ty = oy + vy * static_cast<double>(t);
      for (Index ch = 0; ch < o.channels; ++ch) {
        const double* plane = tex.data() + ch * side * side;
        for (Index i = 0; i < r; ++i)
          for (Index j = 0; j < r; ++j) {
            const double dx = static_cast<double>(j) - centre, dy = static_cast<double>(i) - centre;
            data.frames(frame, ch, i, j) = sample_bilinear(plane, side, tx + c * dx - sn * dy, ty + sn * dx + c * dy);
          }
      }
    }
  }
  return data;
}

// ---- CIFAR-10 ----------------------------------------------------------------------------------

namespace {

void append_cifar_file(const std::filesystem::path& file, std::vector<unsigned char>& pixels, std::vector<int>& labels) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open CIFAR-10 batch " + file.string());
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const Index size = static_cast<Index>(bytes.size());
  if (size == 0) throw FormatError(file.string() + ": empty CIFAR-10 batch", 0);
  if (size % kCifarRecord != 0) {
    throw FormatError(file.string() + ": truncated record (file size " + std::to_string(size) +
                          " is not a multiple of 3073)",
                      static_cast<std::uint64_t>(size / kCifarRecord * kCifarRecord));
  }
  for (Index off = 0; off < size; off += kCifarRecord) {
    const int label = bytes[off];
    if (label > 9) throw FormatError(file.string() + ": label " + std::to_string(label) + " outside 0..9", off);
    labels.push_back(label);
    pixels.insert(pixels.end(), bytes.begin() + off + 1, bytes.begin() + off + kCifarRecord);
  }
}

}  // namespace

FrameDataset load_cifar10(const std::filesystem::path& path, CifarSplit split) {
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(path)) {
    if (split == CifarSplit::train) {
      for (int i = 1; i <= 5; ++i) files.push_back(path / ("data_batch_" + std::to_string(i) + ".bin"));
    } else {
      files.push_back(path / "test_batch.bin");
    }
  } else {
    files.push_back(path);
  }
  std::vector<unsigned char> pixels;
  std::vector<int> labels;
  for (const auto& f : files) append_cifar_file(f, pixels, labels);
  FrameDataset data;
  data.frames = Tensor({static_cast<Index>(labels.size()), 3, kCifarSide, kCifarSide});
  for (std::size_t i = 0; i < pixels.size(); ++i) data.frames[static_cast<Index>(i)] = pixels[i] / 255.0;
  data.labels = std::move(labels);
  return data;
}

// ---- patches -----------------------------------------------------------------------------------

FrameDataset extract_patches(const FrameDataset& data, Index patch_size, Index count, Rng& rng) {
  if (data.frames.rank() != 4) throw ShapeError("extract_patches: frames must be [N,C,H,W]");
  const Index C = data.frames.extent(1), H = data.frames.extent(2), W = data.frames.extent(3);
  if (patch_size < 1 || patch_size > H || patch_size > W) throw ArgumentError("extract_patches: patch larger than frame");
  if (count < 1) throw ArgumentError("extract_patches: count must be positive");
  const Index pairs = data.scenes.adjacent_pairs();
  if (pairs < 1) throw DataError("extract_patches: no adjacent in-scene pairs");

  std::vector<Index> first_frames;
  for (const Scene& s : data.scenes.scenes)
    for (Index t = s.start; t + 1 < s.end(); ++t) first_frames.push_back(t);

  FrameDataset out;
  out.frames = Tensor({2 * count, 1, patch_size, patch_size});
  for (Index p = 0; p < count; ++p) {
    const Index t = first_frames[rng.uniform_index(static_cast<std::uint64_t>(pairs))];
    const Index y = static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(H - patch_size + 1)));
    const Index x = static_cast<Index>(rng.uniform_index(static_cast<std::uint64_t>(W - patch_size + 1)));
    for (Index k = 0; k < 2; ++k) {
      for (Index i = 0; i < patch_size; ++i)
        for (Index j = 0; j < patch_size; ++j) {
          double acc = 0.0;
          for (Index c = 0; c < C; ++c) acc += data.frames(t + k, c, y + i, x + j);
          out.frames(2 * p + k, 0, i, j) = acc / static_cast<double>(C);
        }
    }
    out.scenes.scenes.push_back({2 * p, 2});
  }
  return out;
}

// ---- splitting / storage ------------------------------------------------------------------------

std::pair<FrameDataset, FrameDataset> split_scenes(const FrameDataset& data, Index holdout_scenes) {
  const Index n_scenes = static_cast<Index>(data.scenes.scenes.size());
  if (holdout_scenes < 1 || holdout_scenes >= n_scenes) throw ArgumentError("split_scenes: holdout must leave scenes on both sides");
  const Index cut = data.scenes.scenes[n_scenes - holdout_scenes].start;
  auto part = [&](Index begin, Index end, Index scene_begin, Index scene_end) {
    FrameDataset d;
    d.frames = data.frames.slice_rows(begin, end - begin);
    for (Index s = scene_begin; s < scene_end; ++s) {
      Scene sc = data.scenes.scenes[s];
      sc.start -= begin;
      d.scenes.scenes.push_back(sc);
    }
    if (!data.labels.empty()) d.labels.assign(data.labels.begin() + begin, data.labels.begin() + end);
    if (!data.latents.empty()) d.latents.assign(data.latents.begin() + begin, data.latents.begin() + end);
    return d;
  };
  return {part(0, cut, 0, n_scenes - holdout_scenes), part(cut, data.size(), n_scenes - holdout_scenes, n_scenes)};
}

FrameDataset with_frames(const FrameDataset& data, Tensor frames) {
  if (frames.extent(0) != data.size()) throw ShapeError("with_frames: frame count changed");
  FrameDataset out = data;
  out.frames = std::move(frames);
  return out;
}

void save_dataset(const FrameDataset& data, const std::filesystem::path& dir, const Config& manifest) {
  std::filesystem::create_directories(dir);
  write_tensor(dir / "frames.stcm", data.frames);
  {
    std::ofstream out(dir / "scenes.txt", std::ios::trunc);
    for (const Scene& s : data.scenes.scenes) out << s.start << ' ' << s.length << '\n';
  }
  if (!data.labels.empty()) {
    std::ofstream out(dir / "labels.txt", std::ios::trunc);
    for (int l : data.labels) out << l << '\n';
  }
  if (!data.latents.empty()) {
    std::ofstream out(dir / "latents.txt", std::ios::trunc);
    out.precision(17);
    for (const auto& row : data.latents) {
      for (std::size_t i = 0; i < row.size(); ++i) out << (i ? " " : "") << row[i];
      out << '\n';
    }
  }
  Config m = manifest;
  m.set("frames", shape_to_string(data.frames.shape()));
  m.set("scenes", std::to_string(data.scenes.scenes.size()));
  std::ofstream out(dir / "manifest.txt", std::ios::trunc);
  out << m.to_text();
}

FrameDataset load_dataset(const std::filesystem::path& dir) {
  FrameDataset data;
  data.frames = read_tensor(dir / "frames.stcm");
  {
    std::ifstream in(dir / "scenes.txt");
    if (!in) throw DataError("dataset " + dir.string() + " has no scenes.txt");
    Index start = 0, length = 0;
    while (in >> start >> length) data.scenes.scenes.push_back({start, length});
    if (!in.eof()) throw DataError("malformed scenes.txt in " + dir.string());
  }
  if (std::ifstream in(dir / "labels.txt"); in) {
    int l = 0;
    while (in >> l) data.labels.push_back(l);
  }
  if (std::ifstream in(dir / "latents.txt"); in) {
    std::string line;
    while (std::getline(in, line)) {
      std::istringstream ls(line);
      std::vector<double> row;
      double v = 0.0;
      while (ls >> v) row.push_back(v);
      data.latents.push_back(std::move(row));
    }
  }
  data.validate();
  return data;
}

}  // namespace stcm
