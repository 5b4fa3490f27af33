#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "stcm/datasets.hpp"
#include "stcm/rng.hpp"

using namespace stcm;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("stcm_datasets_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::vector<Index> lengths(const SceneIndex& idx) {
  std::vector<Index> out;
  for (const Scene& s : idx.scenes) out.push_back(s.length);
  return out;
}

// Direct restatement of the cut rule, written independently of the library.
SceneIndex rule_oracle(const Tensor& frames, double k, Index min_len, Index max_len) {
  const Index n = frames.extent(0);
  const Index d = frames.size() / n;
  std::vector<double> dist;
  for (Index t = 0; t + 1 < n; ++t) {
    double s = 0.0;
    for (Index i = 0; i < d; ++i) {
      const double e = frames[(t + 1) * d + i] - frames[t * d + i];
      s += e * e;
    }
    dist.push_back(std::sqrt(s));
  }
  double mean = 0.0, var = 0.0;
  for (double v : dist) mean += v / static_cast<double>(dist.size());
  for (double v : dist) var += (v - mean) * (v - mean) / static_cast<double>(dist.size());
  const double thr = mean + k * std::sqrt(var);
  SceneIndex idx;
  Index start = 0;
  for (Index t = 1; t <= n; ++t) {
    if (t == n || dist[t - 1] > thr || t - start == max_len) {
      if (t - start >= min_len) idx.scenes.push_back({start, t - start});
      start = t;
    }
  }
  return idx;
}

std::string cifar_record(int label, int salt) {
  std::string r(1, static_cast<char>(label));
  for (int i = 0; i < 3072; ++i) r.push_back(static_cast<char>((i * 13 + salt) % 256));
  return r;
}

}  // namespace

TEST(Segment, ConstantVideoForcedCuts) {
  EXPECT_EQ(lengths(segment_scenes(Tensor({100, 1, 2, 2}, 0.5), 3.0, 2, 40)), (std::vector<Index>{40, 40, 20}));
}

TEST(Segment, CutsAtJump) {
  Tensor f({100, 1, 2, 2});
  for (Index t = 50; t < 100; ++t)
    for (Index i = 0; i < 4; ++i) f[t * 4 + i] = 1.0;
  const SceneIndex idx = segment_scenes(f, 3.0, 2, 100);
  ASSERT_EQ(idx.scenes.size(), 2u);
  EXPECT_EQ(idx.scenes[0], (Scene{0, 50}));
  EXPECT_EQ(idx.scenes[1], (Scene{50, 50}));
}

TEST(Segment, MatchesRuleOracle) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    Tensor f = rng_normal(rng, 0.0, 0.1, {200, 1, 3, 3});
    for (Index t = 1; t < 200; ++t) {
      const double jump = rng.uniform() < 0.08 ? 3.0 : 0.0;
      for (Index i = 0; i < 9; ++i) f[t * 9 + i] += f[(t - 1) * 9 + i] + jump;
    }
    const double k = 0.5 + static_cast<double>(seed % 3);
    EXPECT_EQ(segment_scenes(f, k, 2, 40), rule_oracle(f, k, 2, 40)) << "seed " << seed;
  }
}

TEST(Segment, DropsShortScenes) {
  Tensor f({10, 1, 1, 1});
  f[1] = 5.0;  // frames 0 and 1 differ sharply from their neighbours
  const SceneIndex idx = segment_scenes(f, 1.0, 2, 40);
  for (const Scene& s : idx.scenes) EXPECT_GE(s.length, 2);
  EXPECT_NO_THROW(idx.validate(10, 2, 40));
  EXPECT_THROW(segment_scenes(Tensor({1, 1, 1, 1}), 3.0, 2, 40), DataError);
}

TEST(SceneIndex, ValidateAndLookup) {
  SceneIndex idx;
  idx.scenes = {{0, 3}, {5, 2}};
  EXPECT_NO_THROW(idx.validate(7));
  EXPECT_THROW(idx.validate(6), DataError);
  EXPECT_THROW(idx.validate(7, 3), DataError);
  EXPECT_EQ(idx.covered_frames(), 5);
  EXPECT_EQ(idx.adjacent_pairs(), 3);
  EXPECT_EQ(idx.scene_of(6), std::optional<std::size_t>(1));
  EXPECT_EQ(idx.scene_of(4), std::nullopt);
  SceneIndex overlap;
  overlap.scenes = {{0, 3}, {2, 2}};
  EXPECT_THROW(overlap.validate(10), DataError);
}

TEST(Zca, IdentityCovarianceGivesIdentity) {
  // +-1 on each axis separately: mean 0, covariance I.
  Tensor x({8, 4});
  for (Index a = 0; a < 4; ++a) {
    x(2 * a, a) = 2.0;
    x(2 * a + 1, a) = -2.0;
  }
  // Eight rows, each axis carries 2^2 * 2 / 8 = 1 of variance.
  const ZcaTransform z = zca_fit(x, 0.0);
  for (Index i = 0; i < 4; ++i)
    for (Index j = 0; j < 4; ++j) EXPECT_NEAR(z.matrix(i, j), i == j ? 1.0 : 0.0, 1e-8);
}

TEST(Zca, UnitVarianceScalarPreserved) {
  const Tensor x({4, 1}, {-1, 1, -1, 1});
  const Tensor w = zca_apply(zca_fit(x, 0.0), x);
  for (Index i = 0; i < 4; ++i) EXPECT_NEAR(w[i], x[i], 1e-12);
}

TEST(Zca, WhitensFullRankData) {
  Rng rng(16);
  const Tensor raw = rng_normal(rng, 0, 1, {500, 16});
  const Tensor mix = rng_normal(rng, 0, 1, {16, 16});
  Tensor x({500, 16});
  x.rows() = raw.rows() * mix.rows();
  for (Index i = 0; i < x.size(); ++i) x[i] += 3.0;

  const ZcaTransform z = zca_fit(x, 0.0);
  const Tensor w = zca_apply(z, x);
  const Tensor cov = oracle::recompute_covariance(w);
  for (Index i = 0; i < 16; ++i) {
    double m = 0.0;
    for (Index n = 0; n < 500; ++n) m += w(n, i);
    EXPECT_LE(std::abs(m / 500.0), 1e-10);
    for (Index j = 0; j < 16; ++j) {
      EXPECT_NEAR(cov(i, j), i == j ? 1.0 : 0.0, 1e-6);
      EXPECT_NEAR(z.matrix(i, j), z.matrix(j, i), 1e-8);
    }
  }

  // With the default relative regularizer the whitened spectrum is l / (l + lambda).
  const ZcaTransform reg = zca_fit(x, 1e-5);
  EXPECT_GT(reg.lambda, 0.0);
  const Tensor cov_reg = oracle::recompute_covariance(zca_apply(reg, x));
  for (Index i = 0; i < 16; ++i) EXPECT_LT(cov_reg(i, i), 1.0);
}

TEST(Zca, RankDeficientNeedsRegularizer) {
  Tensor x({3, 5});
  for (Index i = 0; i < 15; ++i) x[i] = static_cast<double>(i % 4);
  EXPECT_THROW(zca_fit(x, 0.0), NumericError);
  EXPECT_NO_THROW(zca_fit(x, 1e-3));
  EXPECT_THROW(zca_fit(x, -1.0), ArgumentError);
}

TEST(Toy, FullGridAndLatents) {
  const FrameDataset d = gen_toy_rotation(16, 1.0);
  EXPECT_EQ(d.size(), 8100);
  EXPECT_EQ(d.scenes.scenes.size(), 90u);
  EXPECT_EQ(d.latents[90 * 3 + 7], (std::vector<double>{7.0, 3.0}));
  EXPECT_NO_THROW(d.validate());
  EXPECT_THROW(gen_toy_rotation(16, 7.0), ArgumentError);
  EXPECT_EQ(render_toy_frame(16, 12.0, 40.0), render_toy_frame(16, 12.0, 40.0));
}

TEST(Toy, AdjacentYawCloserThanTenDegrees) {
  const FrameDataset d = gen_toy_rotation(32, 1.0);
  const auto x = d.frames.rows();
  Index total = 0, closer = 0;
  for (Index roll = 0; roll < 90; ++roll) {
    for (Index yaw = 0; yaw + 10 < 90; ++yaw) {
      const Index i = roll * 90 + yaw;
      ++total;
      closer += (x.row(i + 1) - x.row(i)).norm() < (x.row(i + 10) - x.row(i)).norm();
    }
  }
  EXPECT_GE(static_cast<double>(closer), 0.99 * static_cast<double>(total));
}

TEST(Video, StillScenesAndDeterminism) {
  VideoOptions o;
  o.num_scenes = 4;
  o.kind = VideoKind::translating_texture;
  o.speed = 0.0;
  Rng rng(1);
  const FrameDataset still = gen_synthetic_video(o, rng);
  const auto x = still.frames.rows();
  for (const Scene& s : still.scenes.scenes)
    for (Index t = s.start + 1; t < s.end(); ++t) EXPECT_EQ(x.row(t), x.row(s.start));

  o.kind = VideoKind::mixed;
  o.speed = 1.0;
  Rng a(9), b(9);
  const FrameDataset da = gen_synthetic_video(o, a);
  EXPECT_EQ(da.frames, gen_synthetic_video(o, b).frames);
  EXPECT_NO_THROW(da.scenes.validate(da.size(), o.min_scene_len, o.max_scene_len));
  EXPECT_EQ(da.frame_shape(), (Shape{3, 32, 32}));
}

TEST(Video, AdjacentCloserThanCrossScene) {
  VideoOptions o;
  o.num_scenes = 12;
  Rng rng(2);
  const FrameDataset d = gen_synthetic_video(o, rng);
  const auto x = d.frames.rows();
  double adj = 0.0, cross = 0.0;
  Index na = 0, nc = 0;
  for (std::size_t s = 0; s < d.scenes.scenes.size(); ++s) {
    const Scene sc = d.scenes.scenes[s];
    for (Index t = sc.start; t + 1 < sc.end(); ++t, ++na) adj += (x.row(t + 1) - x.row(t)).norm();
    const Scene other = d.scenes.scenes[(s + 1) % d.scenes.scenes.size()];
    for (Index t = 0; t < std::min(sc.length, other.length); ++t, ++nc)
      cross += (x.row(other.start + t) - x.row(sc.start + t)).norm();
  }
  EXPECT_LT(adj / static_cast<double>(na), cross / static_cast<double>(nc));
  EXPECT_EQ(parse_video_kind("rotating_pattern"), VideoKind::rotating_pattern);
  EXPECT_THROW(parse_video_kind("spinning"), ConfigError);
}

TEST(Cifar, FixtureDecodesKnownBytes) {
  const fs::path dir = scratch("cifar");
  const std::string r0 = cifar_record(3, 0), r1 = cifar_record(9, 5);
  std::ofstream(dir / "test_batch.bin", std::ios::binary) << r0 << r1;
  const FrameDataset d = load_cifar10(dir, CifarSplit::test);
  ASSERT_EQ(d.size(), 2);
  EXPECT_EQ(d.labels, (std::vector<int>{3, 9}));
  EXPECT_EQ(d.frame_shape(), (Shape{3, 32, 32}));
  // Planar layout: byte 1 + c*1024 + i*32 + j is pixel (c, i, j).
  EXPECT_EQ(d.frames(0, 1, 2, 3), static_cast<unsigned char>(r0[1 + 1024 + 2 * 32 + 3]) / 255.0);
  EXPECT_EQ(d.frames(1, 2, 31, 31), static_cast<unsigned char>(r1[3072]) / 255.0);
  fs::remove_all(dir);
}

TEST(Cifar, RejectsMalformedFiles) {
  const fs::path dir = scratch("cifar_bad");
  std::ofstream(dir / "short.bin", std::ios::binary) << cifar_record(1, 0) << "xyz";
  try {
    load_cifar10(dir / "short.bin");
    ADD_FAILURE() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 3073u);
  }
  std::ofstream(dir / "label.bin", std::ios::binary) << cifar_record(1, 0) << cifar_record(12, 0);
  try {
    load_cifar10(dir / "label.bin");
    ADD_FAILURE() << "expected FormatError";
  } catch (const FormatError& e) {
    EXPECT_EQ(e.offset(), 3073u);
  }
  EXPECT_ANY_THROW(load_cifar10(dir / "missing.bin"));
  fs::remove_all(dir);
}

TEST(Patches, IdentityCropAndPairs) {
  VideoOptions o;
  o.num_scenes = 3;
  o.channels = 1;
  o.resolution = 8;
  Rng g(3);
  const FrameDataset v = gen_synthetic_video(o, g);
  Rng rng(4);
  const FrameDataset p = extract_patches(v, 8, 5, rng);
  EXPECT_EQ(p.size(), 10);
  EXPECT_EQ(p.scenes.scenes[2], (Scene{4, 2}));
  // Full-size crops are whole adjacent frames.
  const auto x = v.frames.rows();
  const auto y = p.frames.rows();
  for (Index k = 0; k < 5; ++k) {
    bool found = false;
    for (Index t = 0; t + 1 < v.size() && !found; ++t) found = y.row(2 * k) == x.row(t) && y.row(2 * k + 1) == x.row(t + 1);
    EXPECT_TRUE(found) << "crop " << k;
  }
  EXPECT_THROW(extract_patches(v, 9, 1, rng), ArgumentError);
}

TEST(Patches, MatchesCoordinateReplay) {
  VideoOptions o;
  o.num_scenes = 4;
  Rng g(5);
  const FrameDataset v = gen_synthetic_video(o, g);
  Rng rng(6);
  const FrameDataset p = extract_patches(v, 5, 20, rng);

  std::vector<Index> firsts;
  for (const Scene& s : v.scenes.scenes)
    for (Index t = s.start; t + 1 < s.end(); ++t) firsts.push_back(t);
  Rng replay(6);
  for (Index k = 0; k < 20; ++k) {
    const Index t = firsts[replay.uniform_index(firsts.size())];
    const Index r = static_cast<Index>(replay.uniform_index(32 - 5 + 1));
    const Index c = static_cast<Index>(replay.uniform_index(32 - 5 + 1));
    for (Index f = 0; f < 2; ++f)
      for (Index i = 0; i < 5; ++i)
        for (Index j = 0; j < 5; ++j) {
          const double gray = (v.frames(t + f, 0, r + i, c + j) + v.frames(t + f, 1, r + i, c + j) +
                               v.frames(t + f, 2, r + i, c + j)) / 3.0;
          ASSERT_EQ(p.frames(2 * k + f, 0, i, j), gray);
        }
  }
}

TEST(Storage, SaveLoadRoundTripAndSplit) {
  VideoOptions o;
  o.num_scenes = 5;
  o.resolution = 8;
  Rng g(7);
  FrameDataset v = gen_synthetic_video(o, g);
  v.labels.assign(static_cast<std::size_t>(v.size()), 4);
  const fs::path dir = scratch("store");
  Config manifest;
  manifest.set("kind", "video");
  save_dataset(v, dir, manifest);
  const FrameDataset back = load_dataset(dir);
  EXPECT_EQ(back.scenes, v.scenes);
  EXPECT_EQ(back.labels, v.labels);
  for (Index i = 0; i < v.frames.size(); ++i) ASSERT_EQ(back.frames[i], static_cast<double>(static_cast<float>(v.frames[i])));

  const auto [train, held] = split_scenes(v, 2);
  EXPECT_EQ(train.scenes.scenes.size(), 3u);
  EXPECT_EQ(held.scenes.scenes.size(), 2u);
  EXPECT_EQ(held.scenes.scenes.front().start, 0);
  EXPECT_EQ(train.size() + held.size(), v.size());
  EXPECT_THROW(split_scenes(v, 5), ArgumentError);
  fs::remove_all(dir);
}
