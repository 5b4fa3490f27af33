#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "oracles.hpp"
#include "stcm/datasets.hpp"
#include "stcm/retrieval.hpp"
#include "stcm/rng.hpp"

using namespace stcm;

namespace {

Tensor angles(const std::vector<double>& degrees) {
  Tensor t({static_cast<Index>(degrees.size()), 2});
  for (std::size_t i = 0; i < degrees.size(); ++i) {
    const double r = degrees[i] * std::acos(-1.0) / 180.0;
    t(static_cast<Index>(i), 0) = std::cos(r);
    t(static_cast<Index>(i), 1) = std::sin(r);
  }
  return t;
}

SceneIndex uniform_scenes(Index count, Index length) {
  SceneIndex idx;
  for (Index s = 0; s < count; ++s) idx.scenes.push_back({s * length, length});
  return idx;
}

std::vector<double> span_of(const Tensor& t, Index row) {
  const Index d = t.size() / t.extent(0);
  return {t.data() + row * d, t.data() + (row + 1) * d};
}

}  // namespace

TEST(Cosine, BasicDistances) {
  const std::vector<double> a = {1, 0}, b = {0, 2}, z = {0, 0};
  EXPECT_EQ(cosine_distance(a, a), 0.0);
  EXPECT_EQ(cosine_distance(a, b), 1.0);
  EXPECT_EQ(cosine_distance(a, z), 1.0);
  EXPECT_EQ(cosine_distance(z, z), 0.0);
}

TEST(Knn, SelfMatchAndZeroVectors) {
  const Tensor db({3, 2}, {1, 0, 0, 1, 0, 0});
  const auto lists = knn_cosine(Tensor({1, 2}, {0, 3}), db, 3);
  EXPECT_EQ(lists[0].ids, (std::vector<Index>{1, 0, 2}));
  EXPECT_EQ(lists[0].distances[0], 0.0);
  EXPECT_EQ(lists[0].zero_vector_pairs, 1);
  const std::vector<Index> self = {1};
  EXPECT_EQ(knn_cosine(Tensor({1, 2}, {0, 3}), db, 2, self)[0].ids, (std::vector<Index>{0, 2}));
  EXPECT_THROW(knn_cosine(Tensor({1, 3}), db, 1), ShapeError);
  EXPECT_THROW(knn_cosine(Tensor({1, 2}, {1, 1}), db, 4), ArgumentError);
}

TEST(Knn, MatchesFullSortIncludingTies) {
  Rng rng(100);
  Tensor db({100, 16});
  for (Index i = 0; i < db.size(); ++i) db[i] = static_cast<double>(static_cast<int>(rng.uniform_index(3)) - 1);
  const Tensor q = db.slice_rows(0, 10);
  const auto got = knn_cosine(q, db, 100);
  const auto want = oracle::naive_knn(q, db, 100);
  for (Index i = 0; i < 10; ++i) {
    for (Index j = 0; j < 100; ++j) {
      ASSERT_EQ(got[i].ids[j], want[i][j].id) << "query " << i << " rank " << j;
      ASSERT_EQ(got[i].distances[j], want[i][j].distance);
    }
  }
}

TEST(Knn, ScaleInvariant) {
  Rng rng(101);
  const Tensor db = rng_normal(rng, 0, 1, {60, 8});
  const Tensor q = rng_normal(rng, 0, 1, {5, 8});
  const auto base = knn_cosine(q, db, 60);
  for (double c : {0.25, 8.0}) {
    const auto scaled = knn_cosine(c * q, c * db, 60);
    for (std::size_t i = 0; i < base.size(); ++i) {
      EXPECT_EQ(scaled[i].ids, base[i].ids);
      EXPECT_EQ(scaled[i].distances, base[i].distances);
    }
  }
  const auto odd = knn_cosine(3.7 * q, 3.7 * db, 60);
  for (std::size_t i = 0; i < base.size(); ++i) {
    EXPECT_EQ(odd[i].ids, base[i].ids);
    for (std::size_t j = 0; j < base[i].distances.size(); ++j) EXPECT_NEAR(odd[i].distances[j], base[i].distances[j], 1e-15);
  }
}

TEST(TemporalPr, HandFixture) {
  // Query 1 ranks 3,0,2,5,4 (relevant 0,2); query 4 ranks 5,2,3,1,0 (relevant 3,5).
  const PRCurve c = temporal_pr(angles({0, 10, 30, 15, 90, 60}), uniform_scenes(2, 3), 40);
  ASSERT_EQ(c.points.size(), 5u);
  EXPECT_EQ(c.k_max, 5);
  EXPECT_EQ(c.query_count, 2);
  const double recall[] = {0.25, 0.5, 1.0, 1.0, 1.0};
  const double precision[] = {0.5, 0.5, 2.0 / 3.0, 0.5, 0.4};
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(c.points[i].k, static_cast<Index>(i + 1));
    EXPECT_NEAR(c.points[i].recall, recall[i], 1e-12);
    EXPECT_NEAR(c.points[i].precision, precision[i], 1e-12);
  }
  EXPECT_NEAR(c.auc, 13.0 / 24.0, 1e-12);
  EXPECT_NEAR(c.auc, pr_auc(c.points), 0.0);
}

TEST(TemporalPr, OneHotIsPerfect) {
  Tensor f({20, 4});
  for (Index i = 0; i < 20; ++i) f(i, i / 5) = 1.0;
  const PRCurve c = temporal_pr(f, uniform_scenes(4, 5), 4);
  for (const PRPoint& p : c.points) EXPECT_EQ(p.precision, 1.0);
  EXPECT_EQ(c.points.back().recall, 1.0);
  EXPECT_NEAR(c.auc, 1.0, 1e-12);
}

TEST(TemporalPr, RandomFeaturesHitBaseRate) {
  // Each query has 9 same-scene frames among 499 candidates.
  double p1 = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    Rng rng(seed);
    p1 += temporal_pr(rng_normal(rng, 0, 1, {500, 16}), uniform_scenes(50, 10), 1).points[0].precision;
  }
  EXPECT_NEAR(p1 / 10.0, 9.0 / 499.0, 0.03);
}

TEST(TemporalPr, PerQueryHitCountsAreIntegers) {
  // One scene among uncovered distractors gives a single query.
  Rng rng(7);
  const Tensor f = rng_normal(rng, 0, 1, {30, 4});
  SceneIndex one;
  one.scenes = {{10, 7}};
  const PRCurve c = temporal_pr(f, one, 29);
  EXPECT_EQ(c.query_count, 1);
  for (const PRPoint& p : c.points) {
    const double hits = p.precision * static_cast<double>(p.k);
    EXPECT_NEAR(hits, std::round(hits), 1e-12);
    EXPECT_NEAR(p.recall * 6.0, hits, 1e-12);
  }
  for (std::size_t i = 1; i < c.points.size(); ++i) EXPECT_GE(c.points[i].recall, c.points[i - 1].recall);
  EXPECT_GE(c.auc, 0.0);
  EXPECT_LE(c.auc, 1.0);
}

TEST(TemporalPr, SingleSceneIsAllRelevant) {
  Rng rng(8);
  const PRCurve c = temporal_pr(rng_normal(rng, 0, 1, {6, 3}), uniform_scenes(1, 6), 40);
  for (const PRPoint& p : c.points) EXPECT_EQ(p.precision, 1.0);
  EXPECT_THROW(temporal_pr(Tensor({4, 2}, 1.0), SceneIndex{}, 3), DataError);
}

TEST(TemporalPr, AucMonotoneAsDistractorRecedes) {
  // Scene {0,1,2} around 0 degrees; a distractor walks away from the query.
  double prev = -1.0;
  for (double far : {5.0, 15.0, 25.0, 45.0, 80.0}) {
    SceneIndex idx;
    idx.scenes = {{0, 3}};
    const PRCurve c = temporal_pr(angles({-20, 0, 20, far}), idx, 3);
    EXPECT_GE(c.auc, prev);
    prev = c.auc;
  }
  EXPECT_NEAR(prev, 1.0, 1e-12);
}

TEST(ClassPr, HandFixture) {
  const PRCurve c = class_pr(angles({10, 80}), {0, 1}, angles({0, 25, 40, 90}), {0, 1, 0, 1}, 4);
  const double recall[] = {0.5, 0.5, 1.0, 1.0};
  const double precision[] = {1.0, 0.5, 2.0 / 3.0, 0.5};
  ASSERT_EQ(c.points.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_NEAR(c.points[i].recall, recall[i], 1e-12);
    EXPECT_NEAR(c.points[i].precision, precision[i], 1e-12);
  }
  EXPECT_NEAR(c.auc, 19.0 / 24.0, 1e-12);
}

TEST(ClassPr, OneHotAndShuffledLabels) {
  const Index n = 200;
  std::vector<int> labels(n);
  for (Index i = 0; i < n; ++i) labels[i] = static_cast<int>(i % 10);
  Tensor onehot({n, 10});
  for (Index i = 0; i < n; ++i) onehot(i, labels[i]) = 1.0;
  for (const PRPoint& p : class_pr(onehot, labels, onehot, labels, 20).points) EXPECT_EQ(p.precision, 1.0);

  Rng rng(9);
  double mean = 0.0;
  for (int s = 0; s < 10; ++s) {
    std::vector<int> shuffled = labels;
    rng.shuffle(shuffled.begin(), shuffled.end());
    const PRCurve c = class_pr(onehot.slice_rows(0, 50), std::vector<int>(labels.begin(), labels.begin() + 50), onehot,
                               shuffled, 10);
    for (const PRPoint& p : c.points) mean += p.precision / 100.0;
  }
  EXPECT_NEAR(mean, 0.1, 0.03);
  EXPECT_THROW(class_pr(onehot, {1, 2}, onehot, labels, 5), DataError);
}

TEST(PixelBaselines, ConstantScenesAndIdenticalInputs) {
  Tensor frames({12, 1, 2, 2});
  Rng rng(10);
  for (Index s = 0; s < 3; ++s) {
    const Tensor v = rng_normal(rng, 0, 1, {4});
    for (Index t = 0; t < 4; ++t)
      for (Index i = 0; i < 4; ++i) frames[(s * 4 + t) * 4 + i] = v[i];
  }
  const PixelBaselines b = pixel_baselines(frames, frames, uniform_scenes(3, 4), 3);
  for (const PRPoint& p : b.pixel.points) EXPECT_EQ(p.precision, 1.0);
  EXPECT_EQ(b.pixel.auc, b.whitened.auc);

  VideoOptions o;
  o.num_scenes = 10;
  o.resolution = 8;
  Rng g(11);
  const FrameDataset v = gen_synthetic_video(o, g);
  const PixelBaselines w = pixel_baselines(v.frames, zca_apply(zca_fit(v.frames, 1e-2), v.frames), v.scenes);
  EXPECT_NE(w.pixel.auc, w.whitened.auc);
}

TEST(PrCsv, FormatAndNumbers) {
  PRCurve c;
  c.points = {{1, 0.5, 1.0}, {2, 1.0, 0.75}};
  c.auc = pr_auc(c.points);
  std::ostringstream out;
  write_pr_csv(out, c);
  EXPECT_EQ(out.str(), "k,recall,precision\n1,0.5,1.0\n2,1.0,0.75\n# auc = 0.9375\n");
  EXPECT_EQ(format_number(1.0), "1.0");
  EXPECT_EQ(format_number(0.1), "0.1");
  EXPECT_EQ(format_number(1e-20), "1e-20");
  EXPECT_EQ(format_number(-3.0), "-3.0");
}
