#include <gtest/gtest.h>

#include <boost/math/distributions/chi_squared.hpp>

#include <cmath>
#include <limits>
#include <map>

#include "checks.hpp"
#include "stcm/datasets.hpp"
#include "stcm/errors.hpp"
#include "stcm/training.hpp"

using namespace stcm;

namespace {

SceneIndex scenes_of(std::vector<Scene> s) {
  SceneIndex idx;
  idx.scenes = std::move(s);
  return idx;
}

// A vertical bar moving one column per frame on an 8x8 canvas, wrapping around.
FrameDataset bar_video(Index frames, Index scene_len) {
  FrameDataset d;
  d.frames = Tensor({frames, 1, 8, 8});
  for (Index t = 0; t < frames; ++t)
    for (Index y = 0; y < 8; ++y) d.frames(t, 0, y, t % 8) = 1.0;
  for (Index s = 0; s + scene_len <= frames; s += scene_len) d.scenes.scenes.push_back({s, scene_len});
  return d;
}

FrameDataset random_frames(Index n, Index side, std::uint64_t seed, Index scene_len) {
  Rng rng(seed);
  FrameDataset d;
  d.frames = rng_normal(rng, 0.0, 1.0, {n, 1, side, side});
  for (Index s = 0; s + scene_len <= n; s += scene_len) d.scenes.scenes.push_back({s, scene_len});
  return d;
}

void expect_same_parameters(const Model& a, const Model& b) {
  const auto pa = parameters(a);
  const auto pb = parameters(b);
  ASSERT_EQ(pa.size(), pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) EXPECT_EQ(*pa[i].second, *pb[i].second) << pa[i].first;
}

TrainingConfig quick(Objective o, double lr = 1e-2) {
  TrainingConfig c;
  c.objective = o;
  c.learning_rate = lr;
  c.alpha = 0.1;
  c.beta = 1.0;
  c.batch_size = 4;
  c.epochs = 2;
  return c;
}

}  // namespace

TEST(SamplePairs, RatioArithmetic) {
  const SceneIndex idx = scenes_of({{0, 5}, {6, 4}});
  Rng rng(1);
  const auto big = sample_pairs(idx, rng, 32, 5);
  ASSERT_EQ(big.size(), 30u);
  for (std::size_t i = 0; i < big.size(); ++i) {
    EXPECT_EQ(big[i].relation, i < 5 ? PairRelation::temporal_neighbor : PairRelation::non_neighbor);
  }
  EXPECT_EQ(sample_pairs(idx, rng, 3, 5).size(), 6u);
  EXPECT_EQ(sample_pairs(idx, rng, 8, 0).size(), 8u);
  EXPECT_THROW(sample_pairs(idx, rng, 0, 5), ArgumentError);
}

TEST(SamplePairs, PositivesAdjacentNegativesNot) {
  const SceneIndex idx = scenes_of({{0, 3}, {5, 4}, {10, 2}});
  Rng rng(2);
  for (int rep = 0; rep < 200; ++rep) {
    for (const SamplePair& p : sample_pairs(idx, rng, 12, 3)) {
      const auto sa = idx.scene_of(p.a), sb = idx.scene_of(p.b);
      ASSERT_TRUE(sa && sb) << p.a << "," << p.b;
      if (p.relation == PairRelation::temporal_neighbor) {
        EXPECT_EQ(p.b, p.a + 1);
        EXPECT_EQ(*sa, *sb);
      } else {
        EXPECT_TRUE(*sa != *sb || std::abs(p.a - p.b) > 1);
      }
    }
  }
}

TEST(SamplePairs, SingleScene) {
  Rng rng(3);
  EXPECT_THROW(sample_pairs(scenes_of({{0, 2}}), rng, 6, 1), DataError);
  EXPECT_EQ(sample_pairs(scenes_of({{0, 2}}), rng, 6, 0).size(), 6u);
  for (const SamplePair& p : sample_pairs(scenes_of({{4, 3}}), rng, 20, 4)) {
    if (p.relation == PairRelation::non_neighbor) EXPECT_EQ(std::abs(p.a - p.b), 2);
  }
  EXPECT_THROW(sample_pairs(scenes_of({{0, 1}, {3, 1}}), rng, 6, 1), DataError);
}

TEST(SamplePairs, PositivesUniformOverAdjacentPairs) {
  // 2 + 3 + 1 adjacent pairs; chi-squared with 5 degrees of freedom at p = 0.001.
  const SceneIndex idx = scenes_of({{0, 3}, {5, 4}, {10, 2}});
  Rng rng(4);
  std::map<Index, double> counts;
  const int draws = 60000;
  for (int i = 0; i < draws / 10; ++i) {
    for (const SamplePair& p : sample_pairs(idx, rng, 10, 0)) counts[p.a] += 1.0;
  }
  ASSERT_EQ(counts.size(), 6u);
  const double expected = draws / 6.0;
  double chi2 = 0.0;
  for (const auto& [a, c] : counts) chi2 += (c - expected) * (c - expected) / expected;
  const boost::math::chi_squared dist(5.0);
  EXPECT_LT(chi2, boost::math::quantile(boost::math::complement(dist, 0.001)));
}

TEST(Trainer, ZeroLearningRateIsIdentity) {
  const FrameDataset data = random_frames(20, 4, 5, 5);
  for (Objective o : {Objective::slowness, Objective::group_sparsity}) {
    Model m = checks::tiny_fc_model(5, 16, 8, 4);
    const Model before = m;
    TrainingConfig c = quick(o, 0.0);
    c.momentum = 0.9;
    train(m, data, c);
    expect_same_parameters(m, before);
  }
  Model d = checks::tiny_two_layer_fc(5);
  Rng rng(6);
  const FrameDataset eight = with_frames(random_frames(20, 1, 6, 5), rng_normal(rng, 0.0, 1.0, {20, 8}));
  const Model before = d;
  train(d, eight, quick(Objective::drlim, 0.0));
  expect_same_parameters(d, before);
}

TEST(Trainer, DeterministicForSeed) {
  const FrameDataset data = random_frames(30, 4, 7, 6);
  TrainingConfig c = quick(Objective::slowness);
  c.seed = 12;
  Model a = checks::tiny_fc_model(7, 16, 8, 4), b = a;
  const RunRecord ra = train(a, data, c);
  const RunRecord rb = train(b, data, c);
  expect_same_parameters(a, b);
  ASSERT_EQ(ra.epochs.size(), 2u);
  EXPECT_EQ(ra.epochs[1].mean.total(), rb.epochs[1].mean.total());

  c.seed = 13;
  Model other = checks::tiny_fc_model(7, 16, 8, 4);
  train(other, data, c);
  EXPECT_NE(other.encoder.layers[0].weight, a.encoder.layers[0].weight);
}

TEST(Trainer, BetaZeroHasNoSlownessTerm) {
  const FrameDataset data = random_frames(20, 4, 8, 5);
  Model m = checks::tiny_fc_model(8, 16, 8, 4);
  TrainingConfig c = quick(Objective::slowness);
  c.beta = 0.0;
  for (const EpochRecord& e : train(m, data, c).epochs) {
    EXPECT_EQ(e.mean.slowness, 0.0);
    EXPECT_GT(e.mean.reconstruction, 0.0);
    EXPECT_EQ(e.batches, 4);  // 16 adjacent pairs in batches of 4
  }
}

TEST(Trainer, SlownessAutoencoderLearnsTranslatingBar) {
  const FrameDataset data = bar_video(50, 10);
  Model m = checks::tiny_fc_model(9, 64, 16, 4);
  TrainingConfig c = quick(Objective::slowness, 5e-2);
  c.alpha = 0.01;
  c.beta = 0.1;
  c.epochs = 40;
  const RunRecord r = train(m, data, c);
  EXPECT_LT(r.epochs.back().mean.total(), 0.5 * r.epochs.front().mean.total());
}

TEST(Trainer, RejectsBadSetups) {
  const FrameDataset data = random_frames(20, 4, 10, 5);
  Model fc = checks::tiny_fc_model(10, 16, 8, 4);
  TrainingConfig bad = quick(Objective::slowness);
  bad.learning_rate = -1.0;
  EXPECT_THROW(train(fc, data, bad), ConfigError);
  bad = quick(Objective::slowness);
  bad.momentum = 1.0;
  EXPECT_THROW(train(fc, data, bad), ConfigError);

  Model no_decoder = checks::tiny_two_layer_fc(10);
  EXPECT_THROW(Trainer(no_decoder, quick(Objective::slowness)), ConfigError);

  Model wrong = checks::tiny_fc_model(10, 9, 8, 4);
  EXPECT_THROW(train(wrong, data, quick(Objective::slowness)), ConfigError);

  FrameDataset singles = data;
  singles.scenes = scenes_of({{0, 1}, {5, 1}});
  EXPECT_THROW(train(fc, singles, quick(Objective::slowness)), DataError);

  FrameDataset poisoned = data;
  poisoned.frames[3] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(train(fc, poisoned, quick(Objective::slowness)), NumericError);
}

TEST(Greedy, StagesAreIsolatedAndChained) {
  const FrameDataset data = random_frames(24, 4, 11, 6);
  const Model s1 = checks::tiny_fc_model(11, 16, 12, 4);  // code dim 3
  const Model s2 = checks::tiny_fc_model(12, 3, 4, 2);
  const TrainingConfig c = quick(Objective::slowness);

  const GreedyResult g = train_greedy_stack({{s1, c}, {s2, c}}, data);
  ASSERT_EQ(g.stages.size(), 2u);

  Model alone = s1;
  train(alone, data, c);
  expect_same_parameters(g.stages[0], alone);

  const Tensor codes = encode_dataset(g.stages[0], data.frames);
  EXPECT_EQ(g.inputs[1].frames, codes);
  EXPECT_EQ(g.inputs[1].scenes, data.scenes);

  Model second = s2;
  train(second, with_frames(data, codes), c);
  expect_same_parameters(g.stages[1], second);

  EXPECT_THROW(train_greedy_stack({{s1, c}, {checks::tiny_fc_model(13, 5, 4, 2), c}}, data), ConfigError);
}

TEST(DrlimJoint, UpdatesEveryLayer) {
  const FrameDataset base = random_frames(30, 1, 14, 6);
  Rng rng(14);
  const FrameDataset data = with_frames(base, rng_normal(rng, 0.0, 1.0, {30, 8}));
  Model m = checks::tiny_two_layer_fc(14);
  const Model before = m;
  TrainingConfig c = quick(Objective::slowness);  // forced to drlim
  c.margin = 5.0;
  c.batch_size = 12;
  c.negative_ratio = 2;
  const RunRecord r = train_drlim_joint(m, data, c);
  EXPECT_EQ(r.config.objective, Objective::drlim);
  EXPECT_GT(r.epochs[0].mean.contrastive_negative + r.epochs[0].mean.contrastive_positive, 0.0);
  EXPECT_NE(m.encoder.layers[0].weight, before.encoder.layers[0].weight);
  EXPECT_NE(m.encoder.layers[1].weight, before.encoder.layers[1].weight);
}

TEST(Grid, SingletonAndBetaAxis) {
  FrameDataset data = bar_video(40, 8);
  const auto [train_set, validation] = split_scenes(data, 2);
  PresetOptions opt;
  opt.patch_size = 8;
  TrainingConfig c = quick(Objective::slowness, 1e-3);
  c.epochs = 1;

  std::vector<Model> models;
  const GridResult one = grid_search(Preset::fc_patch, opt, {c}, train_set, validation, 10, &models);
  ASSERT_EQ(one.table.size(), 1u);
  EXPECT_EQ(one.best, 0u);
  ASSERT_EQ(models.size(), 1u);
  expect_same_parameters(models[0], train_fresh(Preset::fc_patch, opt, train_set, c));

  TrainingConfig c2 = c;
  c2.beta = 2.0;
  c.beta = 0.0;
  models.clear();
  const GridResult two = grid_search(Preset::fc_patch, opt, {c, c2}, train_set, validation, 10, &models);
  ASSERT_EQ(two.table.size(), 2u);
  EXPECT_EQ(two.table[1].config.beta, 2.0);
  EXPECT_GE(two.table[two.best].auc, two.table[1 - two.best].auc);
  expect_same_parameters(models[1], train_fresh(Preset::fc_patch, opt, train_set, c2));

  EXPECT_THROW(grid_search(Preset::fc_patch, opt, {}, train_set, validation), ConfigError);
}

TEST(TrainingConfig, RoundTripsThroughConfig) {
  TrainingConfig c = quick(Objective::drlim);
  c.margin = 2.5;
  c.seed = 77;
  const TrainingConfig back = TrainingConfig::from_config(c.to_config());
  EXPECT_EQ(back.to_config().to_text(), c.to_config().to_text());
  EXPECT_THROW(parse_objective("hinge"), ConfigError);
  Config neg;
  neg.set("seed", "-1");
  EXPECT_THROW(TrainingConfig::from_config(neg), ConfigError);
}
