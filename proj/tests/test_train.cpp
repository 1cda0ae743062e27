#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "lrnet/data.hpp"
#include "lrnet/loss.hpp"
#include "lrnet/metrics.hpp"
#include "lrnet/train.hpp"
#include "oracles.hpp"

using namespace lrnet;

namespace {

Tensor full(std::size_t h, std::size_t w, float v) { return Tensor({1, 1, h, w}, v); }

SynthConfig tiny_synth(std::size_t count, std::uint64_t seed) {
  SynthConfig s;
  s.count = count;
  s.min_extent = 32;
  s.max_extent = 40;
  s.max_targets = 2;
  s.seed = seed;
  return s;
}

ModelConfig tiny_model() {
  ModelConfig m;
  m.window = 32;
  return m;
}

TrainConfig tiny_train(std::size_t epochs) {
  TrainConfig t;
  t.epochs = epochs;
  t.batch_size = 4;
  t.crop = 32;
  t.seed = 5;
  return t;
}

}  // namespace

TEST(EdgeMap, SinglePixelTarget) {
  Mask m(3, 3, 0);
  m.at(1, 1) = 1;
  const auto w = edge_weight_map(m);
  const float expected[9] = {1, 4, 1, 4, 4, 4, 1, 4, 1};
  for (std::size_t i = 0; i < 9; ++i) EXPECT_EQ(w.v[i], expected[i]) << i;
}

TEST(EdgeMap, UniformMasksHaveNoEdges) {
  for (std::uint8_t v : {0, 1}) {
    const auto w = edge_weight_map(Mask(5, 7, v));
    for (float x : w.v) EXPECT_EQ(x, 1.0f);
  }
}

TEST(EdgeMap, CommutesWithFlipsAndRotations) {
  Rng rng(1);
  for (int trial = 0; trial < 40; ++trial) {
    const Mask m = oracle::random_mask(3 + rng.below(12), 3 + rng.below(12), 0.3, rng);
    const auto w = edge_weight_map(m);
    EXPECT_EQ(edge_weight_map(flip_horizontal(m)), flip_horizontal(w));
    EXPECT_EQ(edge_weight_map(flip_vertical(m)), flip_vertical(w));
    for (int q = 1; q < 4; ++q) EXPECT_EQ(edge_weight_map(rotate90(m, q)), rotate90(w, q));
  }
}

TEST(Loss, ZeroLogitsGiveLogTwo) {
  const Tensor logits = full(4, 4, 0), target = full(4, 4, 1);
  EXPECT_NEAR(ee_loss(logits, target, full(4, 4, 1)), std::log(2.0), 1e-9);
  EXPECT_NEAR(ee_loss(logits, full(4, 4, 0), full(4, 4, 4)), 4 * std::log(2.0), 1e-9);
}

TEST(Loss, UnitWeightsGiveMeanBce) {
  Rng rng(2);
  const Tensor64 p = oracle::random_tensor<double>({2, 1, 6, 6}, rng, -8, 8);
  Tensor64 t(p.shape());
  for (auto& v : t.data()) v = rng.bernoulli(0.3) ? 1.0 : 0.0;
  double naive = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double s = 1 / (1 + std::exp(-p[i]));
    naive -= t[i] * std::log(s) + (1 - t[i]) * std::log(1 - s);
  }
  naive /= static_cast<double>(p.size());
  EXPECT_NEAR(ee_loss(p, t, Tensor64(p.shape(), 1.0)), naive, 1e-12);
}

TEST(Loss, LinearInWeightsAndNonNegative) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Shape s{1 + rng.below(2), 1, 1 + rng.below(8), 1 + rng.below(8)};
    const Tensor64 p = oracle::random_tensor<double>(s, rng, -30, 30);
    const Tensor64 w1 = oracle::random_tensor<double>(s, rng, 0, 4), w2 = oracle::random_tensor<double>(s, rng, 0, 4);
    Tensor64 t(s), w12(s);
    for (std::size_t i = 0; i < t.size(); ++i) {
      t[i] = rng.bernoulli(0.5) ? 1.0 : 0.0;
      w12[i] = w1[i] + w2[i];
    }
    const double a = ee_loss(p, t, w1), b = ee_loss(p, t, w2);
    EXPECT_GE(a, 0.0);
    EXPECT_NEAR(ee_loss(p, t, w12), a + b, 1e-9 * (1 + a + b));
  }
}

TEST(Loss, GradientFormulaAndStability) {
  const Tensor64 p({1, 1, 1, 3}, {-800.0, 0.0, 900.0});
  const Tensor64 t({1, 1, 1, 3}, {0.0, 1.0, 1.0});
  const Tensor64 w({1, 1, 1, 3}, {1.0, 4.0, 1.0});
  const double loss = ee_loss(p, t, w);
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_NEAR(loss, 4 * std::log(2.0) / 3, 1e-12);
  const Tensor64 g = ee_loss_grad(p, t, w);
  EXPECT_NEAR(g[1], 4 * (0.5 - 1.0) / 3, 1e-15);
  EXPECT_NEAR(g[0], 0.0, 1e-15);
  EXPECT_NEAR(g[2], 0.0, 1e-15);
  EXPECT_THROW(ee_loss(Tensor64({1, 1, 1, 1}, {NAN}), Tensor64({1, 1, 1, 1}), Tensor64({1, 1, 1, 1}, 1.0)), Error);
}

TEST(Crop, ExactSizeIsIdentity) {
  Rng rng(4);
  const Sample s = synth_sample(tiny_synth(1, 1), 0);
  Sample sq;
  sq.image = Image(32, 32);
  sq.mask = Mask(32, 32);
  for (std::size_t i = 0; i < 32 * 32; ++i) {
    sq.image.v[i] = s.image.v[i];
    sq.mask.v[i] = s.mask.v[i];
  }
  const Sample c = random_crop(sq, 32, rng);
  EXPECT_EQ(c.image, sq.image);
  EXPECT_EQ(c.mask, sq.mask);
}

TEST(Crop, SmallSamplesAreZeroPadded) {
  Sample s{Image(4, 5, 0.7f), Mask(4, 5, 1)};
  Rng rng(5);
  const Sample c = random_crop(s, 8, rng);
  ASSERT_EQ(c.image.h, 8u);
  ASSERT_EQ(c.image.w, 8u);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) {
      const bool inside = y < 4 && x < 5;
      EXPECT_EQ(c.image.at(y, x), inside ? 0.7f : 0.0f);
      EXPECT_EQ(c.mask.at(y, x), inside ? 1 : 0);
    }
}

TEST(Crop, OffsetsCoverFullRange) {
  Sample s{Image(258, 262), Mask(258, 262)};
  for (std::size_t i = 0; i < s.image.size(); ++i) s.image.v[i] = static_cast<float>(i);
  Rng rng(6);
  std::set<std::size_t> ys, xs;
  for (int i = 0; i < 300; ++i) {
    const Sample c = random_crop(s, 256, rng);
    const auto origin = static_cast<std::size_t>(c.image.v[0]);
    ys.insert(origin / 262);
    xs.insert(origin % 262);
    EXPECT_EQ(c.image.at(255, 255), static_cast<float>(origin + 255 * 262 + 255));
  }
  EXPECT_EQ(ys, (std::set<std::size_t>{0, 1, 2}));
  EXPECT_EQ(xs, (std::set<std::size_t>{0, 1, 2, 3, 4, 5, 6}));
}

TEST(Augment, DisabledIsIdentityAndConsumesFourDraws) {
  const Sample s = synth_sample(tiny_synth(1, 2), 0);
  Rng a(7), b(7);
  const Sample out = augment(s, a, AugmentConfig::none());
  EXPECT_EQ(out.image, s.image);
  EXPECT_EQ(out.mask, s.mask);
  for (int i = 0; i < 4; ++i) b.next_u64();
  EXPECT_EQ(a.next_u64(), b.next_u64());
}

TEST(Augment, GeometricTransformsAreInvolutionsAndPreserveTargets) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    const Mask m = oracle::random_mask(2 + rng.below(9), 2 + rng.below(9), 0.4, rng);
    EXPECT_EQ(flip_horizontal(flip_horizontal(m)), m);
    EXPECT_EQ(flip_vertical(flip_vertical(m)), m);
    EXPECT_EQ(rotate90(rotate90(m, 1), 3), m);
    EXPECT_EQ(rotate90(m, 4), m);
    Sample s{Image(m.h, m.w, 0.5f), m};
    const Sample out = augment(s, rng);
    std::size_t before = 0, after = 0;
    for (auto v : m.v) before += v;
    for (auto v : out.mask.v) after += v;
    EXPECT_EQ(before, after);
    EXPECT_EQ(label_components(out.mask).size(), label_components(m).size());
    for (float v : out.image.v) {
      EXPECT_GE(v, 0.5f * 0.8f - 1e-6f);
      EXPECT_LE(v, 0.5f * 1.2f + 1e-6f);
    }
  }
}

TEST(Augment, RotationIsCounterClockwise) {
  Mask m(2, 3, 0);
  m.at(0, 2) = 1;  // top-right
  const Mask r = rotate90(m, 1);
  ASSERT_EQ(r.h, 3u);
  ASSERT_EQ(r.w, 2u);
  EXPECT_EQ(r.at(0, 0), 1);  // moves to top-left
}

TEST(Synth, DeterministicPerIndex) {
  const SynthConfig c = tiny_synth(6, 11);
  const auto all = synth_generate(c);
  ASSERT_EQ(all.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    const Sample s = synth_sample(c, i);
    EXPECT_EQ(s.image, all[i].image);
    EXPECT_EQ(s.mask, all[i].mask);
  }
  SynthConfig other = c;
  other.seed = 12;
  EXPECT_NE(synth_sample(other, 0).image, all[0].image);
}

TEST(Synth, SamplesAreValid) {
  SynthConfig c = tiny_synth(30, 13);
  c.min_extent = 40;
  c.max_extent = 80;
  for (const Sample& s : synth_generate(c)) {
    EXPECT_NO_THROW(check_sample(s));
    EXPECT_GE(s.image.h, 40u);
    EXPECT_LE(s.image.w, 80u);
    const auto comps = label_components(s.mask);
    EXPECT_GE(comps.size(), 1u);
    EXPECT_LE(comps.size(), 2u);
    for (float v : s.image.v) {
      EXPECT_GE(v, 0.0f);
      EXPECT_LE(v, 1.0f);
    }
  }
  SynthConfig bad = c;
  bad.sigma_min = 0.1;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(Synth, MaskRadiusMatchesHalfMaximum) {
  SynthConfig c = tiny_synth(10, 14);
  c.min_extent = c.max_extent = 64;
  c.max_targets = 1;
  c.sigma_min = c.sigma_max = 3.0;
  const double radius = 3.0 * std::sqrt(2 * std::log(2.0));
  for (const Sample& s : synth_generate(c)) {
    const auto comps = label_components(s.mask);
    ASSERT_EQ(comps.size(), 1u);
    const double r = std::sqrt(static_cast<double>(comps[0].area()) / M_PI);
    EXPECT_NEAR(r, radius, 2.0);
    // the brightest pixel of the image sits inside the target
    std::size_t arg = 0;
    for (std::size_t i = 1; i < s.image.size(); ++i) arg = s.image.v[i] > s.image.v[arg] ? i : arg;
    EXPECT_NEAR(static_cast<double>(arg / 64), comps[0].centroid_y(), 2.5);
    EXPECT_NEAR(static_cast<double>(arg % 64), comps[0].centroid_x(), 2.5);
  }
}

TEST(Batch, StacksSamplesWithEdgeWeights) {
  std::vector<Sample> samples{synth_sample(tiny_synth(2, 3), 0), synth_sample(tiny_synth(2, 3), 0)};
  Rng rng(9);
  for (auto& s : samples) s = random_crop(s, 32, rng);
  const Batch b = make_batch(samples);
  EXPECT_EQ(b.images.shape(), (Shape{2, 1, 32, 32}));
  const auto w = edge_weight_map(samples[1].mask);
  for (std::size_t i = 0; i < w.size(); ++i) {
    EXPECT_EQ(b.weights.plane(1, 0)[i], w.v[i]);
    EXPECT_EQ(b.targets.plane(1, 0)[i], samples[1].mask.v[i]);
  }
  samples[1] = random_crop(samples[1], 16, rng);
  EXPECT_THROW(make_batch(samples), Error);
}

TEST(Train, ValidationSplit) {
  EXPECT_EQ(validation_count(100, 0.1), 10u);
  EXPECT_EQ(validation_count(4, 0.1), 0u);
  EXPECT_EQ(validation_count(12, 0.1), 1u);
  EXPECT_EQ(validation_count(400, 0.0), 0u);
}

TEST(Train, DeterministicAndLossDecreases) {
  const auto data = synth_generate(tiny_synth(12, 21));
  const TrainResult a = train(tiny_model(), tiny_train(12), data);
  const TrainResult b = train(tiny_model(), tiny_train(2), data);
  ASSERT_EQ(a.history.size(), 12u);
  EXPECT_EQ(a.history[0].train_loss, b.history[0].train_loss);
  EXPECT_EQ(a.history[1].val_loss, b.history[1].val_loss);
  EXPECT_LT(a.history.back().train_loss, 0.9 * a.history.front().train_loss);
  EXPECT_GE(a.best_epoch, 1u);
  double best = a.history[0].val_loss;
  for (const auto& e : a.history) best = std::min(best, e.val_loss);
  EXPECT_EQ(a.history[a.best_epoch - 1].val_loss, best);
  const TrainResult again = train(tiny_model(), tiny_train(12), data);
  EXPECT_EQ(again.last, a.last);
  EXPECT_EQ(again.best, a.best);
}

TEST(Train, ResumeContinuesExactly) {
  const auto data = synth_generate(tiny_synth(12, 22));
  const auto root = std::filesystem::temp_directory_path() / "lrnet_test_resume";
  std::filesystem::remove_all(root);
  TrainOptions straight{.out_dir = (root / "a").string()};
  TrainOptions split{.out_dir = (root / "b").string()};
  const TrainResult full = train(tiny_model(), tiny_train(4), data, straight);
  train(tiny_model(), tiny_train(2), data, split);
  split.resume = true;
  const TrainResult resumed = train(tiny_model(), tiny_train(4), data, split);
  EXPECT_EQ(resumed.last, full.last);
  EXPECT_EQ(resumed.best, full.best);
  EXPECT_EQ(resumed.best_epoch, full.best_epoch);
  ASSERT_EQ(resumed.history.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(resumed.history[i].train_loss, full.history[i].train_loss);
    EXPECT_EQ(resumed.history[i].val_loss, full.history[i].val_loss);
  }
  for (const char* f : {kLastWeights, kBestWeights, kLastOptimizer, kTrainState, kLossLog})
    EXPECT_TRUE(std::filesystem::exists(root / "b" / f)) << f;
  std::filesystem::remove_all(root);
}

TEST(Train, InvalidConfigurationIsRejected) {
  const auto data = synth_generate(tiny_synth(4, 23));
  TrainConfig t = tiny_train(1);
  t.batch_size = 0;
  EXPECT_THROW(train(tiny_model(), t, data), Error);
  t = tiny_train(1);
  t.crop = 64;
  EXPECT_THROW(train(tiny_model(), t, data), Error);
  EXPECT_THROW(train(tiny_model(), tiny_train(1), {}), Error);
}
