#include <gtest/gtest.h>

#include <cmath>

#include "golden_scores.hpp"
#include "lrnet/data.hpp"
#include "lrnet/infer.hpp"
#include "lrnet/metrics.hpp"
#include "oracles.hpp"

using namespace lrnet;

namespace {

Image random_image(std::size_t h, std::size_t w, Rng& rng) {
  Image im(h, w);
  for (auto& v : im.v) v = static_cast<float>(rng.uniform());
  return im;
}

Mask dot(std::size_t h, std::size_t w, std::initializer_list<std::pair<std::size_t, std::size_t>> pts) {
  Mask m(h, w, 0);
  for (auto [y, x] : pts) m.at(y, x) = 1;
  return m;
}

template <class V>
Grid<V> transform(const Grid<V>& g, int op) {
  switch (op % 4) {
    case 0: return flip_horizontal(g);
    case 1: return flip_vertical(g);
    default: return rotate90(g, op % 4 == 2 ? 1 : 3);
  }
}

}  // namespace

TEST(Tiles, PlanExamples) {
  const TileGrid g = tile_plan(300, 500, 256);
  EXPECT_EQ(g.padded_h, 512u);
  EXPECT_EQ(g.padded_w, 512u);
  ASSERT_EQ(g.origins.size(), 4u);
  EXPECT_EQ(g.origins[1], (std::pair<std::size_t, std::size_t>{0, 256}));
  EXPECT_EQ(g.origins[2], (std::pair<std::size_t, std::size_t>{256, 0}));
  EXPECT_EQ(tile_plan(256, 256, 256).origins.size(), 1u);
  EXPECT_EQ(tile_plan(1, 1, 256).origins.size(), 1u);
  EXPECT_THROW(tile_plan(0, 10, 256), Error);
}

TEST(Tiles, PartitionCoversEveryPixelOnce) {
  Rng rng(1);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t window = std::size_t{8} << rng.below(3);
    const std::size_t h = 1 + rng.below(100), w = 1 + rng.below(100);
    const TileGrid g = tile_plan(h, w, window);
    EXPECT_EQ(g.padded_h % window, 0u);
    EXPECT_LT(g.padded_h - h, window);
    EXPECT_LT(g.padded_w - w, window);
    std::vector<int> hits(g.padded_h * g.padded_w, 0);
    for (auto [oy, ox] : g.origins)
      for (std::size_t y = 0; y < window; ++y)
        for (std::size_t x = 0; x < window; ++x) ++hits.at((oy + y) * g.padded_w + ox + x);
    for (int c : hits) ASSERT_EQ(c, 1);
  }
}

TEST(Sliding, IdentityFunctorReturnsInput) {
  Rng rng(2);
  const Image im = random_image(37, 70, rng);
  const Image out = sliding_apply(im, 32, [](const Tensor& t) { return t; }, 3);
  EXPECT_EQ(out, im);
}

TEST(Sliding, SeesZeroPaddingOutsideImage) {
  const Image im(10, 10, 1.0f);
  std::vector<float> sums;
  const Image out = sliding_apply(im, 16, [&](const Tensor& t) {
    double s = 0;
    for (float v : t.data()) s += v;
    sums.push_back(static_cast<float>(s));
    return t;
  });
  ASSERT_EQ(sums.size(), 1u);
  EXPECT_EQ(sums[0], 100.0f);
  EXPECT_EQ(out.h, 10u);
}

TEST(Sliding, MatchesPerTilePrediction) {
  ModelConfig c;
  c.window = 32;
  LrNet<float> net(c);
  net.init(3);
  Rng rng(3);
  const Image im = random_image(40, 64, rng);
  const Image prob = sliding_infer(im, net, 1);
  ASSERT_EQ(prob.h, 40u);
  ASSERT_EQ(prob.w, 64u);
  for (std::size_t ty = 0; ty < 2; ++ty)
    for (std::size_t tx = 0; tx < 2; ++tx) {
      Tensor tile({1, 1, 32, 32});
      for (std::size_t y = 0; y < 32; ++y)
        for (std::size_t x = 0; x < 32; ++x) {
          const std::size_t iy = ty * 32 + y, ix = tx * 32 + x;
          if (iy < 40) tile.plane(0, 0)[y * 32 + x] = im.at(iy, ix);
        }
      const Tensor p = net.predict(tile);
      for (std::size_t y = 0; y < 32; ++y)
        for (std::size_t x = 0; x < 32; ++x) {
          const std::size_t iy = ty * 32 + y, ix = tx * 32 + x;
          if (iy < 40) ASSERT_EQ(prob.at(iy, ix), p.plane(0, 0)[y * 32 + x]);
        }
    }
  EXPECT_EQ(sliding_infer(im, net, 4), prob);
}

TEST(Sliding, ErrorCarriesTileOrigin) {
  const Image im(64, 64, 0.5f);
  try {
    sliding_apply(im, 32, [](const Tensor& t) -> Tensor {
      static_cast<void>(t);
      throw Error(ErrorKind::numeric, "boom");
    }, 2);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::numeric);
    EXPECT_NE(std::string(e.what()).find("y=0, x=0"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("boom"), std::string::npos);
  }
  try {
    sliding_apply(im, 32, [](const Tensor& t) { return Tensor({1, 1, 16, 16}, t[0]); });
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::shape);
  }
}

TEST(Threshold, InclusiveAtTau) {
  Image p(1, 4);
  p.v = {0.49f, 0.5f, 0.51f, 1.0f};
  EXPECT_EQ(threshold_mask(p).v, (std::vector<std::uint8_t>{0, 1, 1, 1}));
  EXPECT_EQ(threshold_mask(p, 0.75).v, (std::vector<std::uint8_t>{0, 0, 0, 1}));
}

TEST(Components, EightConnectivity) {
  Mask m(4, 5, 0);
  m.at(0, 0) = m.at(1, 1) = 1;            // diagonal pair: one component
  m.at(0, 4) = m.at(1, 4) = m.at(2, 4) = 1;  // vertical bar
  m.at(3, 0) = 1;
  const auto comps = label_components(m);
  ASSERT_EQ(comps.size(), 3u);
  EXPECT_EQ(comps[0].area(), 2u);
  EXPECT_DOUBLE_EQ(comps[0].centroid_y(), 0.5);
  EXPECT_EQ(comps[1].area(), 3u);
  EXPECT_DOUBLE_EQ(comps[1].centroid_y(), 1.0);
  EXPECT_DOUBLE_EQ(comps[1].centroid_x(), 4.0);
  EXPECT_EQ(comps[2].area(), 1u);
  EXPECT_TRUE(label_components(Mask(3, 3, 0)).empty());
}

TEST(PdFa, MatchingRadius) {
  const Mask gt = dot(32, 32, {{10, 10}});
  EXPECT_EQ(pd_fa({dot(32, 32, {{11, 11}})}, {gt}).pd, 100.0);  // sqrt(2)
  EXPECT_EQ(pd_fa({dot(32, 32, {{13, 10}})}, {gt}).pd, 100.0);  // exactly 3
  const PdFa far = pd_fa({dot(32, 32, {{14, 10}})}, {gt});
  EXPECT_EQ(far.pd, 0.0);
  EXPECT_EQ(far.false_pixels, 1u);
  EXPECT_DOUBLE_EQ(far.fa, 1.0 / 1024);
}

TEST(PdFa, FalseAlarmFraction) {
  const Mask gt = dot(100, 100, {{50, 50}});
  const Mask pred = dot(100, 100, {{50, 50}, {0, 0}, {99, 99}});
  const PdFa r = pd_fa({pred}, {gt});
  EXPECT_EQ(r.pd, 100.0);
  EXPECT_EQ(r.false_pixels, 2u);
  EXPECT_DOUBLE_EQ(r.fa, 2e-4);
  EXPECT_GT(r.fa, kFaLimit);
}

TEST(PdFa, VacuousAndOneToOne) {
  const PdFa empty = pd_fa({Mask(8, 8, 0)}, {Mask(8, 8, 0)});
  EXPECT_EQ(empty.pd, 100.0);
  EXPECT_EQ(empty.fa, 0.0);
  // one prediction between two targets can match only one of them
  const Mask gt = dot(16, 16, {{5, 4}, {5, 8}});
  const PdFa r = pd_fa({dot(16, 16, {{5, 6}})}, {gt});
  EXPECT_EQ(r.matched, 1u);
  EXPECT_EQ(r.pd, 50.0);
  EXPECT_THROW(pd_fa({Mask(8, 8)}, {Mask(8, 9)}), Error);
  EXPECT_THROW(pd_fa({Mask(8, 8)}, {}), Error);
}

TEST(Iou, Examples) {
  Mask a(2, 2, 0), b(2, 2, 0);
  a.v = {1, 1, 0, 0};
  b.v = {1, 0, 1, 0};
  EXPECT_NEAR(iou({a}, {b}), 100.0 / 3, 1e-12);
  EXPECT_EQ(iou({a}, {a}), 100.0);
  EXPECT_EQ(iou({Mask(2, 2, 0)}, {Mask(2, 2, 0)}), 100.0);
  EXPECT_EQ(iou({Mask(2, 2, 1)}, {Mask(2, 2, 0)}), 0.0);
  // accumulated over the dataset, not averaged per image
  EXPECT_NEAR(iou({a, Mask(2, 2, 1)}, {b, Mask(2, 2, 1)}), 100.0 * 5 / 7, 1e-12);
}

TEST(Metrics, InvariantUnderJointFlipsAndRotations) {
  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t h = 8 + rng.below(40), w = 8 + rng.below(40);
    const Mask gt = oracle::random_mask(h, w, 0.02 + 0.1 * rng.uniform(), rng);
    const Mask pred = oracle::random_mask(h, w, 0.02 + 0.1 * rng.uniform(), rng);
    const int op = static_cast<int>(rng.below(4));
    const Mask gt2 = transform(gt, op), pred2 = transform(pred, op);
    const PdFa a = pd_fa({pred}, {gt}), b = pd_fa({pred2}, {gt2});
    EXPECT_EQ(a.matched, b.matched) << trial;
    EXPECT_EQ(a.false_pixels, b.false_pixels) << trial;
    EXPECT_EQ(iou({pred}, {gt}), iou({pred2}, {gt2}));
  }
}

TEST(Score, NamedExamples) {
  const auto check = [](double iou_v, double pd, double p, double f, double expected) {
    EXPECT_NEAR(score(iou_v, pd, p, f).s_pe, expected, golden::kTolerance) << iou_v << " " << pd;
  };
  check(42.54, 63.82, 0.020, 0.063, 76.24);
  check(34.27, 60.19, 0.016, 0.043, 73.35);
  check(42.99, 63.58, 0.038, 0.063, 76.09);
}

TEST(Score, MonotoneAndValidated) {
  Rng rng(5);
  for (int trial = 0; trial < 100; ++trial) {
    const double i = rng.uniform(1, 90), pd = rng.uniform(1, 90), p = rng.uniform(0.001, 2), f = rng.uniform(0.001, 10);
    const Score base = score(i, pd, p, f);
    EXPECT_GT(score(i + 1, pd, p, f).s_p, base.s_p);
    EXPECT_GT(score(i, pd + 1, p, f).s_p, base.s_p);
    EXPECT_GT(score(i, pd, p * 0.5, f).s_e, base.s_e);
    EXPECT_GT(score(i, pd, p, f * 0.5).s_e, base.s_e);
    EXPECT_GE(base.s_pe, std::min(base.s_p, base.s_e) - 1e-9);
    EXPECT_LE(base.s_pe, std::max(base.s_p, base.s_e) + 1e-9);
  }
  EXPECT_THROW(score(-1, 50, 0.02, 0.06), Error);
  EXPECT_THROW(score(50, 50, NAN, 0.06), Error);
}

TEST(Evaluate, ReportRecord) {
  const Mask gt = dot(100, 100, {{50, 50}});
  const EvalReport ok = evaluate({gt}, {gt}, 14418, 19748792);
  EXPECT_TRUE(ok.valid);
  EXPECT_EQ(ok.iou, 100.0);
  EXPECT_NE(ok.record().find("valid=true"), std::string::npos);
  const EvalReport bad = evaluate({dot(100, 100, {{50, 50}, {0, 0}, {99, 99}})}, {gt}, 14418, 19748792);
  EXPECT_FALSE(bad.valid);
  EXPECT_NE(bad.record().find("valid=false"), std::string::npos);
}
