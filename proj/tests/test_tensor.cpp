#include <gtest/gtest.h>

#include <cstring>
#include <limits>

#include "lrnet/kernels.hpp"
#include "oracles.hpp"

using namespace lrnet;

namespace {

Tensor ones(Shape s) { return Tensor(s, 1.0f); }

}  // namespace

TEST(Tensor, DataLengthMatchesShape) {
  Tensor t({2, 3, 4, 5});
  EXPECT_EQ(t.size(), 120u);
  EXPECT_THROW(Tensor(Shape{1, 1, 2, 2}, std::vector<float>(3)), Error);
  t.enable_grad();
  EXPECT_EQ(t.grad().size(), t.size());
}

TEST(Tensor, CheckFiniteReportsNumericError) {
  Tensor t({1, 1, 1, 2});
  t[1] = std::numeric_limits<float>::quiet_NaN();
  try {
    t.check_finite("probe");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::numeric);
  }
}

TEST(Conv2d, AllOnesThreeByThree) {
  const Tensor y = conv2d(ones({1, 1, 3, 3}), ones({1, 1, 3, 3}), {}, {1, 1, 1});
  const float expected[] = {4, 6, 4, 6, 9, 6, 4, 6, 4};
  ASSERT_EQ(y.shape(), (Shape{1, 1, 3, 3}));
  for (int i = 0; i < 9; ++i) EXPECT_FLOAT_EQ(y[i], expected[i]);
}

TEST(Conv2d, IdentityKernel) {
  Rng rng(1);
  const Tensor x = oracle::random_tensor<float>({2, 1, 5, 7}, rng);
  const Tensor y = conv2d(x, ones({1, 1, 1, 1}), {}, {});
  EXPECT_EQ(y.shape(), x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(y[i], x[i]);
}

TEST(Conv2d, GroupedStrideTwoMatchesOracle) {
  Rng rng(2);
  const Tensor x = oracle::random_tensor<float>({1, 2, 4, 4}, rng);
  const Tensor k = oracle::random_tensor<float>({2, 1, 3, 3}, rng);
  const Tensor y = conv2d(x, k, {}, {2, 1, 2});
  const Tensor ref = oracle::conv2d<float>(x, k, {}, 2, 1, 2);
  ASSERT_EQ(y.shape(), ref.shape());
  EXPECT_LT(oracle::max_rel_diff(y, ref), 1e-5);
}

// Every (stride, padding, groups) pattern the network uses, plus odd extents.
TEST(Conv2d, RandomConfigurationsMatchOracle) {
  Rng rng(3);
  for (int trial = 0; trial < 120; ++trial) {
    const std::size_t n = 1 + rng.below(2);
    const std::size_t h = 1 + rng.below(9), w = 1 + rng.below(9);
    const int kind = static_cast<int>(rng.below(4));
    std::size_t cin = 1 + rng.below(5), cout = 1 + rng.below(5);
    std::size_t kh = 3, kw = 3;
    int stride = 1, pad = 1, groups = 1;
    switch (kind) {
      case 0:  // depthwise 3x3 stride 1
        cout = cin;
        groups = static_cast<int>(cin);
        break;
      case 1:  // depthwise 3x3 stride 2
        cout = cin;
        groups = static_cast<int>(cin);
        stride = 2;
        break;
      case 2:  // pointwise
        kh = kw = 1;
        pad = 0;
        break;
      default:  // general grouped conv
        groups = 1 + static_cast<int>(rng.below(2));
        cin = groups * (1 + rng.below(3));
        cout = groups * (1 + rng.below(3));
        stride = 1 + static_cast<int>(rng.below(2));
        pad = static_cast<int>(rng.below(2));
        kh = 1 + 2 * rng.below(2);
        kw = 1 + 2 * rng.below(2);
        break;
    }
    if (h + 2 * pad < kh || w + 2 * pad < kw) continue;
    const Tensor x = oracle::random_tensor<float>({n, cin, h, w}, rng);
    const Tensor k = oracle::random_tensor<float>({cout, cin / groups, kh, kw}, rng);
    std::vector<float> bias;
    if (rng.bernoulli(0.5)) {
      for (std::size_t c = 0; c < cout; ++c) bias.push_back(static_cast<float>(rng.uniform(-1, 1)));
    }
    const Tensor y = conv2d(x, k, std::span<const float>(bias), {stride, pad, groups});
    const Tensor ref = oracle::conv2d<float>(x, k, bias, stride, pad, groups);
    ASSERT_EQ(y.shape(), ref.shape()) << "trial " << trial;
    EXPECT_LT(oracle::max_rel_diff(y, ref), 1e-5) << "trial " << trial;
  }
}

TEST(Conv2d, ShapeErrorsNameTheDimension) {
  const Tensor x({1, 3, 4, 4});
  try {
    conv2d(x, Tensor({2, 2, 3, 3}), {}, {1, 1, 1});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::shape);
    EXPECT_NE(std::string(e.what()).find("channel"), std::string::npos) << e.what();
  }
  EXPECT_THROW(conv2d(x, Tensor({3, 1, 3, 3}), {}, {0, 1, 3}), Error);
  EXPECT_THROW(conv2d(x, Tensor({4, 1, 3, 3}), {}, {1, 1, 2}), Error);
}

TEST(MaxPool, WindowMaximum) {
  const Tensor x({1, 1, 2, 2}, {1, 2, 3, 4});
  const auto p = max_pool2d(x);
  ASSERT_EQ(p.output.size(), 1u);
  EXPECT_EQ(p.output[0], 4.0f);
}

TEST(MaxPool, ConstantInput) {
  const auto p = max_pool2d(Tensor({2, 3, 6, 4}, 0.25f));
  EXPECT_EQ(p.output.shape(), (Shape{2, 3, 3, 2}));
  for (float v : p.output.data()) EXPECT_EQ(v, 0.25f);
}

TEST(MaxPool, MatchesOracleOnRandomTensors) {
  Rng rng(4);
  for (int trial = 0; trial < 100; ++trial) {
    const Shape s{1 + rng.below(2), 1 + rng.below(3), 2 * (1 + rng.below(4)), 2 * (1 + rng.below(4))};
    const Tensor x = oracle::random_tensor<float>(s, rng);
    EXPECT_EQ(oracle::max_rel_diff(max_pool2d(x).output, oracle::window_max(x, 2)), 0.0);
  }
}

TEST(MaxPool, OddExtentRejected) {
  try {
    max_pool2d(Tensor({1, 1, 3, 4}));
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("odd spatial extent"), std::string::npos);
  }
}

TEST(MaxPool, PermutationInvariantAndMonotone) {
  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor x = oracle::random_tensor<float>({1, 2, 4, 6}, rng);
    const Tensor base = max_pool2d(x).output;
    Tensor perm = x;
    for (std::size_t c = 0; c < 2; ++c)
      for (std::size_t oy = 0; oy < 2; ++oy)
        for (std::size_t ox = 0; ox < 3; ++ox) {
          std::swap(perm.at(0, c, 2 * oy, 2 * ox), perm.at(0, c, 2 * oy + 1, 2 * ox + 1));
          std::swap(perm.at(0, c, 2 * oy, 2 * ox + 1), perm.at(0, c, 2 * oy + 1, 2 * ox));
        }
    EXPECT_EQ(oracle::max_rel_diff(max_pool2d(perm).output, base), 0.0);
    const std::size_t i = rng.below(x.size());
    x[i] += static_cast<float>(rng.uniform(0.0, 1.0));
    const Tensor raised = max_pool2d(x).output;
    for (std::size_t k = 0; k < base.size(); ++k) EXPECT_GE(raised[k], base[k]);
  }
}

TEST(Bilinear, HalfPixelExample) {
  const Tensor y = bilinear_upsample(Tensor({1, 1, 1, 2}, {0, 1}), 1, 4);
  const float expected[] = {0, 0.25f, 0.75f, 1};
  for (int i = 0; i < 4; ++i) EXPECT_FLOAT_EQ(y[i], expected[i]);
}

TEST(Bilinear, ConstantAndIdentity) {
  const Tensor c = bilinear_upsample(Tensor({1, 2, 3, 5}, 0.7f), 7, 4);
  for (float v : c.data()) EXPECT_FLOAT_EQ(v, 0.7f);
  Rng rng(6);
  const Tensor x = oracle::random_tensor<float>({2, 2, 4, 3}, rng);
  const Tensor same = bilinear_upsample(x, 4, 3);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(same[i], x[i]);
}

TEST(Bilinear, MatchesOracleAndStaysInBounds) {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const Shape s{1, 1 + rng.below(3), 1 + rng.below(6), 1 + rng.below(6)};
    const Tensor x = oracle::random_tensor<float>(s, rng);
    const std::size_t oh = 1 + rng.below(12), ow = 1 + rng.below(12);
    const Tensor y = bilinear_upsample(x, oh, ow);
    EXPECT_LT(oracle::max_rel_diff(y, oracle::bilinear(x, oh, ow)), 1e-5);
    const auto [lo, hi] = std::minmax_element(x.data().begin(), x.data().end());
    for (float v : y.data()) {
      EXPECT_GE(v, *lo - 1e-6f);
      EXPECT_LE(v, *hi + 1e-6f);
    }
  }
}

TEST(Elementwise, Basics) {
  const Tensor s = sigmoid(Tensor({1, 1, 2, 2}, 0.0f));
  for (float v : s.data()) EXPECT_EQ(v, 0.5f);
  const Tensor r = relu(Tensor({1, 1, 1, 2}, {-1, 2}));
  EXPECT_EQ(r[0], 0.0f);
  EXPECT_EQ(r[1], 2.0f);
  Rng rng(8);
  const Tensor x = oracle::random_tensor<float>({2, 3, 2, 2}, rng);
  const std::vector<float> unit(3, 1.0f);
  const Tensor scaled = scale_by_channel(x, std::span<const float>(unit));
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_EQ(scaled[i], x[i]);
  EXPECT_THROW(add(x, Tensor({2, 3, 2, 1})), Error);
  EXPECT_THROW(mul(x, Tensor({1, 3, 2, 2})), Error);
}

TEST(Elementwise, SigmoidOpenIntervalReluNonNegative) {
  Rng rng(9);
  const Tensor x = oracle::random_tensor<float>({1, 1, 20, 20}, rng, -30, 30);
  const Tensor s = sigmoid(x);
  for (float v : s.data()) {
    EXPECT_GT(v, 0.0f);
    EXPECT_LT(v, 1.0f);
  }
  const Tensor r = relu(x);
  for (float v : r.data()) EXPECT_GE(v, 0.0f);
  const Tensor se = sigmoid(Tensor({1, 1, 1, 2}, {-200.0f, 200.0f}));
  EXPECT_GT(se[0], 0.0f);
  EXPECT_LT(se[1], 1.0f);
}

TEST(Elementwise, ScaleByChannelPerBatchFactors) {
  const Tensor x({2, 2, 1, 1}, {1, 1, 1, 1});
  const std::vector<float> f{1, 2, 3, 4};
  const Tensor y = scale_by_channel(x, std::span<const float>(f));
  for (int i = 0; i < 4; ++i) EXPECT_EQ(y[i], f[i]);
}

TEST(GlobalAvgPool, Examples) {
  EXPECT_EQ(global_avg_pool(Tensor({1, 1, 3, 3}, 2.5f))[0], 2.5f);
  EXPECT_FLOAT_EQ(global_avg_pool(Tensor({1, 1, 2, 2}, {1, 3, 5, 7}))[0], 4.0f);
  const auto zeros = global_avg_pool(Tensor({2, 3, 2, 2}));
  for (float v : zeros) EXPECT_EQ(v, 0.0f);
}

TEST(Concat, ShapeOrderAndSliceRoundTrip) {
  Rng rng(10);
  const Tensor a = oracle::random_tensor<float>({1, 2, 4, 4}, rng);
  const Tensor b = oracle::random_tensor<float>({1, 3, 4, 4}, rng);
  const Tensor c = concat_channels(a, b);
  EXPECT_EQ(c.shape(), (Shape{1, 5, 4, 4}));
  for (std::size_t i = 0; i < 16; ++i) EXPECT_EQ(c.plane(0, 0)[i], a.plane(0, 0)[i]);
  const Tensor sa = slice_channels(c, 0, 2), sb = slice_channels(c, 2, 3);
  EXPECT_EQ(std::memcmp(sa.ptr(), a.ptr(), a.size() * 4), 0);
  EXPECT_EQ(std::memcmp(sb.ptr(), b.ptr(), b.size() * 4), 0);
  const Tensor same = concat_channels(a, Tensor({1, 0, 4, 4}));
  EXPECT_EQ(same.shape(), a.shape());
  EXPECT_EQ(std::memcmp(same.ptr(), a.ptr(), a.size() * 4), 0);
  EXPECT_THROW(concat_channels(a, Tensor({1, 3, 4, 2})), Error);
}

TEST(Concat, RandomRoundTripProperty) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(3), h = 1 + rng.below(5), w = 1 + rng.below(5);
    const Tensor a = oracle::random_tensor<float>({n, rng.below(4), h, w}, rng);
    const Tensor b = oracle::random_tensor<float>({n, 1 + rng.below(4), h, w}, rng);
    const Tensor c = concat_channels(a, b);
    const Tensor sa = slice_channels(c, 0, a.shape().c);
    const Tensor sb = slice_channels(c, a.shape().c, b.shape().c);
    EXPECT_TRUE(std::equal(sa.data().begin(), sa.data().end(), a.data().begin()));
    EXPECT_TRUE(std::equal(sb.data().begin(), sb.data().end(), b.data().begin()));
  }
}
