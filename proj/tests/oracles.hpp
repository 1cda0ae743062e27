#pragma once

// Independent reference implementations used only by the tests. Written for
// clarity, not speed: plain index arithmetic over the definitions.

#include <algorithm>
#include <cmath>
#include <vector>

#include "lrnet/data.hpp"
#include "lrnet/rng.hpp"
#include "lrnet/tensor.hpp"

namespace oracle {

using lrnet::Rng;
using lrnet::Shape;
using lrnet::TensorT;

template <class T>
TensorT<T> random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  TensorT<T> t(s);
  for (auto& v : t.data()) v = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

/// Direct cross-correlation with zero padding.
template <class T>
TensorT<T> conv2d(const TensorT<T>& x, const TensorT<T>& k, const std::vector<T>& bias, int stride, int pad,
                  int groups) {
  const Shape xs = x.shape(), ks = k.shape();
  const long oh = (static_cast<long>(xs.h) + 2 * pad - static_cast<long>(ks.h)) / stride + 1;
  const long ow = (static_cast<long>(xs.w) + 2 * pad - static_cast<long>(ks.w)) / stride + 1;
  TensorT<T> y(Shape{xs.n, ks.n, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow)});
  const std::size_t cin_g = xs.c / groups, cout_g = ks.n / groups;
  for (std::size_t n = 0; n < xs.n; ++n)
    for (std::size_t co = 0; co < ks.n; ++co) {
      const std::size_t g = co / cout_g;
      for (long oy = 0; oy < oh; ++oy)
        for (long ox = 0; ox < ow; ++ox) {
          double acc = bias.empty() ? 0.0 : static_cast<double>(bias[co]);
          for (std::size_t ci = 0; ci < cin_g; ++ci)
            for (std::size_t ky = 0; ky < ks.h; ++ky)
              for (std::size_t kx = 0; kx < ks.w; ++kx) {
                const long iy = oy * stride - pad + static_cast<long>(ky);
                const long ix = ox * stride - pad + static_cast<long>(kx);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(xs.h) || ix >= static_cast<long>(xs.w)) continue;
                acc += static_cast<double>(x.at(n, g * cin_g + ci, iy, ix)) * static_cast<double>(k.at(co, ci, ky, kx));
              }
          y.at(n, co, oy, ox) = static_cast<T>(acc);
        }
    }
  return y;
}

/// Max over each non-overlapping f x f window.
template <class T>
TensorT<T> window_max(const TensorT<T>& x, std::size_t f) {
  const Shape s = x.shape();
  TensorT<T> y(Shape{s.n, s.c, s.h / f, s.w / f});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t oy = 0; oy < s.h / f; ++oy)
        for (std::size_t ox = 0; ox < s.w / f; ++ox) {
          T m = x.at(n, c, oy * f, ox * f);
          for (std::size_t dy = 0; dy < f; ++dy)
            for (std::size_t dx = 0; dx < f; ++dx) m = std::max(m, x.at(n, c, oy * f + dy, ox * f + dx));
          y.at(n, c, oy, ox) = m;
        }
  return y;
}

/// Bilinear resize, half-pixel centres, coordinates clamped to the source.
template <class T>
TensorT<T> bilinear(const TensorT<T>& x, std::size_t oh, std::size_t ow) {
  const Shape s = x.shape();
  TensorT<T> y(Shape{s.n, s.c, oh, ow});
  auto src = [](std::size_t o, std::size_t in, std::size_t out) {
    double v = (static_cast<double>(o) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
    return std::clamp(v, 0.0, static_cast<double>(in - 1));
  };
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t c = 0; c < s.c; ++c)
      for (std::size_t oy = 0; oy < oh; ++oy)
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const double sy = src(oy, s.h, oh), sx = src(ox, s.w, ow);
          const auto y0 = static_cast<std::size_t>(std::floor(sy)), x0 = static_cast<std::size_t>(std::floor(sx));
          const std::size_t y1 = std::min(y0 + 1, s.h - 1), x1 = std::min(x0 + 1, s.w - 1);
          const double fy = sy - static_cast<double>(y0), fx = sx - static_cast<double>(x0);
          const double v = (1 - fy) * ((1 - fx) * x.at(n, c, y0, x0) + fx * x.at(n, c, y0, x1)) +
                           fy * ((1 - fx) * x.at(n, c, y1, x0) + fx * x.at(n, c, y1, x1));
          y.at(n, c, oy, ox) = static_cast<T>(v);
        }
  return y;
}

template <class T>
double max_rel_diff(const TensorT<T>& a, const TensorT<T>& b) {
  double worst = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i]));
    worst = std::max(worst, d / std::max({std::abs(static_cast<double>(a[i])), std::abs(static_cast<double>(b[i])), 1.0}));
  }
  return worst;
}

inline lrnet::Mask random_mask(std::size_t h, std::size_t w, double p, Rng& rng) {
  lrnet::Mask m(h, w, 0);
  for (auto& v : m.v) v = rng.bernoulli(p) ? 1 : 0;
  return m;
}

}  // namespace oracle
