#include "lrnet/data.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace lrnet {

void check_binary(const Mask& m) {
  for (std::uint8_t v : m.v) require(v <= 1, ErrorKind::data, "mask is not binary (value " + std::to_string(v) + ")");
}

void check_sample(const Sample& s) {
  require(s.image.h == s.mask.h && s.image.w == s.mask.w, ErrorKind::shape,
          "image " + std::to_string(s.image.h) + "x" + std::to_string(s.image.w) + " and mask " +
              std::to_string(s.mask.h) + "x" + std::to_string(s.mask.w) + " differ in extent");
  require(s.image.size() == s.image.h * s.image.w && s.mask.size() == s.mask.h * s.mask.w, ErrorKind::shape,
          "sample storage does not match its extent");
  check_binary(s.mask);
}

namespace {

template <class V>
Grid<V> cut(const Grid<V>& g, std::size_t oy, std::size_t ox, std::size_t size) {
  Grid<V> out(size, size, V{});
  for (std::size_t y = 0; y < size; ++y) {
    const std::size_t sy = oy + y;
    if (sy >= g.h) break;
    for (std::size_t x = 0; x < size; ++x) {
      const std::size_t sx = ox + x;
      if (sx >= g.w) break;
      out.at(y, x) = g.at(sy, sx);
    }
  }
  return out;
}

}  // namespace

Sample random_crop(const Sample& sample, std::size_t size, Rng& rng) {
  check_sample(sample);
  require(size > 0, ErrorKind::config, "crop size must be positive");
  const std::size_t ph = std::max(sample.image.h, size);
  const std::size_t pw = std::max(sample.image.w, size);
  const auto oy = static_cast<std::size_t>(rng.range(0, static_cast<long>(ph - size)));
  const auto ox = static_cast<std::size_t>(rng.range(0, static_cast<long>(pw - size)));
  return {cut(sample.image, oy, ox, size), cut(sample.mask, oy, ox, size)};
}

template <class V>
Grid<V> flip_horizontal(const Grid<V>& g) {
  Grid<V> out(g.h, g.w);
  for (std::size_t y = 0; y < g.h; ++y)
    for (std::size_t x = 0; x < g.w; ++x) out.at(y, x) = g.at(y, g.w - 1 - x);
  return out;
}

template <class V>
Grid<V> flip_vertical(const Grid<V>& g) {
  Grid<V> out(g.h, g.w);
  for (std::size_t y = 0; y < g.h; ++y)
    for (std::size_t x = 0; x < g.w; ++x) out.at(y, x) = g.at(g.h - 1 - y, x);
  return out;
}

template <class V>
Grid<V> rotate90(const Grid<V>& g, int quarter_turns) {
  const int k = ((quarter_turns % 4) + 4) % 4;
  if (k == 0) return g;
  if (k == 2) return flip_vertical(flip_horizontal(g));
  Grid<V> out(g.w, g.h);
  for (std::size_t y = 0; y < out.h; ++y) {
    for (std::size_t x = 0; x < out.w; ++x) {
      out.at(y, x) = k == 1 ? g.at(x, g.w - 1 - y) : g.at(g.h - 1 - x, y);
    }
  }
  return out;
}

template Grid<float> flip_horizontal(const Grid<float>&);
template Grid<std::uint8_t> flip_horizontal(const Grid<std::uint8_t>&);
template Grid<float> flip_vertical(const Grid<float>&);
template Grid<std::uint8_t> flip_vertical(const Grid<std::uint8_t>&);
template Grid<float> rotate90(const Grid<float>&, int);
template Grid<std::uint8_t> rotate90(const Grid<std::uint8_t>&, int);

Sample augment(const Sample& sample, Rng& rng, const AugmentConfig& config) {
  const bool hflip = rng.bernoulli(0.5);
  const bool vflip = rng.bernoulli(0.5);
  const int turns = static_cast<int>(rng.below(4));
  const double factor = rng.uniform(config.contrast_lo, config.contrast_hi);

  Sample out = sample;
  if (config.hflip && hflip) out = {flip_horizontal(out.image), flip_horizontal(out.mask)};
  if (config.vflip && vflip) out = {flip_vertical(out.image), flip_vertical(out.mask)};
  if (config.rotate && turns != 0) out = {rotate90(out.image, turns), rotate90(out.mask, turns)};
  if (config.contrast) {
    for (float& v : out.image.v) v = static_cast<float>(std::clamp(v * factor, 0.0, 1.0));
  }
  return out;
}

void SynthConfig::validate() const {
  require(min_extent >= 1 && min_extent <= max_extent, ErrorKind::config, "synth extent range is empty");
  require(min_targets <= max_targets, ErrorKind::config, "synth target-count range is empty");
  require(sigma_min >= 0.5 && sigma_min <= sigma_max, ErrorKind::config,
          "synth sigma range must satisfy 0.5 <= sigma_min <= sigma_max");
  require(amp_min > 0 && amp_min <= amp_max, ErrorKind::config, "synth amplitude range is empty");
  require(noise >= 0 && bg_amplitude >= 0 && bg_scale > 0, ErrorKind::config, "synth background/noise settings invalid");
}

Sample synth_sample(const SynthConfig& config, std::size_t index) {
  config.validate();
  Rng rng = Rng(config.seed).derive(index);
  const auto h = static_cast<std::size_t>(rng.range(static_cast<long>(config.min_extent), static_cast<long>(config.max_extent)));
  const auto w = static_cast<std::size_t>(rng.range(static_cast<long>(config.min_extent), static_cast<long>(config.max_extent)));

  // Smooth background: a few low-frequency plane waves.
  constexpr int kWaves = 4;
  struct Wave {
    double fy, fx, phase, amp;
  };
  Wave waves[kWaves];
  for (auto& wv : waves) {
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double freq = rng.uniform(0.25, 1.0) / config.bg_scale;
    wv = {freq * std::sin(angle), freq * std::cos(angle), rng.uniform(0.0, 2.0 * std::numbers::pi),
          rng.uniform(0.0, 1.0)};
  }
  double amp_sum = 0;
  for (const auto& wv : waves) amp_sum += wv.amp;
  const double bg_norm = amp_sum > 0 ? config.bg_amplitude / amp_sum : 0.0;

  std::vector<double> field(h * w);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      double b = config.bg_level;
      for (const auto& wv : waves) {
        b += bg_norm * wv.amp * std::cos(2.0 * std::numbers::pi * (wv.fy * y + wv.fx * x) + wv.phase);
      }
      field[y * w + x] = b + config.noise * rng.normal();
    }
  }

  Mask mask(h, w, 0);
  const auto k = static_cast<std::size_t>(
      rng.range(static_cast<long>(config.min_targets), static_cast<long>(config.max_targets)));
  struct Target {
    long cy, cx;
    double sigma;
  };
  std::vector<Target> placed;
  for (std::size_t t = 0; t < k; ++t) {
    const double sigma = rng.uniform(config.sigma_min, config.sigma_max);
    const double amp = rng.uniform(config.amp_min, config.amp_max);
    const long margin = std::min<long>(static_cast<long>(std::ceil(3.0 * sigma)), static_cast<long>(std::min(h, w) / 2));
    // Centres sit on integer pixels so the centre pixel always clears the half-amplitude threshold.
    long cy = 0, cx = 0;
    for (int attempt = 0; attempt < 32; ++attempt) {
      cy = rng.range(margin, static_cast<long>(h) - 1 - margin);
      cx = rng.range(margin, static_cast<long>(w) - 1 - margin);
      bool clear = true;
      for (const auto& p : placed) {
        const double gap = 3.0 * (sigma + p.sigma) + 4.0;
        const double dy = static_cast<double>(cy - p.cy), dx = static_cast<double>(cx - p.cx);
        if (dy * dy + dx * dx < gap * gap) clear = false;
      }
      if (clear) break;
    }
    placed.push_back({cy, cx, sigma});

    const long reach = static_cast<long>(std::ceil(4.0 * sigma));
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (long y = std::max(0L, cy - reach); y <= std::min(static_cast<long>(h) - 1, cy + reach); ++y) {
      for (long x = std::max(0L, cx - reach); x <= std::min(static_cast<long>(w) - 1, cx + reach); ++x) {
        const double r2 = static_cast<double>((y - cy) * (y - cy) + (x - cx) * (x - cx));
        const double g = amp * std::exp(-r2 * inv);
        field[static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)] += g;
        if (g > 0.5 * amp) mask.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x)) = 1;
      }
    }
  }

  Image image(h, w);
  for (std::size_t i = 0; i < field.size(); ++i) image.v[i] = static_cast<float>(std::clamp(field[i], 0.0, 1.0));
  return {std::move(image), std::move(mask)};
}

std::vector<Sample> synth_generate(const SynthConfig& config) {
  config.validate();
  std::vector<Sample> out;
  out.reserve(config.count);
  for (std::size_t i = 0; i < config.count; ++i) out.push_back(synth_sample(config, i));
  return out;
}

}  // namespace lrnet
