#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "lrnet/error.hpp"
#include "lrnet/rng.hpp"

namespace lrnet {

/// Row-major 2-D map.
template <class V>
struct Grid {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<V> v;

  Grid() = default;
  Grid(std::size_t height, std::size_t width, V fill = V{}) : h(height), w(width), v(height * width, fill) {}

  V& at(std::size_t y, std::size_t x) noexcept { return v[y * w + x]; }
  V at(std::size_t y, std::size_t x) const noexcept { return v[y * w + x]; }
  std::size_t size() const noexcept { return v.size(); }

  bool operator==(const Grid&) const = default;
};

using Image = Grid<float>;        // intensities in [0, 1]
using Mask = Grid<std::uint8_t>;  // values in {0, 1}

struct Sample {
  Image image;
  Mask mask;
};

void check_sample(const Sample& s);
void check_binary(const Mask& m);

/// Zero-pads bottom/right up to `size`, then cuts a size x size window at a uniformly drawn offset.
Sample random_crop(const Sample& sample, std::size_t size, Rng& rng);

struct AugmentConfig {
  bool hflip = true;
  bool vflip = true;
  bool rotate = true;
  bool contrast = true;
  double contrast_lo = 0.8;
  double contrast_hi = 1.2;

  static AugmentConfig none() { return {false, false, false, false}; }
};

template <class V>
Grid<V> flip_horizontal(const Grid<V>& g);
template <class V>
Grid<V> flip_vertical(const Grid<V>& g);
/// Counter-clockwise rotation by quarter_turns * 90 degrees.
template <class V>
Grid<V> rotate90(const Grid<V>& g, int quarter_turns);

/// Random flips, quarter-turn rotation and image-only contrast scaling.
/// Four draws are consumed per call regardless of which switches are on.
Sample augment(const Sample& sample, Rng& rng, const AugmentConfig& config = {});

struct SynthConfig {
  std::size_t count = 100;
  std::size_t min_extent = 256;
  std::size_t max_extent = 512;
  std::size_t min_targets = 1;
  std::size_t max_targets = 4;
  double sigma_min = 1.5;
  double sigma_max = 3.0;
  double amp_min = 0.35;
  double amp_max = 0.6;
  double bg_level = 0.25;      // mean background intensity
  double bg_amplitude = 0.08;  // peak deviation of the smooth background
  double bg_scale = 96.0;      // shortest background wavelength in pixels
  double noise = 0.02;         // per-pixel Gaussian noise std
  std::uint64_t seed = 0;

  void validate() const;
};

/// Sample `index` of the dataset described by `config`; independent of every other index.
Sample synth_sample(const SynthConfig& config, std::size_t index);
std::vector<Sample> synth_generate(const SynthConfig& config);

}  // namespace lrnet
