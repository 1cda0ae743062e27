#pragma once

#include <cstddef>
#include <functional>
#include <utility>
#include <vector>

#include "lrnet/data.hpp"
#include "lrnet/model.hpp"

namespace lrnet {

struct TileGrid {
  std::size_t window = 0;
  std::size_t h = 0, w = 0;                                // original extents
  std::size_t padded_h = 0, padded_w = 0;                  // multiples of window
  std::vector<std::pair<std::size_t, std::size_t>> origins;  // (y, x), row-major
};

TileGrid tile_plan(std::size_t h, std::size_t w, std::size_t window);

/// Maps one 1 x 1 x window x window tile to an equally shaped output.
using TileFn = std::function<Tensor(const Tensor&)>;

/// Pads, runs `fn` per tile on up to `threads` workers, stitches, crops back.
/// Errors from a tile are rethrown with the tile origin prepended.
Image sliding_apply(const Image& image, std::size_t window, const TileFn& fn, std::size_t threads = 1);

/// Probability map at the image's own extent.
Image sliding_infer(const Image& image, const LrNet<float>& model, std::size_t threads = 1);

/// 1 where prob >= tau.
Mask threshold_mask(const Image& prob, double tau = 0.5);

}  // namespace lrnet
