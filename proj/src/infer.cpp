#include "lrnet/infer.hpp"

#include <atomic>
#include <exception>
#include <mutex>
#include <string>
#include <thread>

namespace lrnet {

TileGrid tile_plan(std::size_t h, std::size_t w, std::size_t window) {
  require(h >= 1 && w >= 1, ErrorKind::shape, "tile_plan: empty image");
  require(window >= 1, ErrorKind::config, "tile_plan: window must be positive");
  TileGrid g;
  g.window = window;
  g.h = h;
  g.w = w;
  g.padded_h = window * ((h + window - 1) / window);
  g.padded_w = window * ((w + window - 1) / window);
  for (std::size_t y = 0; y < g.padded_h; y += window)
    for (std::size_t x = 0; x < g.padded_w; x += window) g.origins.emplace_back(y, x);
  return g;
}

Image sliding_apply(const Image& image, std::size_t window, const TileFn& fn, std::size_t threads) {
  require(image.size() == image.h * image.w, ErrorKind::shape, "sliding_apply: image storage mismatch");
  const TileGrid grid = tile_plan(image.h, image.w, window);
  Image out(grid.h, grid.w, 0.0f);

  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::size_t error_tile = grid.origins.size();
  std::exception_ptr error;
  std::string error_message;
  ErrorKind error_kind = ErrorKind::shape;

  auto worker = [&] {
    for (std::size_t t = next++; t < grid.origins.size(); t = next++) {
      const auto [oy, ox] = grid.origins[t];
      try {
        Tensor tile(Shape{1, 1, window, window});
        for (std::size_t y = 0; y < window && oy + y < grid.h; ++y)
          for (std::size_t x = 0; x < window && ox + x < grid.w; ++x) tile.at(0, 0, y, x) = image.at(oy + y, ox + x);
        const Tensor result = fn(tile);
        require(result.shape() == tile.shape(), ErrorKind::shape,
                "tile result has shape " + result.shape().str() + ", expected " + tile.shape().str());
        // Tiles own disjoint regions of `out`.
        for (std::size_t y = 0; y < window && oy + y < grid.h; ++y)
          for (std::size_t x = 0; x < window && ox + x < grid.w; ++x) out.at(oy + y, ox + x) = result.at(0, 0, y, x);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (t < error_tile) {
          error_tile = t;
          error = std::current_exception();
          try {
            throw;
          } catch (const Error& e) {
            error_kind = e.kind();
            error_message = e.what();
          } catch (const std::exception& e) {
            error_kind = ErrorKind::numeric;
            error_message = e.what();
          }
        }
      }
    }
  };

  const std::size_t n = std::max<std::size_t>(1, std::min(threads, grid.origins.size()));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t i = 0; i < n; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  if (error) {
    const auto [oy, ox] = grid.origins[error_tile];
    fail(error_kind, "tile at (y=" + std::to_string(oy) + ", x=" + std::to_string(ox) + "): " + error_message);
  }
  return out;
}

Image sliding_infer(const Image& image, const LrNet<float>& model, std::size_t threads) {
  const auto window = static_cast<std::size_t>(model.config().window);
  return sliding_apply(image, window, [&model](const Tensor& tile) { return model.predict(tile); }, threads);
}

Mask threshold_mask(const Image& prob, double tau) {
  Mask m(prob.h, prob.w, 0);
  for (std::size_t i = 0; i < prob.size(); ++i) m.v[i] = static_cast<double>(prob.v[i]) >= tau ? 1 : 0;
  return m;
}

}  // namespace lrnet
