#include "lrnet/loss.hpp"

#include <cmath>

namespace lrnet {

Grid<float> edge_weight_map(const Mask& mask) {
  check_binary(mask);
  Grid<float> out(mask.h, mask.w, 1.0f);
  for (std::size_t y = 0; y < mask.h; ++y) {
    for (std::size_t x = 0; x < mask.w; ++x) {
      const std::uint8_t c = mask.at(y, x);
      const bool edge = (y > 0 && mask.at(y - 1, x) != c) || (y + 1 < mask.h && mask.at(y + 1, x) != c) ||
                        (x > 0 && mask.at(y, x - 1) != c) || (x + 1 < mask.w && mask.at(y, x + 1) != c);
      if (edge) out.at(y, x) = kEdgeWeight;
    }
  }
  return out;
}

namespace {

template <class T>
void check_loss_inputs(const TensorT<T>& logits, const TensorT<T>& target, const TensorT<T>& weights) {
  require(logits.shape() == target.shape() && logits.shape() == weights.shape(), ErrorKind::shape,
          "ee_loss: shapes differ (logits " + logits.shape().str() + ", target " + target.shape().str() +
              ", weights " + weights.shape().str() + ")");
  require(!logits.empty(), ErrorKind::shape, "ee_loss: empty input");
  logits.check_finite("ee_loss logits");
}

}  // namespace

template <class T>
double ee_loss(const TensorT<T>& logits, const TensorT<T>& target, const TensorT<T>& weights) {
  check_loss_inputs(logits, target, weights);
  double sum = 0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double p = logits[i];
    const double t = target[i];
    sum += static_cast<double>(weights[i]) * (std::max(p, 0.0) - p * t + std::log1p(std::exp(-std::abs(p))));
  }
  return sum / static_cast<double>(logits.size());
}

template <class T>
TensorT<T> ee_loss_grad(const TensorT<T>& logits, const TensorT<T>& target, const TensorT<T>& weights) {
  check_loss_inputs(logits, target, weights);
  TensorT<T> g(logits.shape());
  const double inv_n = 1.0 / static_cast<double>(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double p = logits[i];
    const double s = p >= 0 ? 1.0 / (1.0 + std::exp(-p)) : std::exp(p) / (1.0 + std::exp(p));
    g[i] = static_cast<T>(static_cast<double>(weights[i]) * (s - static_cast<double>(target[i])) * inv_n);
  }
  return g;
}

template double ee_loss(const TensorT<float>&, const TensorT<float>&, const TensorT<float>&);
template double ee_loss(const TensorT<double>&, const TensorT<double>&, const TensorT<double>&);
template TensorT<float> ee_loss_grad(const TensorT<float>&, const TensorT<float>&, const TensorT<float>&);
template TensorT<double> ee_loss_grad(const TensorT<double>&, const TensorT<double>&, const TensorT<double>&);

Tensor image_tensor(const Image& image) {
  return Tensor(Shape{1, 1, image.h, image.w}, std::vector<float>(image.v.begin(), image.v.end()));
}

Batch make_batch(std::span<const Sample> samples) {
  require(!samples.empty(), ErrorKind::data, "make_batch: no samples");
  const std::size_t h = samples[0].image.h;
  const std::size_t w = samples[0].image.w;
  const Shape shape{samples.size(), 1, h, w};
  Batch b{Tensor(shape), Tensor(shape), Tensor(shape)};
  for (std::size_t n = 0; n < samples.size(); ++n) {
    const Sample& s = samples[n];
    check_sample(s);
    require(s.image.h == h && s.image.w == w, ErrorKind::shape, "make_batch: samples differ in extent");
    const Grid<float> wmap = edge_weight_map(s.mask);
    float* img = b.images.plane(n, 0);
    float* tgt = b.targets.plane(n, 0);
    float* wt = b.weights.plane(n, 0);
    for (std::size_t i = 0; i < h * w; ++i) {
      img[i] = s.image.v[i];
      tgt[i] = static_cast<float>(s.mask.v[i]);
      wt[i] = wmap.v[i];
    }
  }
  return b;
}

}  // namespace lrnet
