#pragma once

#include <span>

#include "lrnet/data.hpp"
#include "lrnet/tensor.hpp"

namespace lrnet {

inline constexpr float kEdgeWeight = 4.0f;

/// 4 where a pixel differs from any in-bounds 4-neighbour, 1 elsewhere.
Grid<float> edge_weight_map(const Mask& mask);

/// Weighted binary cross-entropy on logits, averaged over every element:
/// (1/N) sum w * (max(p,0) - p*t + log(1 + exp(-|p|))).
template <class T>
double ee_loss(const TensorT<T>& logits, const TensorT<T>& target, const TensorT<T>& weights);

/// dL/dlogits = w * (sigmoid(p) - t) / N.
template <class T>
TensorT<T> ee_loss_grad(const TensorT<T>& logits, const TensorT<T>& target, const TensorT<T>& weights);

/// Stacks equally sized samples into N x 1 x H x W image, target and edge-weight tensors.
struct Batch {
  Tensor images;
  Tensor targets;
  Tensor weights;
};
Batch make_batch(std::span<const Sample> samples);

Tensor image_tensor(const Image& image);

}  // namespace lrnet
