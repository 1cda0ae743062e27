#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lrnet/kernels.hpp"
#include "lrnet/tensor.hpp"

// Trainable building blocks. Every layer follows the same protocol:
//
//   forward(x, mode)   records what backward needs, returns the output
//   backward(dy)       accumulates parameter gradients, returns dL/dx
//   predict(x) const   inference-mode forward without recording; safe to call concurrently
//   visit(f)           calls f(name, tensor, trainable) for every stored tensor
//
// Parameters carry their own gradient buffers (enabled at construction).

namespace lrnet {

enum class Mode { train, infer };

template <class T>
class BatchNorm {
 public:
  static constexpr double kEps = 1e-5;
  static constexpr double kMomentum = 0.9;

  BatchNorm() = default;
  BatchNorm(std::string name, std::size_t channels);

  TensorT<T> forward(const TensorT<T>& x, Mode mode);
  TensorT<T> backward(const TensorT<T>& grad_output);
  TensorT<T> predict(const TensorT<T>& x) const;

  template <class F>
  void visit(F&& f) {
    f(name_ + ".gamma", gamma_, true);
    f(name_ + ".beta", beta_, true);
    f(name_ + ".running_mean", running_mean_, false);
    f(name_ + ".running_var", running_var_, false);
  }

  std::size_t channels() const noexcept { return gamma_.size(); }
  TensorT<T>& gamma() noexcept { return gamma_; }
  TensorT<T>& beta() noexcept { return beta_; }
  TensorT<T>& running_mean() noexcept { return running_mean_; }
  TensorT<T>& running_var() noexcept { return running_var_; }

 private:
  TensorT<T> normalize(const TensorT<T>& x, std::span<const double> mean, std::span<const double> inv_std,
                       TensorT<T>* xhat) const;

  std::string name_;
  TensorT<T> gamma_, beta_, running_mean_, running_var_;
  bool cached_ = false;
  Mode cached_mode_ = Mode::train;
  TensorT<T> xhat_;
  std::vector<double> inv_std_;
};

/// Depthwise 3x3 (stride 1 or 2, padding 1) -> pointwise 1x1 -> batch norm -> ReLU.
/// Neither convolution carries a bias.
template <class T>
class DsConvBlock {
 public:
  DsConvBlock() = default;
  DsConvBlock(std::string name, std::size_t in_channels, std::size_t out_channels, int stride);

  TensorT<T> forward(const TensorT<T>& x, Mode mode);
  TensorT<T> backward(const TensorT<T>& grad_output);
  TensorT<T> predict(const TensorT<T>& x) const;

  template <class F>
  void visit(F&& f) {
    f(name_ + ".depthwise", depthwise_, true);
    f(name_ + ".pointwise", pointwise_, true);
    bn_.visit(f);
  }

  std::size_t in_channels() const noexcept { return depthwise_.shape().n; }
  std::size_t out_channels() const noexcept { return pointwise_.shape().n; }
  int stride() const noexcept { return stride_; }
  TensorT<T>& depthwise() noexcept { return depthwise_; }
  TensorT<T>& pointwise() noexcept { return pointwise_; }
  BatchNorm<T>& bn() noexcept { return bn_; }

 private:
  ConvParams depthwise_params() const {
    return {stride_, 1, static_cast<int>(depthwise_.shape().n)};
  }
  void check_input(const TensorT<T>& x) const;

  std::string name_;
  int stride_ = 1;
  TensorT<T> depthwise_;  // [C_in, 1, 3, 3]
  TensorT<T> pointwise_;  // [C_out, C_in, 1, 1]
  BatchNorm<T> bn_;
  bool cached_ = false;
  TensorT<T> input_, depthwise_out_, output_;
};

/// Efficient channel attention: GAP -> zero-padded 1-D conv across channels -> sigmoid -> rescale.
template <class T>
class EcaLayer {
 public:
  EcaLayer() = default;
  EcaLayer(std::string name, int kernel_size);

  TensorT<T> forward(const TensorT<T>& x, Mode mode);
  TensorT<T> backward(const TensorT<T>& grad_output);
  TensorT<T> predict(const TensorT<T>& x) const;

  /// Per (n, c) attention weights for x, laid out n * C + c.
  std::vector<T> attention(const TensorT<T>& x) const;

  template <class F>
  void visit(F&& f) {
    f(name_ + ".kernel", kernel_, true);
  }

  TensorT<T>& kernel() noexcept { return kernel_; }

 private:
  std::vector<T> mix(std::span<const T> pooled, std::size_t n, std::size_t c) const;

  std::string name_;
  TensorT<T> kernel_;  // [1, 1, 1, k]
  bool cached_ = false;
  TensorT<T> input_;
  std::vector<T> pooled_, attention_;
};

/// 1x1 convolution with bias.
template <class T>
class Pointwise {
 public:
  Pointwise() = default;
  Pointwise(std::string name, std::size_t in_channels, std::size_t out_channels);

  TensorT<T> forward(const TensorT<T>& x, Mode mode);
  TensorT<T> backward(const TensorT<T>& grad_output);
  TensorT<T> predict(const TensorT<T>& x) const;

  template <class F>
  void visit(F&& f) {
    f(name_ + ".weight", weight_, true);
    f(name_ + ".bias", bias_, true);
  }

  TensorT<T>& weight() noexcept { return weight_; }
  TensorT<T>& bias() noexcept { return bias_; }

 private:
  std::string name_;
  TensorT<T> weight_;  // [C_out, C_in, 1, 1]
  TensorT<T> bias_;    // [1, C_out, 1, 1]
  bool cached_ = false;
  TensorT<T> input_;
};

/// 2x2 / stride 2 max pooling that remembers its argmax for backward.
template <class T>
class MaxPool {
 public:
  TensorT<T> forward(const TensorT<T>& x, Mode mode);
  TensorT<T> backward(const TensorT<T>& grad_output);
  TensorT<T> predict(const TensorT<T>& x) const { return max_pool2d(x).output; }

 private:
  bool cached_ = false;
  Shape input_shape_;
  std::vector<std::uint32_t> argmax_;
};

/// Bilinear resize node.
template <class T>
class Upsample {
 public:
  TensorT<T> forward(const TensorT<T>& x, std::size_t out_h, std::size_t out_w, Mode mode);
  TensorT<T> backward(const TensorT<T>& grad_output);
  TensorT<T> predict(const TensorT<T>& x, std::size_t out_h, std::size_t out_w) const {
    return bilinear_upsample(x, out_h, out_w);
  }

 private:
  bool cached_ = false;
  Shape input_shape_;
};

[[noreturn]] void fail_backward_before_forward(const std::string& layer);

}  // namespace lrnet
