#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "lrnet/tensor.hpp"

// Primitive numeric kernels. All functions are pure: outputs depend only on the
// arguments, and gradient outputs are either freshly allocated or accumulated into
// caller-owned buffers as documented per function.

namespace lrnet {

struct ConvParams {
  int stride = 1;
  int padding = 0;
  int groups = 1;
};

/// Cross-correlation with zero padding. kernel is [C_out, C_in/groups, kH, kW];
/// bias is empty or of length C_out.
template <class T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& kernel, std::span<const T> bias,
                  ConvParams params);

/// Backward of conv2d. grad_input (when non-null) is overwritten; grad_kernel and
/// grad_bias (when non-empty) are accumulated into.
template <class T>
void conv2d_backward(const TensorT<T>& input, const TensorT<T>& kernel, const TensorT<T>& grad_output,
                     ConvParams params, TensorT<T>* grad_input, std::span<T> grad_kernel,
                     std::span<T> grad_bias);

/// Output extent of a convolution along one axis.
std::size_t conv_out_extent(std::size_t in, std::size_t k, int stride, int padding);

template <class T>
struct Pooled {
  TensorT<T> output;
  std::vector<std::uint32_t> argmax;  // per output element, flat offset inside its input plane
};

/// 2x2 / stride 2 max pooling. Ties resolve to the first maximum in row-major window order.
template <class T>
Pooled<T> max_pool2d(const TensorT<T>& input);

template <class T>
TensorT<T> max_pool2d_backward(const TensorT<T>& grad_output, std::span<const std::uint32_t> argmax,
                               const Shape& input_shape);

/// Bilinear resize with half-pixel centres and edge clamping (align_corners = false).
template <class T>
TensorT<T> bilinear_upsample(const TensorT<T>& input, std::size_t out_h, std::size_t out_w);

template <class T>
TensorT<T> bilinear_upsample_backward(const TensorT<T>& grad_output, const Shape& input_shape);

template <class T>
TensorT<T> relu(const TensorT<T>& x);

/// Zeroes the gradient wherever the forward output was not positive (relu'(0) = 0).
template <class T>
TensorT<T> relu_backward(const TensorT<T>& grad_output, const TensorT<T>& output);

template <class T>
TensorT<T> sigmoid(const TensorT<T>& x);

template <class T>
T sigmoid_scalar(T x);

template <class T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b);

template <class T>
void add_inplace(TensorT<T>& acc, const TensorT<T>& b);

template <class T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b);

/// Multiplies every spatial value of (n, c) by factors[n * C + c].
/// A factor vector of length C is broadcast over the batch.
template <class T>
TensorT<T> scale_by_channel(const TensorT<T>& x, std::span<const T> factors);

/// Per (n, c) spatial mean, laid out as n * C + c.
template <class T>
std::vector<T> global_avg_pool(const TensorT<T>& x);

template <class T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b);

template <class T>
TensorT<T> slice_channels(const TensorT<T>& x, std::size_t begin, std::size_t count);

}  // namespace lrnet
