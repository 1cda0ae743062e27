#include "lrnet/layers.hpp"

#include <cmath>

namespace lrnet {

void fail_backward_before_forward(const std::string& layer) {
  fail(ErrorKind::shape, "backward called before forward on layer '" + layer + "'");
}

namespace {

template <class T>
TensorT<T> param_tensor(Shape shape, T fill) {
  TensorT<T> t(shape, fill);
  t.enable_grad();
  return t;
}

}  // namespace

// ---------------------------------------------------------------------------
// BatchNorm

template <class T>
BatchNorm<T>::BatchNorm(std::string name, std::size_t channels)
    : name_(std::move(name)),
      gamma_(param_tensor<T>(Shape{1, channels, 1, 1}, T{1})),
      beta_(param_tensor<T>(Shape{1, channels, 1, 1}, T{0})),
      running_mean_(Shape{1, channels, 1, 1}, T{0}),
      running_var_(Shape{1, channels, 1, 1}, T{1}) {}

template <class T>
TensorT<T> BatchNorm<T>::normalize(const TensorT<T>& x, std::span<const double> mean,
                                   std::span<const double> inv_std, TensorT<T>* xhat) const {
  const Shape& s = x.shape();
  TensorT<T> y(s);
  if (xhat != nullptr) *xhat = TensorT<T>(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const T m = static_cast<T>(mean[c]);
      const T is = static_cast<T>(inv_std[c]);
      const T g = gamma_[c];
      const T b = beta_[c];
      const T* src = x.plane(n, c);
      T* dst = y.plane(n, c);
      if (xhat != nullptr) {
        T* xh = xhat->plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) {
          xh[i] = (src[i] - m) * is;
          dst[i] = g * xh[i] + b;
        }
      } else {
        for (std::size_t i = 0; i < s.plane(); ++i) dst[i] = g * ((src[i] - m) * is) + b;
      }
    }
  }
  return y;
}

template <class T>
TensorT<T> BatchNorm<T>::forward(const TensorT<T>& x, Mode mode) {
  const Shape& s = x.shape();
  require(s.c == channels(), ErrorKind::shape,
          name_ + ": expected " + std::to_string(channels()) + " channels, got " + std::to_string(s.c));
  std::vector<double> mean(s.c), inv_std(s.c);
  if (mode == Mode::train) {
    const double count = static_cast<double>(s.n * s.plane());
    require(count > 0, ErrorKind::shape, name_ + ": empty batch");
    for (std::size_t c = 0; c < s.c; ++c) {
      double sum = 0.0;
      for (std::size_t n = 0; n < s.n; ++n) {
        const T* p = x.plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) sum += static_cast<double>(p[i]);
      }
      const double mu = sum / count;
      double sq = 0.0;
      for (std::size_t n = 0; n < s.n; ++n) {
        const T* p = x.plane(n, c);
        for (std::size_t i = 0; i < s.plane(); ++i) {
          const double d = static_cast<double>(p[i]) - mu;
          sq += d * d;
        }
      }
      const double var = sq / count;
      mean[c] = mu;
      inv_std[c] = 1.0 / std::sqrt(var + kEps);
      running_mean_[c] = static_cast<T>(kMomentum * running_mean_[c] + (1.0 - kMomentum) * mu);
      running_var_[c] = static_cast<T>(kMomentum * running_var_[c] + (1.0 - kMomentum) * var);
    }
  } else {
    for (std::size_t c = 0; c < s.c; ++c) {
      mean[c] = static_cast<double>(running_mean_[c]);
      inv_std[c] = 1.0 / std::sqrt(static_cast<double>(running_var_[c]) + kEps);
    }
  }
  TensorT<T> y = normalize(x, mean, inv_std, &xhat_);
  inv_std_ = std::move(inv_std);
  cached_mode_ = mode;
  cached_ = true;
  return y;
}

template <class T>
TensorT<T> BatchNorm<T>::predict(const TensorT<T>& x) const {
  const Shape& s = x.shape();
  require(s.c == channels(), ErrorKind::shape,
          name_ + ": expected " + std::to_string(channels()) + " channels, got " + std::to_string(s.c));
  std::vector<double> mean(s.c), inv_std(s.c);
  for (std::size_t c = 0; c < s.c; ++c) {
    mean[c] = static_cast<double>(running_mean_[c]);
    inv_std[c] = 1.0 / std::sqrt(static_cast<double>(running_var_[c]) + kEps);
  }
  return normalize(x, mean, inv_std, nullptr);
}

template <class T>
TensorT<T> BatchNorm<T>::backward(const TensorT<T>& grad_output) {
  if (!cached_) fail_backward_before_forward(name_);
  const Shape& s = xhat_.shape();
  require(grad_output.shape() == s, ErrorKind::shape,
          name_ + ": backward grad shape " + grad_output.shape().str() + " expected " + s.str());
  const double count = static_cast<double>(s.n * s.plane());
  TensorT<T> dx(s);
  auto dgamma = gamma_.grad();
  auto dbeta = beta_.grad();
  for (std::size_t c = 0; c < s.c; ++c) {
    double sum_dy = 0.0;
    double sum_dy_xhat = 0.0;
    for (std::size_t n = 0; n < s.n; ++n) {
      const T* dy = grad_output.plane(n, c);
      const T* xh = xhat_.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) {
        sum_dy += static_cast<double>(dy[i]);
        sum_dy_xhat += static_cast<double>(dy[i]) * static_cast<double>(xh[i]);
      }
    }
    dgamma[c] += static_cast<T>(sum_dy_xhat);
    dbeta[c] += static_cast<T>(sum_dy);
    const double scale = static_cast<double>(gamma_[c]) * inv_std_[c];
    for (std::size_t n = 0; n < s.n; ++n) {
      const T* dy = grad_output.plane(n, c);
      const T* xh = xhat_.plane(n, c);
      T* out = dx.plane(n, c);
      if (cached_mode_ == Mode::train) {
        const T k = static_cast<T>(scale);
        const T mean_dy = static_cast<T>(sum_dy / count);
        const T mean_dy_xhat = static_cast<T>(sum_dy_xhat / count);
        for (std::size_t i = 0; i < s.plane(); ++i) out[i] = k * (dy[i] - mean_dy - xh[i] * mean_dy_xhat);
      } else {
        const T k = static_cast<T>(scale);
        for (std::size_t i = 0; i < s.plane(); ++i) out[i] = k * dy[i];
      }
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// DsConvBlock

template <class T>
DsConvBlock<T>::DsConvBlock(std::string name, std::size_t in_channels, std::size_t out_channels, int stride)
    : name_(std::move(name)),
      stride_(stride),
      depthwise_(param_tensor<T>(Shape{in_channels, 1, 3, 3}, T{0})),
      pointwise_(param_tensor<T>(Shape{out_channels, in_channels, 1, 1}, T{0})),
      bn_(name_ + ".bn", out_channels) {
  require(stride == 1 || stride == 2, ErrorKind::config, name_ + ": stride must be 1 or 2");
}

template <class T>
void DsConvBlock<T>::check_input(const TensorT<T>& x) const {
  require(x.shape().c == in_channels(), ErrorKind::shape,
          name_ + ": expected " + std::to_string(in_channels()) + " input channels, got " +
              std::to_string(x.shape().c));
  if (stride_ == 2) {
    require(x.shape().h % 2 == 0 && x.shape().w % 2 == 0, ErrorKind::shape,
            name_ + ": odd spatial extent " + std::to_string(x.shape().h) + "x" + std::to_string(x.shape().w) +
                " for a stride-2 block");
  }
}

template <class T>
TensorT<T> DsConvBlock<T>::forward(const TensorT<T>& x, Mode mode) {
  check_input(x);
  input_ = x;
  depthwise_out_ = conv2d(x, depthwise_, std::span<const T>{}, depthwise_params());
  TensorT<T> mixed = conv2d(depthwise_out_, pointwise_, std::span<const T>{}, ConvParams{});
  output_ = relu(bn_.forward(mixed, mode));
  cached_ = true;
  return output_;
}

template <class T>
TensorT<T> DsConvBlock<T>::predict(const TensorT<T>& x) const {
  check_input(x);
  TensorT<T> d = conv2d(x, depthwise_, std::span<const T>{}, depthwise_params());
  return relu(bn_.predict(conv2d(d, pointwise_, std::span<const T>{}, ConvParams{})));
}

template <class T>
TensorT<T> DsConvBlock<T>::backward(const TensorT<T>& grad_output) {
  if (!cached_) fail_backward_before_forward(name_);
  TensorT<T> g = bn_.backward(relu_backward(grad_output, output_));
  TensorT<T> g_depthwise;
  conv2d_backward(depthwise_out_, pointwise_, g, ConvParams{}, &g_depthwise, pointwise_.grad(), std::span<T>{});
  TensorT<T> g_input;
  conv2d_backward(input_, depthwise_, g_depthwise, depthwise_params(), &g_input, depthwise_.grad(),
                  std::span<T>{});
  return g_input;
}

// ---------------------------------------------------------------------------
// EcaLayer

template <class T>
EcaLayer<T>::EcaLayer(std::string name, int kernel_size)
    : name_(std::move(name)), kernel_(param_tensor<T>(Shape{1, 1, 1, static_cast<std::size_t>(kernel_size)}, T{0})) {
  require(kernel_size >= 1 && kernel_size % 2 == 1, ErrorKind::config,
          name_ + ": ECA kernel size must be odd and positive, got " + std::to_string(kernel_size));
}

template <class T>
std::vector<T> EcaLayer<T>::mix(std::span<const T> pooled, std::size_t n, std::size_t c) const {
  const auto k = static_cast<long>(kernel_.size());
  const long r = (k - 1) / 2;
  std::vector<T> out(n * c);
  for (std::size_t b = 0; b < n; ++b) {
    const T* g = pooled.data() + b * c;
    for (long ch = 0; ch < static_cast<long>(c); ++ch) {
      T z{0};
      for (long j = 0; j < k; ++j) {
        const long src = ch + j - r;
        if (src >= 0 && src < static_cast<long>(c)) z += kernel_[static_cast<std::size_t>(j)] * g[src];
      }
      out[b * c + static_cast<std::size_t>(ch)] = sigmoid_scalar(z);
    }
  }
  return out;
}

template <class T>
std::vector<T> EcaLayer<T>::attention(const TensorT<T>& x) const {
  return mix(global_avg_pool(x), x.shape().n, x.shape().c);
}

template <class T>
TensorT<T> EcaLayer<T>::forward(const TensorT<T>& x, Mode) {
  require(x.shape().c >= 1, ErrorKind::shape, name_ + ": input has no channels");
  input_ = x;
  pooled_ = global_avg_pool(x);
  attention_ = mix(pooled_, x.shape().n, x.shape().c);
  cached_ = true;
  return scale_by_channel(x, std::span<const T>(attention_));
}

template <class T>
TensorT<T> EcaLayer<T>::predict(const TensorT<T>& x) const {
  require(x.shape().c >= 1, ErrorKind::shape, name_ + ": input has no channels");
  const std::vector<T> a = attention(x);
  return scale_by_channel(x, std::span<const T>(a));
}

template <class T>
TensorT<T> EcaLayer<T>::backward(const TensorT<T>& grad_output) {
  if (!cached_) fail_backward_before_forward(name_);
  const Shape& s = input_.shape();
  require(grad_output.shape() == s, ErrorKind::shape,
          name_ + ": backward grad shape " + grad_output.shape().str() + " expected " + s.str());
  const auto k = static_cast<long>(kernel_.size());
  const long r = (k - 1) / 2;
  const long channels = static_cast<long>(s.c);
  const double inv_area = 1.0 / static_cast<double>(s.plane());

  // dz[n, c] = (sum_hw dy * x) * a (1 - a)
  std::vector<double> dz(s.n * s.c);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const T* dy = grad_output.plane(n, c);
      const T* x = input_.plane(n, c);
      double da = 0.0;
      for (std::size_t i = 0; i < s.plane(); ++i) da += static_cast<double>(dy[i]) * static_cast<double>(x[i]);
      const double a = static_cast<double>(attention_[n * s.c + c]);
      dz[n * s.c + c] = da * a * (1.0 - a);
    }
  }

  auto dkernel = kernel_.grad();
  TensorT<T> dx(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    const double* dzn = dz.data() + n * s.c;
    const T* g = pooled_.data() + n * s.c;
    for (long j = 0; j < k; ++j) {
      double acc = 0.0;
      for (long c = 0; c < channels; ++c) {
        const long src = c + j - r;
        if (src >= 0 && src < channels) acc += dzn[c] * static_cast<double>(g[src]);
      }
      dkernel[static_cast<std::size_t>(j)] += static_cast<T>(acc);
    }
    for (long c = 0; c < channels; ++c) {
      // pooled[c] feeds z[c'] for c' = c - j + r
      double dg = 0.0;
      for (long j = 0; j < k; ++j) {
        const long dst = c - j + r;
        if (dst >= 0 && dst < channels) dg += static_cast<double>(kernel_[static_cast<std::size_t>(j)]) * dzn[dst];
      }
      const T spread = static_cast<T>(dg * inv_area);
      const T a = attention_[n * s.c + static_cast<std::size_t>(c)];
      const T* dy = grad_output.plane(n, static_cast<std::size_t>(c));
      T* out = dx.plane(n, static_cast<std::size_t>(c));
      for (std::size_t i = 0; i < s.plane(); ++i) out[i] = dy[i] * a + spread;
    }
  }
  return dx;
}

// ---------------------------------------------------------------------------
// Pointwise

template <class T>
Pointwise<T>::Pointwise(std::string name, std::size_t in_channels, std::size_t out_channels)
    : name_(std::move(name)),
      weight_(param_tensor<T>(Shape{out_channels, in_channels, 1, 1}, T{0})),
      bias_(param_tensor<T>(Shape{1, out_channels, 1, 1}, T{0})) {}

template <class T>
TensorT<T> Pointwise<T>::forward(const TensorT<T>& x, Mode) {
  TensorT<T> y = predict(x);
  input_ = x;
  cached_ = true;
  return y;
}

template <class T>
TensorT<T> Pointwise<T>::predict(const TensorT<T>& x) const {
  require(x.shape().c == weight_.shape().c, ErrorKind::shape,
          name_ + ": expected " + std::to_string(weight_.shape().c) + " input channels, got " +
              std::to_string(x.shape().c));
  return conv2d(x, weight_, bias_.data(), ConvParams{});
}

template <class T>
TensorT<T> Pointwise<T>::backward(const TensorT<T>& grad_output) {
  if (!cached_) fail_backward_before_forward(name_);
  TensorT<T> dx;
  conv2d_backward(input_, weight_, grad_output, ConvParams{}, &dx, weight_.grad(), bias_.grad());
  return dx;
}

// ---------------------------------------------------------------------------
// MaxPool / Upsample

template <class T>
TensorT<T> MaxPool<T>::forward(const TensorT<T>& x, Mode) {
  Pooled<T> p = max_pool2d(x);
  input_shape_ = x.shape();
  argmax_ = std::move(p.argmax);
  cached_ = true;
  return std::move(p.output);
}

template <class T>
TensorT<T> MaxPool<T>::backward(const TensorT<T>& grad_output) {
  if (!cached_) fail_backward_before_forward("max_pool");
  return max_pool2d_backward(grad_output, std::span<const std::uint32_t>(argmax_), input_shape_);
}

template <class T>
TensorT<T> Upsample<T>::forward(const TensorT<T>& x, std::size_t out_h, std::size_t out_w, Mode) {
  input_shape_ = x.shape();
  cached_ = true;
  return bilinear_upsample(x, out_h, out_w);
}

template <class T>
TensorT<T> Upsample<T>::backward(const TensorT<T>& grad_output) {
  if (!cached_) fail_backward_before_forward("upsample");
  return bilinear_upsample_backward(grad_output, input_shape_);
}

template class BatchNorm<float>;
template class BatchNorm<double>;
template class DsConvBlock<float>;
template class DsConvBlock<double>;
template class EcaLayer<float>;
template class EcaLayer<double>;
template class Pointwise<float>;
template class Pointwise<double>;
template class MaxPool<float>;
template class MaxPool<double>;
template class Upsample<float>;
template class Upsample<double>;

}  // namespace lrnet
