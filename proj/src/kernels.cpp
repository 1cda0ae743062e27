#include "lrnet/kernels.hpp"

#include <limits>

#include <algorithm>
#include <cmath>
#include <cstring>

namespace lrnet {

namespace {

long ceil_div(long a, long b) { return a >= 0 ? (a + b - 1) / b : -((-a) / b); }
long floor_div(long a, long b) { return a >= 0 ? a / b : -((-a + b - 1) / b); }

// Valid [lo, hi) range of output columns whose source column ox*stride + shift lies in [0, width).
std::pair<long, long> valid_columns(long width, long out_width, long stride, long shift) {
  const long lo = std::max(0L, ceil_div(-shift, stride));
  const long last = width - 1 - shift;
  const long hi = last < 0 ? 0 : std::min(out_width, floor_div(last, stride) + 1);
  return {lo, std::max(lo, hi)};
}

template <class T>
double dot_strided(const T* a, const T* b, long n, long stride_b) {
  T acc[8] = {};
  long i = 0;
  if (stride_b == 1) {
    for (; i + 8 <= n; i += 8) {
      for (int l = 0; l < 8; ++l) acc[l] += a[i + l] * b[i + l];
    }
  } else {
    for (; i + 8 <= n; i += 8) {
      for (int l = 0; l < 8; ++l) acc[l] += a[i + l] * b[(i + l) * stride_b];
    }
  }
  double sum = 0.0;
  for (T v : acc) sum += static_cast<double>(v);
  for (; i < n; ++i) sum += static_cast<double>(a[i]) * static_cast<double>(b[i * stride_b]);
  return sum;
}

struct ConvGeometry {
  std::size_t groups, cin_g, cout_g, kh, kw, oh, ow;
};

template <class T>
ConvGeometry check_conv(const TensorT<T>& input, const TensorT<T>& kernel, std::size_t bias_len,
                        const ConvParams& p) {
  const Shape& is = input.shape();
  const Shape& ks = kernel.shape();
  require(p.stride > 0, ErrorKind::shape, "conv2d: stride must be positive, got " + std::to_string(p.stride));
  require(p.padding >= 0, ErrorKind::shape,
          "conv2d: padding must be non-negative, got " + std::to_string(p.padding));
  require(p.groups > 0, ErrorKind::shape, "conv2d: groups must be positive, got " + std::to_string(p.groups));
  const auto g = static_cast<std::size_t>(p.groups);
  require(is.c % g == 0, ErrorKind::shape,
          "conv2d: input channels (" + std::to_string(is.c) + ") not divisible by groups (" +
              std::to_string(g) + ")");
  require(ks.n % g == 0, ErrorKind::shape,
          "conv2d: output channels (" + std::to_string(ks.n) + ") not divisible by groups (" +
              std::to_string(g) + ")");
  require(ks.c == is.c / g, ErrorKind::shape,
          "conv2d: kernel input channels (" + std::to_string(ks.c) + ") must equal input channels / groups (" +
              std::to_string(is.c / g) + ")");
  require(ks.h >= 1 && ks.w >= 1, ErrorKind::shape, "conv2d: kernel height/width must be positive");
  require(is.h + 2 * static_cast<std::size_t>(p.padding) >= ks.h, ErrorKind::shape,
          "conv2d: kernel height (" + std::to_string(ks.h) + ") exceeds padded input height");
  require(is.w + 2 * static_cast<std::size_t>(p.padding) >= ks.w, ErrorKind::shape,
          "conv2d: kernel width (" + std::to_string(ks.w) + ") exceeds padded input width");
  require(bias_len == 0 || bias_len == ks.n, ErrorKind::shape,
          "conv2d: bias length (" + std::to_string(bias_len) + ") must equal output channels (" +
              std::to_string(ks.n) + ")");
  return {g,    is.c / g, ks.n / g, ks.h, ks.w, conv_out_extent(is.h, ks.h, p.stride, p.padding),
          conv_out_extent(is.w, ks.w, p.stride, p.padding)};
}

}  // namespace

std::size_t conv_out_extent(std::size_t in, std::size_t k, int stride, int padding) {
  const long span = static_cast<long>(in) + 2L * padding - static_cast<long>(k);
  if (span < 0 || stride <= 0) return 0;
  return static_cast<std::size_t>(span / stride + 1);
}

template <class T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& kernel, std::span<const T> bias,
                  ConvParams params) {
  const ConvGeometry geo = check_conv(input, kernel, bias.size(), params);
  const Shape& is = input.shape();
  const long s = params.stride;
  const long pad = params.padding;
  const long in_h = static_cast<long>(is.h);
  const long in_w = static_cast<long>(is.w);
  const long out_w = static_cast<long>(geo.ow);
  TensorT<T> out(Shape{is.n, kernel.shape().n, geo.oh, geo.ow});

  for (std::size_t n = 0; n < is.n; ++n) {
    for (std::size_t co = 0; co < kernel.shape().n; ++co) {
      T* o = out.plane(n, co);
      std::fill(o, o + geo.oh * geo.ow, bias.empty() ? T{0} : bias[co]);
      const std::size_t group = co / geo.cout_g;
      for (long oy = 0; oy < static_cast<long>(geo.oh); ++oy) {
        T* orow = o + oy * out_w;
        for (std::size_t cil = 0; cil < geo.cin_g; ++cil) {
          const T* in = input.plane(n, group * geo.cin_g + cil);
          const T* w = kernel.ptr() + (co * geo.cin_g + cil) * geo.kh * geo.kw;
          for (std::size_t ky = 0; ky < geo.kh; ++ky) {
            const long iy = oy * s - pad + static_cast<long>(ky);
            if (iy < 0 || iy >= in_h) continue;
            const T* irow = in + iy * in_w;
            for (std::size_t kx = 0; kx < geo.kw; ++kx) {
              const long shift = static_cast<long>(kx) - pad;
              const auto [lo, hi] = valid_columns(in_w, out_w, s, shift);
              const T wv = w[ky * geo.kw + kx];
              if (s == 1) {
                const T* src = irow + lo + shift;
                T* dst = orow + lo;
                for (long i = 0; i < hi - lo; ++i) dst[i] += wv * src[i];
              } else {
                for (long ox = lo; ox < hi; ++ox) orow[ox] += wv * irow[ox * s + shift];
              }
            }
          }
        }
      }
    }
  }
  return out;
}

template <class T>
void conv2d_backward(const TensorT<T>& input, const TensorT<T>& kernel, const TensorT<T>& grad_output,
                     ConvParams params, TensorT<T>* grad_input, std::span<T> grad_kernel,
                     std::span<T> grad_bias) {
  const ConvGeometry geo = check_conv(input, kernel, grad_bias.size(), params);
  const Shape& is = input.shape();
  const Shape expected{is.n, kernel.shape().n, geo.oh, geo.ow};
  require(grad_output.shape() == expected, ErrorKind::shape,
          "conv2d_backward: grad_output shape " + grad_output.shape().str() + " expected " + expected.str());
  require(grad_kernel.empty() || grad_kernel.size() == kernel.size(), ErrorKind::shape,
          "conv2d_backward: grad_kernel length mismatch");
  const long s = params.stride;
  const long pad = params.padding;
  const long in_h = static_cast<long>(is.h);
  const long in_w = static_cast<long>(is.w);
  const long out_w = static_cast<long>(geo.ow);
  const std::size_t per_out = geo.cin_g * geo.kh * geo.kw;

  if (grad_input != nullptr) *grad_input = TensorT<T>(is);
  std::vector<double> kacc(grad_kernel.empty() ? 0 : kernel.size(), 0.0);

  for (std::size_t n = 0; n < is.n; ++n) {
    for (std::size_t co = 0; co < kernel.shape().n; ++co) {
      const T* go = grad_output.plane(n, co);
      const std::size_t group = co / geo.cout_g;
      if (!grad_bias.empty()) {
        double sum = 0.0;
        for (std::size_t i = 0; i < geo.oh * geo.ow; ++i) sum += static_cast<double>(go[i]);
        grad_bias[co] += static_cast<T>(sum);
      }
      for (long oy = 0; oy < static_cast<long>(geo.oh); ++oy) {
        const T* gorow = go + oy * out_w;
        for (std::size_t cil = 0; cil < geo.cin_g; ++cil) {
          const std::size_t ci = group * geo.cin_g + cil;
          const T* in = input.plane(n, ci);
          T* gin = grad_input != nullptr ? grad_input->plane(n, ci) : nullptr;
          const T* w = kernel.ptr() + (co * geo.cin_g + cil) * geo.kh * geo.kw;
          double* kw_acc = kacc.empty() ? nullptr : kacc.data() + co * per_out + cil * geo.kh * geo.kw;
          for (std::size_t ky = 0; ky < geo.kh; ++ky) {
            const long iy = oy * s - pad + static_cast<long>(ky);
            if (iy < 0 || iy >= in_h) continue;
            const T* irow = in + iy * in_w;
            T* girow = gin != nullptr ? gin + iy * in_w : nullptr;
            for (std::size_t kx = 0; kx < geo.kw; ++kx) {
              const long shift = static_cast<long>(kx) - pad;
              const auto [lo, hi] = valid_columns(in_w, out_w, s, shift);
              if (hi <= lo) continue;
              const T wv = w[ky * geo.kw + kx];
              if (girow != nullptr) {
                if (s == 1) {
                  T* dst = girow + lo + shift;
                  const T* src = gorow + lo;
                  for (long i = 0; i < hi - lo; ++i) dst[i] += wv * src[i];
                } else {
                  for (long ox = lo; ox < hi; ++ox) girow[ox * s + shift] += wv * gorow[ox];
                }
              }
              if (kw_acc != nullptr) {
                kw_acc[ky * geo.kw + kx] += dot_strided(gorow + lo, irow + lo * s + shift, hi - lo, s);
              }
            }
          }
        }
      }
    }
  }
  for (std::size_t i = 0; i < kacc.size(); ++i) grad_kernel[i] += static_cast<T>(kacc[i]);
}

template <class T>
Pooled<T> max_pool2d(const TensorT<T>& input) {
  const Shape& is = input.shape();
  require(is.h % 2 == 0 && is.w % 2 == 0, ErrorKind::shape,
          "max_pool2d: odd spatial extent " + std::to_string(is.h) + "x" + std::to_string(is.w));
  const std::size_t oh = is.h / 2;
  const std::size_t ow = is.w / 2;
  Pooled<T> result{TensorT<T>(Shape{is.n, is.c, oh, ow}), std::vector<std::uint32_t>(is.n * is.c * oh * ow)};
  std::size_t k = 0;
  for (std::size_t n = 0; n < is.n; ++n) {
    for (std::size_t c = 0; c < is.c; ++c) {
      const T* in = input.plane(n, c);
      T* out = result.output.plane(n, c);
      for (std::size_t y = 0; y < oh; ++y) {
        for (std::size_t x = 0; x < ow; ++x, ++k) {
          const std::size_t base = 2 * y * is.w + 2 * x;
          const std::size_t cand[4] = {base, base + 1, base + is.w, base + is.w + 1};
          std::size_t best = cand[0];
          for (int i = 1; i < 4; ++i) {
            if (in[cand[i]] > in[best]) best = cand[i];
          }
          out[y * ow + x] = in[best];
          result.argmax[k] = static_cast<std::uint32_t>(best);
        }
      }
    }
  }
  return result;
}

template <class T>
TensorT<T> max_pool2d_backward(const TensorT<T>& grad_output, std::span<const std::uint32_t> argmax,
                               const Shape& input_shape) {
  const Shape& gs = grad_output.shape();
  require(gs.n == input_shape.n && gs.c == input_shape.c && gs.h * 2 == input_shape.h &&
              gs.w * 2 == input_shape.w && argmax.size() == gs.numel(),
          ErrorKind::shape, "max_pool2d_backward: grad " + gs.str() + " incompatible with input " + input_shape.str());
  TensorT<T> grad_input(input_shape);
  std::size_t k = 0;
  for (std::size_t n = 0; n < gs.n; ++n) {
    for (std::size_t c = 0; c < gs.c; ++c) {
      const T* go = grad_output.plane(n, c);
      T* gi = grad_input.plane(n, c);
      for (std::size_t i = 0; i < gs.plane(); ++i, ++k) gi[argmax[k]] += go[i];
    }
  }
  return grad_input;
}

namespace {

struct AxisTap {
  std::size_t i0, i1;
  double frac;
};

std::vector<AxisTap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<AxisTap> taps(out);
  const double scale = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t o = 0; o < out; ++o) {
    double src = (static_cast<double>(o) + 0.5) * scale - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    const auto i0 = static_cast<std::size_t>(std::floor(src));
    taps[o] = {i0, std::min(i0 + 1, in - 1), src - static_cast<double>(i0)};
  }
  return taps;
}

}  // namespace

template <class T>
TensorT<T> bilinear_upsample(const TensorT<T>& input, std::size_t out_h, std::size_t out_w) {
  const Shape& is = input.shape();
  require(out_h >= 1 && out_w >= 1, ErrorKind::shape, "bilinear_upsample: output extent must be positive");
  require(is.h >= 1 && is.w >= 1, ErrorKind::shape, "bilinear_upsample: empty input plane");
  const auto ty = bilinear_taps(is.h, out_h);
  const auto tx = bilinear_taps(is.w, out_w);
  TensorT<T> out(Shape{is.n, is.c, out_h, out_w});
  for (std::size_t n = 0; n < is.n; ++n) {
    for (std::size_t c = 0; c < is.c; ++c) {
      const T* in = input.plane(n, c);
      T* o = out.plane(n, c);
      for (std::size_t y = 0; y < out_h; ++y) {
        const T fy = static_cast<T>(ty[y].frac);
        const T* r0 = in + ty[y].i0 * is.w;
        const T* r1 = in + ty[y].i1 * is.w;
        for (std::size_t x = 0; x < out_w; ++x) {
          const T fx = static_cast<T>(tx[x].frac);
          const T top = r0[tx[x].i0] + fx * (r0[tx[x].i1] - r0[tx[x].i0]);
          const T bot = r1[tx[x].i0] + fx * (r1[tx[x].i1] - r1[tx[x].i0]);
          o[y * out_w + x] = top + fy * (bot - top);
        }
      }
    }
  }
  return out;
}

template <class T>
TensorT<T> bilinear_upsample_backward(const TensorT<T>& grad_output, const Shape& input_shape) {
  const Shape& gs = grad_output.shape();
  require(gs.n == input_shape.n && gs.c == input_shape.c, ErrorKind::shape,
          "bilinear_upsample_backward: grad " + gs.str() + " incompatible with input " + input_shape.str());
  const auto ty = bilinear_taps(input_shape.h, gs.h);
  const auto tx = bilinear_taps(input_shape.w, gs.w);
  TensorT<T> grad_input(input_shape);
  for (std::size_t n = 0; n < gs.n; ++n) {
    for (std::size_t c = 0; c < gs.c; ++c) {
      const T* go = grad_output.plane(n, c);
      T* gi = grad_input.plane(n, c);
      for (std::size_t y = 0; y < gs.h; ++y) {
        const T fy = static_cast<T>(ty[y].frac);
        T* r0 = gi + ty[y].i0 * input_shape.w;
        T* r1 = gi + ty[y].i1 * input_shape.w;
        for (std::size_t x = 0; x < gs.w; ++x) {
          const T g = go[y * gs.w + x];
          const T fx = static_cast<T>(tx[x].frac);
          const T top = g * (T{1} - fy);
          const T bot = g * fy;
          r0[tx[x].i0] += top * (T{1} - fx);
          r0[tx[x].i1] += top * fx;
          r1[tx[x].i0] += bot * (T{1} - fx);
          r1[tx[x].i1] += bot * fx;
        }
      }
    }
  }
  return grad_input;
}

template <class T>
TensorT<T> relu(const TensorT<T>& x) {
  TensorT<T> y(x.shape());
  const T* src = x.ptr();
  T* dst = y.ptr();
  for (std::size_t i = 0; i < x.size(); ++i) dst[i] = src[i] > T{0} ? src[i] : T{0};
  return y;
}

template <class T>
TensorT<T> relu_backward(const TensorT<T>& grad_output, const TensorT<T>& output) {
  require(grad_output.shape() == output.shape(), ErrorKind::shape,
          "relu_backward: grad " + grad_output.shape().str() + " vs output " + output.shape().str());
  TensorT<T> g(output.shape());
  for (std::size_t i = 0; i < output.size(); ++i) g[i] = output[i] > T{0} ? grad_output[i] : T{0};
  return g;
}

template <class T>
T sigmoid_scalar(T x) {
  // Clamped so the result stays strictly inside (0, 1) at this precision.
  constexpr T lo = std::numeric_limits<T>::min();
  constexpr T hi = T{1} - std::numeric_limits<T>::epsilon() / 2;
  if (x >= T{0}) return std::min(hi, T{1} / (T{1} + std::exp(-x)));
  const T e = std::exp(x);
  return std::max(lo, e / (T{1} + e));
}

template <class T>
TensorT<T> sigmoid(const TensorT<T>& x) {
  TensorT<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = sigmoid_scalar(x[i]);
  return y;
}

template <class T>
TensorT<T> add(const TensorT<T>& a, const TensorT<T>& b) {
  require(a.shape() == b.shape(), ErrorKind::shape, "add: shape " + a.shape().str() + " vs " + b.shape().str());
  TensorT<T> y(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] + b[i];
  return y;
}

template <class T>
void add_inplace(TensorT<T>& acc, const TensorT<T>& b) {
  require(acc.shape() == b.shape(), ErrorKind::shape,
          "add_inplace: shape " + acc.shape().str() + " vs " + b.shape().str());
  T* dst = acc.ptr();
  const T* src = b.ptr();
  for (std::size_t i = 0; i < acc.size(); ++i) dst[i] += src[i];
}

template <class T>
TensorT<T> mul(const TensorT<T>& a, const TensorT<T>& b) {
  require(a.shape() == b.shape(), ErrorKind::shape, "mul: shape " + a.shape().str() + " vs " + b.shape().str());
  TensorT<T> y(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) y[i] = a[i] * b[i];
  return y;
}

template <class T>
TensorT<T> scale_by_channel(const TensorT<T>& x, std::span<const T> factors) {
  const Shape& s = x.shape();
  require(factors.size() == s.c || factors.size() == s.n * s.c, ErrorKind::shape,
          "scale_by_channel: factor length " + std::to_string(factors.size()) + " for shape " + s.str());
  const bool per_item = factors.size() == s.n * s.c && s.n != 1;
  TensorT<T> y(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const T f = factors[per_item ? n * s.c + c : c];
      const T* src = x.plane(n, c);
      T* dst = y.plane(n, c);
      for (std::size_t i = 0; i < s.plane(); ++i) dst[i] = src[i] * f;
    }
  }
  return y;
}

template <class T>
std::vector<T> global_avg_pool(const TensorT<T>& x) {
  const Shape& s = x.shape();
  require(s.plane() >= 1, ErrorKind::shape, "global_avg_pool: empty spatial plane");
  std::vector<T> out(s.n * s.c);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (std::size_t c = 0; c < s.c; ++c) {
      const T* p = x.plane(n, c);
      double sum = 0.0;
      for (std::size_t i = 0; i < s.plane(); ++i) sum += static_cast<double>(p[i]);
      out[n * s.c + c] = static_cast<T>(sum / static_cast<double>(s.plane()));
    }
  }
  return out;
}

template <class T>
TensorT<T> concat_channels(const TensorT<T>& a, const TensorT<T>& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  require(sa.n == sb.n, ErrorKind::shape, "concat_channels: batch " + sa.str() + " vs " + sb.str());
  require(sa.h == sb.h && sa.w == sb.w, ErrorKind::shape,
          "concat_channels: spatial extent " + sa.str() + " vs " + sb.str());
  TensorT<T> y(Shape{sa.n, sa.c + sb.c, sa.h, sa.w});
  const std::size_t pa = sa.c * sa.plane();
  const std::size_t pb = sb.c * sb.plane();
  for (std::size_t n = 0; n < sa.n; ++n) {
    T* dst = y.ptr() + n * (pa + pb);
    if (pa != 0) std::memcpy(dst, a.ptr() + n * pa, pa * sizeof(T));
    if (pb != 0) std::memcpy(dst + pa, b.ptr() + n * pb, pb * sizeof(T));
  }
  return y;
}

template <class T>
TensorT<T> slice_channels(const TensorT<T>& x, std::size_t begin, std::size_t count) {
  const Shape& s = x.shape();
  require(begin + count <= s.c, ErrorKind::shape,
          "slice_channels: range [" + std::to_string(begin) + ", " + std::to_string(begin + count) +
              ") out of " + std::to_string(s.c) + " channels");
  TensorT<T> y(Shape{s.n, count, s.h, s.w});
  const std::size_t chunk = count * s.plane();
  for (std::size_t n = 0; n < s.n; ++n) {
    if (chunk != 0) std::memcpy(y.ptr() + n * chunk, x.plane(n, begin), chunk * sizeof(T));
  }
  return y;
}

#define LRNET_INSTANTIATE_KERNELS(T)                                                                        \
  template TensorT<T> conv2d(const TensorT<T>&, const TensorT<T>&, std::span<const T>, ConvParams);       \
  template void conv2d_backward(const TensorT<T>&, const TensorT<T>&, const TensorT<T>&, ConvParams,       \
                                TensorT<T>*, std::span<T>, std::span<T>);                                 \
  template Pooled<T> max_pool2d(const TensorT<T>&);                                                       \
  template TensorT<T> max_pool2d_backward(const TensorT<T>&, std::span<const std::uint32_t>, const Shape&); \
  template TensorT<T> bilinear_upsample(const TensorT<T>&, std::size_t, std::size_t);                     \
  template TensorT<T> bilinear_upsample_backward(const TensorT<T>&, const Shape&);                        \
  template TensorT<T> relu(const TensorT<T>&);                                                            \
  template TensorT<T> relu_backward(const TensorT<T>&, const TensorT<T>&);                                \
  template T sigmoid_scalar(T);                                                                           \
  template TensorT<T> sigmoid(const TensorT<T>&);                                                         \
  template TensorT<T> add(const TensorT<T>&, const TensorT<T>&);                                          \
  template void add_inplace(TensorT<T>&, const TensorT<T>&);                                              \
  template TensorT<T> mul(const TensorT<T>&, const TensorT<T>&);                                          \
  template TensorT<T> scale_by_channel(const TensorT<T>&, std::span<const T>);                            \
  template std::vector<T> global_avg_pool(const TensorT<T>&);                                             \
  template TensorT<T> concat_channels(const TensorT<T>&, const TensorT<T>&);                              \
  template TensorT<T> slice_channels(const TensorT<T>&, std::size_t, std::size_t);

LRNET_INSTANTIATE_KERNELS(float)
LRNET_INSTANTIATE_KERNELS(double)

#undef LRNET_INSTANTIATE_KERNELS

}  // namespace lrnet
