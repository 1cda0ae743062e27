#include "lrnet/model.hpp"

#include <cmath>
#include <cstring>
#include <set>

#include "lrnet/rng.hpp"

namespace lrnet {

// ---------------------------------------------------------------------------
// ModelConfig

std::vector<std::size_t> ModelConfig::channels() const {
  std::vector<std::size_t> out;
  out.reserve(stage_channels.size());
  for (int c : stage_channels) {
    const long scaled = std::lround(static_cast<double>(c) * channel_multiplier);
    out.push_back(static_cast<std::size_t>(std::max(1L, scaled)));
  }
  return out;
}

std::vector<std::size_t> ModelConfig::stage_inputs() const {
  const auto ch = channels();
  std::vector<std::size_t> in(ch.size());
  for (std::size_t l = 0; l < ch.size(); ++l) {
    if (l == 0) {
      in[l] = 1;
    } else if (l == 1 || !use_lfd) {
      in[l] = ch[l - 1];
    } else {
      in[l] = ch[l - 1] + ch[0];
    }
  }
  return in;
}

void ModelConfig::validate() const {
  const double m = channel_multiplier;
  require(m == 0.5 || m == 1.0 || m == 2.0 || m == 4.0, ErrorKind::config,
          "channel multiplier must be one of 0.5, 1, 2, 4; got " + std::to_string(m));
  require(!stage_channels.empty(), ErrorKind::config, "model needs at least one stage");
  require(stage_channels.size() <= 12, ErrorKind::config, "at most 12 stages are supported");
  for (std::size_t i = 0; i < stage_channels.size(); ++i) {
    require(stage_channels[i] >= 1, ErrorKind::config, "stage channel widths must be positive");
    if (i > 0) {
      require(stage_channels[i] > stage_channels[i - 1], ErrorKind::config,
              "stage channel widths must be strictly increasing");
    }
  }
  const long factor = 1L << stage_channels.size();
  require(window > 0 && window % factor == 0, ErrorKind::config,
          "window " + std::to_string(window) + " must be a positive multiple of " + std::to_string(factor));
  require(eca_k >= 1 && eca_k % 2 == 1, ErrorKind::config, "ECA kernel size must be odd and positive");
}

bool WeightStore::operator==(const WeightStore& other) const {
  if (tensors.size() != other.tensors.size()) return false;
  for (const auto& [name, t] : tensors) {
    auto it = other.tensors.find(name);
    if (it == other.tensors.end() || !(it->second.shape() == t.shape())) return false;
    if (t.size() != 0 && std::memcmp(t.ptr(), it->second.ptr(), t.size() * sizeof(float)) != 0) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Resource accounting

std::uint64_t ds_block_params(std::uint64_t in_channels, std::uint64_t out_channels) {
  return 9 * in_channels + in_channels * out_channels + 2 * out_channels;
}

std::uint64_t conv_flops(std::uint64_t in_channels, std::uint64_t out_channels, std::uint64_t kernel_area,
                         std::uint64_t groups, std::uint64_t out_h, std::uint64_t out_w) {
  return 2 * out_channels * (in_channels / groups) * kernel_area * out_h * out_w;
}

namespace {

std::uint64_t pointwise_params(std::uint64_t in, std::uint64_t out) { return in * out + out; }

std::uint64_t ds_flops(std::uint64_t in, std::uint64_t out, std::uint64_t oh, std::uint64_t ow) {
  return conv_flops(in, in, 9, in, oh, ow) + conv_flops(in, out, 1, 1, oh, ow);
}

std::uint64_t eca_flops(std::uint64_t channels, std::uint64_t k) { return 2 * k * channels; }

}  // namespace

std::uint64_t count_params(const ModelConfig& config) {
  const std::size_t n = config.stages();
  if (n == 0) return 0;
  const auto ch = config.channels();
  const auto in = config.stage_inputs();
  const auto k = static_cast<std::uint64_t>(config.eca_k);
  std::uint64_t total = 0;
  for (std::size_t l = 0; l < n; ++l) {
    total += config.use_lfea ? 2 * ds_block_params(in[l], ch[l]) + k : ds_block_params(in[l], ch[l]);
  }
  for (std::size_t l = 0; l + 1 < n; ++l) {
    if (config.use_rft) total += ds_block_params(ch[l], ch[l]) + k;
    total += pointwise_params(ch[l + 1], ch[l]) + k;
    if (config.use_sbam) total += pointwise_params(ch[l], ch[l]);
  }
  total += pointwise_params(ch[0], 1);
  return total;
}

std::uint64_t count_flops(const ModelConfig& config, std::size_t input_h, std::size_t input_w) {
  const std::size_t n = config.stages();
  if (n == 0) return 0;
  const auto ch = config.channels();
  const auto in = config.stage_inputs();
  const auto k = static_cast<std::uint64_t>(config.eca_k);
  std::uint64_t total = 0;
  std::vector<std::uint64_t> oh(n), ow(n);
  std::uint64_t h = input_h;
  std::uint64_t w = input_w;
  for (std::size_t l = 0; l < n; ++l) {
    oh[l] = h / 2;
    ow[l] = w / 2;
    total += ds_flops(in[l], ch[l], oh[l], ow[l]);
    if (config.use_lfea) total += ds_flops(in[l], ch[l], h, w) + eca_flops(ch[l], k);
    h = oh[l];
    w = ow[l];
  }
  for (std::size_t l = 0; l + 1 < n; ++l) {
    if (config.use_rft) total += ds_flops(ch[l], ch[l], oh[l], ow[l]) + eca_flops(ch[l], k);
    total += conv_flops(ch[l + 1], ch[l], 1, 1, oh[l + 1], ow[l + 1]) + eca_flops(ch[l], k);
    if (config.use_sbam) total += conv_flops(ch[l], ch[l], 1, 1, oh[l], ow[l]);
  }
  total += conv_flops(ch[0], 1, 1, 1, input_h, input_w);
  return total;
}

template <class T>
TensorT<T> lfd_inject(const TensorT<T>& stage1_out, int level) {
  require(level >= 2, ErrorKind::shape, "lfd_inject: level must be at least 2, got " + std::to_string(level));
  const std::size_t times = static_cast<std::size_t>(level - 2);
  const std::size_t factor = std::size_t{1} << times;
  require(stage1_out.shape().h % factor == 0 && stage1_out.shape().w % factor == 0, ErrorKind::shape,
          "lfd_inject: extent " + stage1_out.shape().str() + " not divisible by " + std::to_string(factor));
  TensorT<T> out = stage1_out;
  for (std::size_t i = 0; i < times; ++i) out = max_pool2d(out).output;
  return out;
}

// ---------------------------------------------------------------------------
// EncoderStage

template <class T>
EncoderStage<T>::EncoderStage(const std::string& name, std::size_t in_channels, std::size_t out_channels,
                              bool lfea, int eca_k)
    : lfea_(lfea),
      branch_a_(lfea ? name + ".lfea.branchA" : name + ".ds", in_channels, out_channels, 2) {
  if (lfea_) {
    branch_b_ = DsConvBlock<T>(name + ".lfea.branchB", in_channels, out_channels, 1);
    eca_ = EcaLayer<T>(name + ".lfea.eca", eca_k);
  }
}

template <class T>
void EncoderStage<T>::check_input(const TensorT<T>& x) const {
  require(x.shape().h % 2 == 0 && x.shape().w % 2 == 0, ErrorKind::shape,
          "encoder stage: odd spatial extent " + std::to_string(x.shape().h) + "x" + std::to_string(x.shape().w));
}

template <class T>
TensorT<T> EncoderStage<T>::forward(const TensorT<T>& x, Mode mode) {
  check_input(x);
  TensorT<T> a = branch_a_.forward(x, mode);
  if (!lfea_) return a;
  TensorT<T> b = pool_.forward(branch_b_.forward(x, mode), mode);
  add_inplace(a, b);
  return eca_.forward(a, mode);
}

template <class T>
TensorT<T> EncoderStage<T>::predict(const TensorT<T>& x) const {
  check_input(x);
  TensorT<T> a = branch_a_.predict(x);
  if (!lfea_) return a;
  add_inplace(a, pool_.predict(branch_b_.predict(x)));
  return eca_.predict(a);
}

template <class T>
TensorT<T> EncoderStage<T>::backward(const TensorT<T>& grad_output) {
  if (!lfea_) return branch_a_.backward(grad_output);
  TensorT<T> g = eca_.backward(grad_output);
  TensorT<T> dx = branch_a_.backward(g);
  add_inplace(dx, branch_b_.backward(pool_.backward(g)));
  return dx;
}

// ---------------------------------------------------------------------------
// RftModule

template <class T>
RftModule<T>::RftModule(const std::string& name, std::size_t channels, int eca_k)
    : ds_(name + ".ds", channels, channels, 1), eca_(name + ".eca", eca_k) {}

template <class T>
TensorT<T> RftModule<T>::forward(const TensorT<T>& x, Mode mode) {
  return eca_.forward(ds_.forward(x, mode), mode);
}

template <class T>
TensorT<T> RftModule<T>::predict(const TensorT<T>& x) const {
  return eca_.predict(ds_.predict(x));
}

template <class T>
TensorT<T> RftModule<T>::backward(const TensorT<T>& grad_output) {
  return ds_.backward(eca_.backward(grad_output));
}

// ---------------------------------------------------------------------------
// FusionModule

template <class T>
FusionModule<T>::FusionModule(const std::string& name, std::size_t low_channels, std::size_t high_channels,
                              bool attention, int eca_k)
    : attention_(attention),
      proj_(name + (attention ? ".sbam.proj" : ".fpn.proj"), high_channels, low_channels),
      eca_(name + ".eca", eca_k) {
  if (attention_) attn_ = Pointwise<T>(name + ".sbam.attn", low_channels, low_channels);
}

template <class T>
void FusionModule<T>::check_inputs(const TensorT<T>& low, const TensorT<T>& high) const {
  const Shape& l = low.shape();
  const Shape& h = high.shape();
  require(h.h * 2 == l.h && h.w * 2 == l.w, ErrorKind::shape,
          "fusion: high-level extent " + h.str() + " must be exactly half of low-level extent " + l.str());
  require(l.n == h.n, ErrorKind::shape, "fusion: batch mismatch " + l.str() + " vs " + h.str());
}

template <class T>
TensorT<T> FusionModule<T>::forward(const TensorT<T>& low, const TensorT<T>& high, Mode mode) {
  check_inputs(low, high);
  upsampled_ = up_.forward(proj_.forward(high, mode), low.shape().h, low.shape().w, mode);
  TensorT<T> fused = low;
  if (attention_) {
    gate_ = sigmoid(attn_.forward(low, mode));
    for (std::size_t i = 0; i < fused.size(); ++i) fused[i] += gate_[i] * upsampled_[i];
  } else {
    add_inplace(fused, upsampled_);
  }
  cached_ = true;
  return eca_.forward(fused, mode);
}

template <class T>
TensorT<T> FusionModule<T>::predict_pre_eca(const TensorT<T>& low, const TensorT<T>& high) const {
  check_inputs(low, high);
  TensorT<T> up = bilinear_upsample(proj_.predict(high), low.shape().h, low.shape().w);
  TensorT<T> fused = low;
  if (attention_) {
    const TensorT<T> gate = sigmoid(attn_.predict(low));
    for (std::size_t i = 0; i < fused.size(); ++i) fused[i] += gate[i] * up[i];
  } else {
    add_inplace(fused, up);
  }
  return fused;
}

template <class T>
TensorT<T> FusionModule<T>::predict(const TensorT<T>& low, const TensorT<T>& high) const {
  return eca_.predict(predict_pre_eca(low, high));
}

template <class T>
std::pair<TensorT<T>, TensorT<T>> FusionModule<T>::backward(const TensorT<T>& grad_output) {
  if (!cached_) fail_backward_before_forward("fusion");
  TensorT<T> g = eca_.backward(grad_output);
  TensorT<T> d_low = g;
  TensorT<T> d_up;
  if (attention_) {
    d_up = TensorT<T>(g.shape());
    TensorT<T> d_logit(g.shape());
    for (std::size_t i = 0; i < g.size(); ++i) {
      const T a = gate_[i];
      d_up[i] = g[i] * a;
      d_logit[i] = g[i] * upsampled_[i] * a * (T{1} - a);
    }
    add_inplace(d_low, attn_.backward(d_logit));
  } else {
    d_up = std::move(g);
  }
  TensorT<T> d_high = proj_.backward(up_.backward(d_up));
  return {std::move(d_low), std::move(d_high)};
}

// ---------------------------------------------------------------------------
// LrNet

template <class T>
LrNet<T>::LrNet(const ModelConfig& config) : config_(config) {
  config_.validate();
  channels_ = config_.channels();
  const auto inputs = config_.stage_inputs();
  const std::size_t n = channels_.size();
  for (std::size_t l = 0; l < n; ++l) {
    stages_.emplace_back("stage" + std::to_string(l + 1), inputs[l], channels_[l], config_.use_lfea, config_.eca_k);
  }
  if (config_.use_lfd && n >= 3) lfd_pools_.resize(n - 2);
  for (std::size_t l = 0; l + 1 < n; ++l) {
    if (config_.use_rft) rft_.emplace_back("rft" + std::to_string(l + 1), channels_[l], config_.eca_k);
    fusions_.emplace_back("fuse" + std::to_string(l + 1), channels_[l], channels_[l + 1], config_.use_sbam,
                          config_.eca_k);
  }
  head_ = Pointwise<T>("head", channels_[0], 1);
}

namespace {

bool ends_with(const std::string& s, const char* suffix) {
  const std::size_t len = std::strlen(suffix);
  return s.size() >= len && s.compare(s.size() - len, len, suffix) == 0;
}

}  // namespace

template <class T>
void LrNet<T>::init(std::uint64_t seed) {
  Rng rng(seed);
  visit([&](const std::string& name, TensorT<T>& t, bool) {
    if (ends_with(name, ".depthwise") || ends_with(name, ".pointwise") || ends_with(name, ".weight")) {
      const Shape& s = t.shape();
      const double std_dev = std::sqrt(2.0 / static_cast<double>(s.c * s.h * s.w));
      for (T& v : t.data()) v = static_cast<T>(rng.normal() * std_dev);
    } else if (ends_with(name, ".gamma") || ends_with(name, ".running_var")) {
      t.fill(T{1});
    } else {
      t.fill(T{0});
    }
  });
}

template <class T>
void LrNet<T>::check_image(const TensorT<T>& image) const {
  const Shape& s = image.shape();
  require(s.c == 1, ErrorKind::shape, "model input must have 1 channel, got " + std::to_string(s.c));
  const auto w = static_cast<std::size_t>(config_.window);
  require(s.h == w && s.w == w, ErrorKind::shape,
          "model input extent " + std::to_string(s.h) + "x" + std::to_string(s.w) + " does not match window " +
              std::to_string(w) + "; split larger images into window-sized tiles (sliding inference)");
}

template <class T>
template <class Self, class Step>
TensorT<T> LrNet<T>::run(Self& self, const TensorT<T>& image, Step&& step, std::vector<TensorT<T>>* encoder_out) {
  const std::size_t n = self.channels_.size();
  const bool lfd = !self.lfd_pools_.empty();
  std::vector<TensorT<T>> out(n);
  out[0] = step(self.stages_[0], image);

  // chain[k] = stage-1 features pooled k + 1 times
  std::vector<TensorT<T>> chain(self.lfd_pools_.size());
  for (std::size_t k = 0; k < chain.size(); ++k) chain[k] = step(self.lfd_pools_[k], k == 0 ? out[0] : chain[k - 1]);

  for (std::size_t l = 1; l < n; ++l) {
    if (lfd && l >= 2) {
      out[l] = step(self.stages_[l], concat_channels(out[l - 1], chain[l - 2]));
    } else {
      out[l] = step(self.stages_[l], out[l - 1]);
    }
  }

  TensorT<T> f = out[n - 1];
  for (std::size_t i = n - 1; i-- > 0;) {
    if (self.config_.use_rft) {
      f = step(self.fusions_[i], step(self.rft_[i], out[i]), f);
    } else {
      f = step(self.fusions_[i], out[i], f);
    }
  }
  TensorT<T> logits = step(self.head_, step(self.head_up_, f, image.shape().h, image.shape().w));
  if (encoder_out != nullptr) *encoder_out = std::move(out);
  return logits;
}

template <class T>
TensorT<T> LrNet<T>::forward(const TensorT<T>& image, Mode mode) {
  check_image(image);
  auto step = [mode](auto& layer, const auto&... args) { return layer.forward(args..., mode); };
  TensorT<T> logits = run(*this, image, step, nullptr);
  image_shape_ = image.shape();
  cached_ = true;
  return logits;
}

template <class T>
TensorT<T> LrNet<T>::predict_logits(const TensorT<T>& image) const {
  check_image(image);
  auto step = [](const auto& layer, const auto&... args) { return layer.predict(args...); };
  return run(*this, image, step, nullptr);
}

template <class T>
TensorT<T> LrNet<T>::predict(const TensorT<T>& image) const {
  return sigmoid(predict_logits(image));
}

template <class T>
std::vector<TensorT<T>> LrNet<T>::encode(const TensorT<T>& image) const {
  check_image(image);
  auto step = [](const auto& layer, const auto&... args) { return layer.predict(args...); };
  std::vector<TensorT<T>> out;
  run(*this, image, step, &out);
  return out;
}

template <class T>
TensorT<T> LrNet<T>::backward(const TensorT<T>& grad_logits) {
  if (!cached_) fail_backward_before_forward("lrnet");
  const std::size_t n = channels_.size();
  auto accumulate = [](TensorT<T>& acc, TensorT<T>&& g) {
    if (acc.empty()) {
      acc = std::move(g);
    } else {
      add_inplace(acc, g);
    }
  };

  TensorT<T> df = head_up_.backward(head_.backward(grad_logits));
  std::vector<TensorT<T>> d_out(n);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    auto [d_skip, d_high] = fusions_[i].backward(df);
    accumulate(d_out[i], config_.use_rft ? rft_[i].backward(d_skip) : std::move(d_skip));
    df = std::move(d_high);
  }
  accumulate(d_out[n - 1], std::move(df));

  const bool lfd = !lfd_pools_.empty();
  std::vector<TensorT<T>> d_chain(lfd_pools_.size());
  for (std::size_t l = n - 1; l >= 1; --l) {
    TensorT<T> d_in = stages_[l].backward(d_out[l]);
    if (lfd && l >= 2) {
      accumulate(d_out[l - 1], slice_channels(d_in, 0, channels_[l - 1]));
      accumulate(d_chain[l - 2], slice_channels(d_in, channels_[l - 1], channels_[0]));
    } else {
      accumulate(d_out[l - 1], std::move(d_in));
    }
  }
  for (std::size_t k = d_chain.size(); k-- > 0;) {
    TensorT<T> g = lfd_pools_[k].backward(d_chain[k]);
    accumulate(k == 0 ? d_out[0] : d_chain[k - 1], std::move(g));
  }
  return stages_[0].backward(d_out[0]);
}

template <class T>
std::vector<ParamRef<T>> LrNet<T>::parameters() {
  std::vector<ParamRef<T>> params;
  visit([&](const std::string& name, TensorT<T>& t, bool trainable) {
    if (trainable) params.push_back({name, &t});
  });
  return params;
}

template <class T>
void LrNet<T>::zero_grad() {
  visit([](const std::string&, TensorT<T>& t, bool trainable) {
    if (trainable) t.zero_grad();
  });
}

template <class T>
std::uint64_t LrNet<T>::parameter_count() {
  std::uint64_t total = 0;
  visit([&](const std::string&, TensorT<T>& t, bool trainable) {
    if (trainable) total += t.size();
  });
  return total;
}

template <class T>
WeightStore LrNet<T>::to_store() const {
  WeightStore store;
  // visit only reads here
  const_cast<LrNet&>(*this).visit([&](const std::string& name, TensorT<T>& t, bool) {
    store.tensors.emplace(name, tensor_cast<float>(t));
  });
  return store;
}

template <class T>
void LrNet<T>::load_store(const WeightStore& store) {
  std::set<std::string> seen;
  visit([&](const std::string& name, TensorT<T>& t, bool) {
    auto it = store.tensors.find(name);
    require(it != store.tensors.end(), ErrorKind::data, "weight store is missing tensor '" + name + "'");
    require(it->second.shape() == t.shape(), ErrorKind::data,
            "weight store tensor '" + name + "' has shape " + it->second.shape().str() + ", model expects " +
                t.shape().str());
    seen.insert(name);
  });
  for (const auto& [name, t] : store.tensors) {
    require(seen.count(name) == 1, ErrorKind::data, "weight store has unexpected tensor '" + name + "'");
  }
  visit([&](const std::string& name, TensorT<T>& t, bool) {
    const Tensor& src = store.tensors.at(name);
    auto dst = t.data();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src[i]);
  });
}

std::map<std::string, Shape> expected_layout(const ModelConfig& config) {
  LrNet<float> model(config);
  std::map<std::string, Shape> layout;
  model.visit([&](const std::string& name, Tensor& t, bool) { layout.emplace(name, t.shape()); });
  return layout;
}

template TensorT<float> lfd_inject(const TensorT<float>&, int);
template TensorT<double> lfd_inject(const TensorT<double>&, int);
template class EncoderStage<float>;
template class EncoderStage<double>;
template class RftModule<float>;
template class RftModule<double>;
template class FusionModule<float>;
template class FusionModule<double>;
template class LrNet<float>;
template class LrNet<double>;

}  // namespace lrnet
