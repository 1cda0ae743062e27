#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lrnet/layers.hpp"
#include "lrnet/optim.hpp"

namespace lrnet {

/// Architecture description. Fully determines every parameter name and shape.
struct ModelConfig {
  std::vector<int> stage_channels{4, 8, 16, 32, 64};
  double channel_multiplier = 1.0;  // one of 0.5, 1, 2, 4
  int window = 256;                 // training crop / inference tile size
  bool use_lfea = true;
  bool use_lfd = true;
  bool use_rft = true;
  bool use_sbam = true;
  int eca_k = 3;

  std::size_t stages() const noexcept { return stage_channels.size(); }
  /// Stage widths after the multiplier (at least one channel each).
  std::vector<std::size_t> channels() const;
  /// Input channels of each encoder stage, including the concatenated LFD maps.
  std::vector<std::size_t> stage_inputs() const;
  /// Throws a config error when an invariant is violated.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

/// Named float tensors: trainable parameters plus batch-norm running statistics.
struct WeightStore {
  std::map<std::string, Tensor> tensors;

  bool operator==(const WeightStore& other) const;
};

// Closed-form resource accounting. FLOPs are 2 x multiply-accumulates over
// convolutions (including the 1-D ECA convolution); pooling, resizing,
// normalization and activations are not counted.
std::uint64_t ds_block_params(std::uint64_t in_channels, std::uint64_t out_channels);
std::uint64_t conv_flops(std::uint64_t in_channels, std::uint64_t out_channels, std::uint64_t kernel_area,
                         std::uint64_t groups, std::uint64_t out_h, std::uint64_t out_w);
std::uint64_t count_params(const ModelConfig& config);
std::uint64_t count_flops(const ModelConfig& config, std::size_t input_h, std::size_t input_w);

/// Max-pools stage-1 features (level - 2) times so they match the input extent of stage `level` (1-based).
template <class T>
TensorT<T> lfd_inject(const TensorT<T>& stage1_out, int level);

/// One encoder stage. With LFEA: a stride-2 DS branch plus a stride-1 DS branch followed by
/// 2x2 max pooling, summed and re-weighted by ECA. Without LFEA: a single stride-2 DS block.
template <class T>
class EncoderStage {
 public:
  EncoderStage() = default;
  EncoderStage(const std::string& name, std::size_t in_channels, std::size_t out_channels, bool lfea, int eca_k);

  TensorT<T> forward(const TensorT<T>& x, Mode mode);
  TensorT<T> backward(const TensorT<T>& grad_output);
  TensorT<T> predict(const TensorT<T>& x) const;

  template <class F>
  void visit(F&& f) {
    branch_a_.visit(f);
    if (lfea_) {
      branch_b_.visit(f);
      eca_.visit(f);
    }
  }

  bool lfea() const noexcept { return lfea_; }
  DsConvBlock<T>& branch_a() noexcept { return branch_a_; }
  DsConvBlock<T>& branch_b() noexcept { return branch_b_; }
  EcaLayer<T>& eca() noexcept { return eca_; }

 private:
  void check_input(const TensorT<T>& x) const;

  bool lfea_ = true;
  DsConvBlock<T> branch_a_;
  DsConvBlock<T> branch_b_;
  MaxPool<T> pool_;
  EcaLayer<T> eca_;
};

/// Refined feature transfer: stride-1 DS block followed by ECA.
template <class T>
class RftModule {
 public:
  RftModule() = default;
  RftModule(const std::string& name, std::size_t channels, int eca_k);

  TensorT<T> forward(const TensorT<T>& x, Mode mode);
  TensorT<T> backward(const TensorT<T>& grad_output);
  TensorT<T> predict(const TensorT<T>& x) const;

  template <class F>
  void visit(F&& f) {
    ds_.visit(f);
    eca_.visit(f);
  }

  DsConvBlock<T>& ds() noexcept { return ds_; }
  EcaLayer<T>& eca() noexcept { return eca_; }

 private:
  DsConvBlock<T> ds_;
  EcaLayer<T> eca_;
};

/// Decoder fusion of a low-level map with the half-resolution high-level map.
///
/// SBAM:  y = eca(low + sigmoid(attn(low)) * up(proj(high)))
/// FPN:   y = eca(low + up(proj(high)))
/// proj and attn are biased 1x1 convolutions; up is bilinear x2.
template <class T>
class FusionModule {
 public:
  FusionModule() = default;
  FusionModule(const std::string& name, std::size_t low_channels, std::size_t high_channels, bool attention,
               int eca_k);

  TensorT<T> forward(const TensorT<T>& low, const TensorT<T>& high, Mode mode);
  /// Returns (dL/dlow, dL/dhigh).
  std::pair<TensorT<T>, TensorT<T>> backward(const TensorT<T>& grad_output);
  TensorT<T> predict(const TensorT<T>& low, const TensorT<T>& high) const;

  /// The fused map before the trailing ECA (exposed for tests).
  TensorT<T> predict_pre_eca(const TensorT<T>& low, const TensorT<T>& high) const;

  template <class F>
  void visit(F&& f) {
    proj_.visit(f);
    if (attention_) attn_.visit(f);
    eca_.visit(f);
  }

  bool attention() const noexcept { return attention_; }
  Pointwise<T>& proj() noexcept { return proj_; }
  Pointwise<T>& attn() noexcept { return attn_; }
  EcaLayer<T>& eca() noexcept { return eca_; }

 private:
  void check_inputs(const TensorT<T>& low, const TensorT<T>& high) const;

  bool attention_ = true;
  Pointwise<T> proj_;
  Pointwise<T> attn_;
  Upsample<T> up_;
  EcaLayer<T> eca_;
  bool cached_ = false;
  TensorT<T> upsampled_, gate_;
};

/// The full network: encoder stages with LFD injection, RFT skips, fusion decoder and a
/// bilinear x2 + 1x1 prediction head. forward/predict return logits; probabilities are
/// sigmoid(logits).
template <class T>
class LrNet {
 public:
  explicit LrNet(const ModelConfig& config);

  const ModelConfig& config() const noexcept { return config_; }

  /// Fan-in scaled Gaussian kernels, unit/zero batch norm, zero ECA kernels, zero biases.
  void init(std::uint64_t seed);

  TensorT<T> forward(const TensorT<T>& image, Mode mode);
  TensorT<T> backward(const TensorT<T>& grad_logits);
  TensorT<T> predict_logits(const TensorT<T>& image) const;
  TensorT<T> predict(const TensorT<T>& image) const;

  /// Encoder outputs out1..outN in inference mode.
  std::vector<TensorT<T>> encode(const TensorT<T>& image) const;

  template <class F>
  void visit(F&& f) {
    for (auto& s : stages_) s.visit(f);
    for (auto& r : rft_) r.visit(f);
    for (auto& fu : fusions_) fu.visit(f);
    head_.visit(f);
  }

  std::vector<ParamRef<T>> parameters();
  void zero_grad();
  std::uint64_t parameter_count();

  WeightStore to_store() const;
  /// Replaces every tensor; the store must contain exactly this config's names and shapes.
  void load_store(const WeightStore& store);

  EncoderStage<T>& stage(std::size_t i) { return stages_.at(i); }
  RftModule<T>& rft(std::size_t i) { return rft_.at(i); }
  FusionModule<T>& fusion(std::size_t i) { return fusions_.at(i); }
  Pointwise<T>& head() { return head_; }

 private:
  template <class Self, class Step>
  static TensorT<T> run(Self& self, const TensorT<T>& image, Step&& step, std::vector<TensorT<T>>* encoder_out);
  void check_image(const TensorT<T>& image) const;

  ModelConfig config_;
  std::vector<std::size_t> channels_;
  std::vector<EncoderStage<T>> stages_;
  std::vector<MaxPool<T>> lfd_pools_;
  std::vector<RftModule<T>> rft_;
  std::vector<FusionModule<T>> fusions_;
  Upsample<T> head_up_;
  Pointwise<T> head_;
  bool cached_ = false;
  Shape image_shape_;
};

/// Expected (name -> shape) map for a configuration.
std::map<std::string, Shape> expected_layout(const ModelConfig& config);

}  // namespace lrnet
