#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "lrnet/tensor.hpp"

namespace lrnet {

/// Non-owning handle to a named trainable tensor (value + gradient buffer).
template <class T>
struct ParamRef {
  std::string name;
  TensorT<T>* tensor = nullptr;
};

struct AdamConfig {
  double lr = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <class T>
struct AdamState {
  struct Moments {
    std::vector<T> first;
    std::vector<T> second;
  };
  std::map<std::string, Moments> moments;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update over every parameter. All gradients are
/// validated before any parameter changes; a non-finite gradient raises a
/// numeric error naming the parameter and leaves params and state untouched.
template <class T>
void adam_step(std::span<const ParamRef<T>> params, AdamState<T>& state, const AdamConfig& config);

}  // namespace lrnet
