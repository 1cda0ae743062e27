#include "lrnet/optim.hpp"

#include <cmath>

namespace lrnet {

template <class T>
void adam_step(std::span<const ParamRef<T>> params, AdamState<T>& state, const AdamConfig& config) {
  for (const ParamRef<T>& p : params) {
    require(p.tensor != nullptr && p.tensor->has_grad(), ErrorKind::shape,
            "adam_step: parameter '" + p.name + "' has no gradient buffer");
    for (T g : p.tensor->grad()) {
      require(std::isfinite(g), ErrorKind::numeric, "adam_step: non-finite gradient in parameter '" + p.name + "'");
    }
    auto it = state.moments.find(p.name);
    if (it != state.moments.end()) {
      require(it->second.first.size() == p.tensor->size() && it->second.second.size() == p.tensor->size(),
              ErrorKind::shape, "adam_step: optimizer state shape mismatch for '" + p.name + "'");
    }
  }

  state.step += 1;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  const T b1 = static_cast<T>(config.beta1);
  const T b2 = static_cast<T>(config.beta2);

  for (const ParamRef<T>& p : params) {
    auto& m = state.moments[p.name];
    if (m.first.empty()) {
      m.first.assign(p.tensor->size(), T{0});
      m.second.assign(p.tensor->size(), T{0});
    }
    auto values = p.tensor->data();
    auto grads = p.tensor->grad();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const T g = grads[i];
      m.first[i] = b1 * m.first[i] + (T{1} - b1) * g;
      m.second[i] = b2 * m.second[i] + (T{1} - b2) * g * g;
      const double mhat = static_cast<double>(m.first[i]) / correction1;
      const double vhat = static_cast<double>(m.second[i]) / correction2;
      values[i] = static_cast<T>(static_cast<double>(values[i]) - config.lr * mhat / (std::sqrt(vhat) + config.eps));
    }
  }
}

template void adam_step(std::span<const ParamRef<float>>, AdamState<float>&, const AdamConfig&);
template void adam_step(std::span<const ParamRef<double>>, AdamState<double>&, const AdamConfig&);

}  // namespace lrnet
