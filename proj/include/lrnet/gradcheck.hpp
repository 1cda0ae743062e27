#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "lrnet/rng.hpp"
#include "lrnet/tensor.hpp"

namespace lrnet {

/// A tensor whose entries are perturbed, with the analytic gradient to compare against.
struct GradProbe {
  std::string name;
  std::span<double> values;
  std::vector<double> analytic;
};

struct GradCheckResult {
  std::string name;
  double tolerance = 0;
  double max_rel_error = 0;
  std::string worst;  // "tensor[index]"
  std::size_t probes = 0;
  std::size_t excluded = 0;  // probes straddling a non-differentiable point
  bool pass = false;
};

struct GradCheckSettings {
  double eps = 1e-5;
  double floor = 1e-5;          // denominator floor of the relative error
  std::size_t per_tensor = 16;  // entries sampled per probed tensor
  double max_excluded = 0.1;    // fraction of probes allowed to be excluded
};

/// Central differences of `objective` against the analytic gradients.
/// rel = |a - n| / max(|a|, |n|, floor). A failing entry is excluded as non-smooth
/// when its one-sided differences disagree by at least |a - n| and `a` matches one side,
/// which is the signature of a kink inside [x - eps, x + eps].
GradCheckResult grad_check(const std::string& name, const std::function<double()>& objective,
                           std::vector<GradProbe> probes, double tolerance, const GradCheckSettings& settings,
                           Rng& rng);

struct GradSuiteOptions {
  std::size_t seeds = 10;
  std::uint64_t base_seed = 0;
  int model_window = 32;
  bool corrupt_backward = false;  // test hook: skews every analytic gradient by 1%
  GradCheckSettings settings;
};

inline constexpr double kLayerTolerance = 1e-4;
inline constexpr double kModelTolerance = 1e-3;
inline constexpr double kLossTolerance = 1e-6;

/// Every layer type, the composed modules, the loss and the full model (64-bit).
/// One result per (check, seed).
std::vector<GradCheckResult> run_grad_suite(const GradSuiteOptions& options,
                                            const std::function<void(const GradCheckResult&)>& on_result = {});

}  // namespace lrnet
