#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lrnet/data.hpp"

namespace lrnet {

struct Component {
  std::vector<std::pair<std::size_t, std::size_t>> pixels;  // (y, x)
  std::uint64_t sum_y = 0, sum_x = 0;

  std::size_t area() const noexcept { return pixels.size(); }
  double centroid_y() const { return static_cast<double>(sum_y) / static_cast<double>(area()); }
  double centroid_x() const { return static_cast<double>(sum_x) / static_cast<double>(area()); }
};

/// 8-connected components in row-major order of their first pixel.
std::vector<Component> label_components(const Mask& mask);

inline constexpr double kMatchDistance = 3.0;
inline constexpr double kFaLimit = 1e-4;

struct PdFa {
  double pd = 100;  // percent
  double fa = 0;    // unmatched predicted pixels / all pixels
  std::uint64_t matched = 0, gt_targets = 0, false_pixels = 0, pixels = 0;
};

/// Target-level detection rate and false-alarm rate with one-to-one nearest-first
/// centroid matching (distance <= 3 px). Vacuous Pd is 100.
PdFa pd_fa(const std::vector<Mask>& pred, const std::vector<Mask>& gt);

/// Dataset-accumulated 100 * TP / (TP + FP + FN); 100 when both are empty everywhere.
double iou(const std::vector<Mask>& pred, const std::vector<Mask>& gt);

inline constexpr double kParamBase = 2.225;  // millions
inline constexpr double kFlopBase = 12.56;   // GFLOPs

struct Score {
  double s_p = 0, s_e = 0, s_pe = 0;
};

/// iou and pd in percent, params in millions, flops in GFLOPs.
Score score(double iou_percent, double pd_percent, double params_m, double flops_g);

struct EvalReport {
  double iou = 0, pd = 0, fa = 0;
  std::uint64_t params = 0, flops = 0;
  Score score;
  bool valid = false;

  std::string record() const;
  std::string table() const;
};

EvalReport evaluate(const std::vector<Mask>& pred, const std::vector<Mask>& gt, std::uint64_t params,
                    std::uint64_t flops);

}  // namespace lrnet
