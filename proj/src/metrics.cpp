#include "lrnet/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <tuple>

namespace lrnet {

std::vector<Component> label_components(const Mask& mask) {
  check_binary(mask);
  std::vector<Component> out;
  std::vector<std::uint8_t> seen(mask.size(), 0);
  std::vector<std::pair<std::size_t, std::size_t>> stack;
  for (std::size_t y0 = 0; y0 < mask.h; ++y0) {
    for (std::size_t x0 = 0; x0 < mask.w; ++x0) {
      if (!mask.at(y0, x0) || seen[y0 * mask.w + x0]) continue;
      Component c;
      seen[y0 * mask.w + x0] = 1;
      stack.assign(1, {y0, x0});
      while (!stack.empty()) {
        const auto [y, x] = stack.back();
        stack.pop_back();
        c.pixels.emplace_back(y, x);
        c.sum_y += y;
        c.sum_x += x;
        for (int dy = -1; dy <= 1; ++dy) {
          for (int dx = -1; dx <= 1; ++dx) {
            const long ny = static_cast<long>(y) + dy, nx = static_cast<long>(x) + dx;
            if (ny < 0 || nx < 0 || ny >= static_cast<long>(mask.h) || nx >= static_cast<long>(mask.w)) continue;
            const std::size_t i = static_cast<std::size_t>(ny) * mask.w + static_cast<std::size_t>(nx);
            if (mask.v[i] && !seen[i]) {
              seen[i] = 1;
              stack.emplace_back(ny, nx);
            }
          }
        }
      }
      std::sort(c.pixels.begin(), c.pixels.end());
      out.push_back(std::move(c));
    }
  }
  return out;
}

namespace {

void check_pairs(const std::vector<Mask>& pred, const std::vector<Mask>& gt) {
  require(pred.size() == gt.size(), ErrorKind::shape,
          "metric inputs differ in count: " + std::to_string(pred.size()) + " predictions, " +
              std::to_string(gt.size()) + " ground truths");
  for (std::size_t i = 0; i < pred.size(); ++i) {
    require(pred[i].h == gt[i].h && pred[i].w == gt[i].w, ErrorKind::shape,
            "mask pair " + std::to_string(i) + " differs in extent");
  }
}

// Squared centroid distance as an exact fraction num / den.
struct Dist2 {
  __int128 num;
  __int128 den;
};

Dist2 centroid_distance2(const Component& a, const Component& b) {
  const __int128 na = static_cast<__int128>(a.area()), nb = static_cast<__int128>(b.area());
  const __int128 dy = static_cast<__int128>(a.sum_y) * nb - static_cast<__int128>(b.sum_y) * na;
  const __int128 dx = static_cast<__int128>(a.sum_x) * nb - static_cast<__int128>(b.sum_x) * na;
  return {dy * dy + dx * dx, na * na * nb * nb};
}

// The eight flips/quarter turns of an h x w frame. Output (y, x) reads source pixel
// src(t, y, x); turns 1 and 3 swap the extents.
struct Orientation {
  int turns = 0;   // counter-clockwise quarter turns
  bool mirror = false;

  std::pair<std::size_t, std::size_t> extent(std::size_t h, std::size_t w) const {
    return turns % 2 ? std::pair{w, h} : std::pair{h, w};
  }
  std::size_t src(std::size_t y, std::size_t x, std::size_t h, std::size_t w) const {
    if (mirror) x = extent(h, w).second - 1 - x;
    switch (turns) {
      case 1: return x * w + (w - 1 - y);
      case 2: return (h - 1 - y) * w + (w - 1 - x);
      case 3: return (h - 1 - x) * w + y;
      default: return y * w + x;
    }
  }
};

// Lexicographic order of (extent, gt pixels, pred pixels) seen through orientation a vs b.
int compare_oriented(const Mask& gt, const Mask& pred, Orientation a, Orientation b) {
  const auto ea = a.extent(gt.h, gt.w), eb = b.extent(gt.h, gt.w);
  if (ea != eb) return ea < eb ? -1 : 1;
  for (const Mask* m : {&gt, &pred}) {
    for (std::size_t y = 0; y < ea.first; ++y) {
      for (std::size_t x = 0; x < ea.second; ++x) {
        const auto va = m->v[a.src(y, x, gt.h, gt.w)], vb = m->v[b.src(y, x, gt.h, gt.w)];
        if (va != vb) return va < vb ? -1 : 1;
      }
    }
  }
  return 0;
}

Mask reorient(const Mask& m, Orientation o) {
  const auto [h, w] = o.extent(m.h, m.w);
  Mask out(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) out.at(y, x) = m.v[o.src(y, x, m.h, m.w)];
  return out;
}

// Matching ties are broken by component order, which depends on orientation.
// Matching in the canonical (smallest) orientation of the pair makes the result
// invariant under flips and rotations applied to both masks.
Orientation canonical_orientation(const Mask& gt, const Mask& pred) {
  Orientation best;
  for (int t = 0; t < 4; ++t) {
    for (bool mirror : {false, true}) {
      const Orientation o{t, mirror};
      if (compare_oriented(gt, pred, o, best) < 0) best = o;
    }
  }
  return best;
}

}  // namespace

PdFa pd_fa(const std::vector<Mask>& pred, const std::vector<Mask>& gt) {
  check_pairs(pred, gt);
  PdFa r;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const Orientation o = canonical_orientation(gt[i], pred[i]);
    const bool upright = o.turns == 0 && !o.mirror;
    const auto pc = label_components(upright ? pred[i] : reorient(pred[i], o));
    const auto gc = label_components(upright ? gt[i] : reorient(gt[i], o));
    r.pixels += pred[i].size();
    r.gt_targets += gc.size();

    struct Candidate {
      long double d2;
      std::size_t g, p;
    };
    std::vector<Candidate> cands;
    for (std::size_t g = 0; g < gc.size(); ++g) {
      for (std::size_t p = 0; p < pc.size(); ++p) {
        const Dist2 d = centroid_distance2(gc[g], pc[p]);
        const auto limit = static_cast<__int128>(kMatchDistance * kMatchDistance);
        if (d.num <= limit * d.den) {
          cands.push_back({static_cast<long double>(d.num) / static_cast<long double>(d.den), g, p});
        }
      }
    }
    std::sort(cands.begin(), cands.end(),
              [](const Candidate& a, const Candidate& b) { return std::tie(a.d2, a.g, a.p) < std::tie(b.d2, b.g, b.p); });
    std::vector<bool> g_used(gc.size(), false), p_used(pc.size(), false);
    for (const auto& c : cands) {
      if (g_used[c.g] || p_used[c.p]) continue;
      g_used[c.g] = p_used[c.p] = true;
      ++r.matched;
    }
    for (std::size_t p = 0; p < pc.size(); ++p) {
      if (!p_used[p]) r.false_pixels += pc[p].area();
    }
  }
  r.pd = r.gt_targets == 0 ? 100.0 : 100.0 * static_cast<double>(r.matched) / static_cast<double>(r.gt_targets);
  r.fa = r.pixels == 0 ? 0.0 : static_cast<double>(r.false_pixels) / static_cast<double>(r.pixels);
  return r;
}

double iou(const std::vector<Mask>& pred, const std::vector<Mask>& gt) {
  check_pairs(pred, gt);
  std::uint64_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    check_binary(pred[i]);
    check_binary(gt[i]);
    for (std::size_t k = 0; k < pred[i].size(); ++k) {
      const bool p = pred[i].v[k] != 0, g = gt[i].v[k] != 0;
      inter += p && g;
      uni += p || g;
    }
  }
  return uni == 0 ? 100.0 : 100.0 * static_cast<double>(inter) / static_cast<double>(uni);
}

Score score(double iou_percent, double pd_percent, double params_m, double flops_g) {
  for (double v : {iou_percent, pd_percent, params_m, flops_g}) {
    require(std::isfinite(v) && v >= 0, ErrorKind::config, "score inputs must be finite and non-negative");
  }
  Score s;
  s.s_p = 0.5 * iou_percent + 0.5 * pd_percent;
  s.s_e = 100.0 * (1.0 - (params_m / kParamBase + flops_g / kFlopBase) / 2.0);
  s.s_pe = 0.5 * s.s_p + 0.5 * s.s_e;
  return s;
}

EvalReport evaluate(const std::vector<Mask>& pred, const std::vector<Mask>& gt, std::uint64_t params,
                    std::uint64_t flops) {
  EvalReport r;
  r.iou = iou(pred, gt);
  const PdFa d = pd_fa(pred, gt);
  r.pd = d.pd;
  r.fa = d.fa;
  r.params = params;
  r.flops = flops;
  r.score = score(r.iou, r.pd, static_cast<double>(params) / 1e6, static_cast<double>(flops) / 1e9);
  r.valid = r.fa < kFaLimit;
  return r;
}

std::string EvalReport::record() const {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "iou=%.6f pd=%.6f fa=%.9g params=%llu flops=%llu s_p=%.6f s_e=%.6f s_pe=%.6f valid=%s", iou, pd, fa,
                static_cast<unsigned long long>(params), static_cast<unsigned long long>(flops), score.s_p,
                score.s_e, score.s_pe, valid ? "true" : "false");
  return buf;
}

std::string EvalReport::table() const {
  char buf[1024];
  std::snprintf(buf, sizeof buf,
                "  IoU (%%)      %10.2f\n"
                "  Pd (%%)       %10.2f\n"
                "  Fa           %10.3e\n"
                "  Params (M)   %10.4f\n"
                "  FLOPs (G)    %10.4f\n"
                "  S_p          %10.2f\n"
                "  S_e          %10.2f\n"
                "  S_pe         %10.2f\n"
                "  Valid        %10s\n",
                iou, pd, fa, static_cast<double>(params) / 1e6, static_cast<double>(flops) / 1e9, score.s_p,
                score.s_e, score.s_pe, valid ? "yes" : "no");
  return buf;
}

}  // namespace lrnet
