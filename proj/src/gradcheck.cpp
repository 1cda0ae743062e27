#include "lrnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lrnet/layers.hpp"
#include "lrnet/loss.hpp"
#include "lrnet/model.hpp"

namespace lrnet {

GradCheckResult grad_check(const std::string& name, const std::function<double()>& objective,
                           std::vector<GradProbe> probes, double tolerance, const GradCheckSettings& settings,
                           Rng& rng) {
  GradCheckResult r;
  r.name = name;
  r.tolerance = tolerance;
  const double h = settings.eps;
  const double f0 = objective();
  for (GradProbe& p : probes) {
    require(p.analytic.size() == p.values.size(), ErrorKind::shape,
            "grad_check: analytic gradient of '" + p.name + "' has the wrong length");
    std::vector<std::size_t> idx(p.values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    if (idx.size() > settings.per_tensor) {
      rng.shuffle(idx);
      idx.resize(settings.per_tensor);
      std::sort(idx.begin(), idx.end());
    }
    for (std::size_t i : idx) {
      const double orig = p.values[i];
      p.values[i] = orig + h;
      const double fp = objective();
      p.values[i] = orig - h;
      const double fm = objective();
      p.values[i] = orig;

      const double n = (fp - fm) / (2 * h);
      const double a = p.analytic[i];
      const double diff = std::abs(a - n);
      const double rel = diff / std::max({std::abs(a), std::abs(n), settings.floor});
      ++r.probes;
      if (rel >= tolerance) {
        const double fwd = (fp - f0) / h;
        const double bwd = (f0 - fm) / h;
        const double split = std::abs(fwd - bwd);
        if (split >= diff && std::min(std::abs(a - fwd), std::abs(a - bwd)) <= 0.5 * split) {
          ++r.excluded;
          continue;
        }
      }
      if (rel > r.max_rel_error || r.worst.empty()) {
        r.max_rel_error = std::max(r.max_rel_error, rel);
        r.worst = p.name + "[" + std::to_string(i) + "]";
      }
    }
  }
  r.pass = r.max_rel_error < tolerance &&
           static_cast<double>(r.excluded) <= settings.max_excluded * static_cast<double>(r.probes);
  return r;
}

namespace {

using Visitor = std::function<void(const std::string&, Tensor64&, bool)>;
using VisitFn = std::function<void(const Visitor&)>;

bool ends_with(const std::string& s, const char* suffix) {
  const std::string_view sv(suffix);
  return s.size() >= sv.size() && s.compare(s.size() - sv.size(), sv.size(), sv) == 0;
}

// Generic values away from the neutral initialization so every branch contributes.
Visitor randomizer(Rng& rng) {
  return [&rng](const std::string& name, Tensor64& t, bool) {
    for (double& v : t.data()) {
      if (ends_with(name, ".gamma") || ends_with(name, ".running_var")) {
        v = rng.uniform(0.5, 1.5);
      } else if (ends_with(name, ".beta") || ends_with(name, ".running_mean") || ends_with(name, ".bias")) {
        v = rng.uniform(-0.5, 0.5);
      } else if (ends_with(name, ".kernel")) {
        v = rng.uniform(-1.0, 1.0);
      } else {
        const Shape& s = t.shape();
        v = rng.normal() * std::sqrt(2.0 / static_cast<double>(std::max<std::size_t>(1, s.c * s.h * s.w)));
      }
    }
  };
}

Tensor64 random_tensor(Shape s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor64 t(s);
  for (double& v : t.data()) v = rng.uniform(lo, hi);
  return t;
}

double dot(const Tensor64& a, const Tensor64& b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

struct Check {
  std::vector<GradProbe> probes;
  std::function<double()> objective;
};

void add_params(Check& c, const VisitFn& visit, bool corrupt) {
  visit([&](const std::string& name, Tensor64& t, bool trainable) {
    if (!trainable) return;
    std::vector<double> g(t.grad().begin(), t.grad().end());
    if (corrupt) {
      for (double& v : g) v *= 1.01;
    }
    c.probes.push_back({name, t.data(), std::move(g)});
  });
}

void add_input(Check& c, const std::string& name, Tensor64& x, const Tensor64& dx, bool corrupt) {
  std::vector<double> g(dx.data().begin(), dx.data().end());
  if (corrupt) {
    for (double& v : g) v *= 1.01;
  }
  c.probes.push_back({name, x.data(), std::move(g)});
}

void zero_grads(const VisitFn& visit) {
  visit([](const std::string&, Tensor64& t, bool trainable) {
    if (trainable) t.zero_grad();
  });
}

// Single-input layer: objective = sum(r * forward(x)).
template <class Fwd, class Bwd>
GradCheckResult check_unary(const std::string& name, const VisitFn& visit, Fwd forward, Bwd backward, Shape in,
                            double tol, Rng& rng, const GradSuiteOptions& opt) {
  if (visit) visit(randomizer(rng));
  Tensor64 x = random_tensor(in, rng);
  const Tensor64 y = forward(x);
  Tensor64 r = random_tensor(y.shape(), rng);
  for (double& v : r.data()) v /= std::sqrt(static_cast<double>(y.size()));
  if (visit) zero_grads(visit);
  const Tensor64 dx = backward(r);
  Check c;
  if (visit) add_params(c, visit, opt.corrupt_backward);
  add_input(c, "input", x, dx, opt.corrupt_backward);
  c.objective = [&] { return dot(forward(x), r); };
  return grad_check(name, c.objective, std::move(c.probes), tol, opt.settings, rng);
}

template <class Layer>
VisitFn visitor_of(Layer& layer) {
  return [&layer](const Visitor& f) { layer.visit(f); };
}

template <class Layer>
GradCheckResult check_layer(const std::string& name, Layer& layer, Shape in, Mode mode, double tol, Rng& rng,
                            const GradSuiteOptions& opt) {
  return check_unary(
      name, visitor_of(layer), [&](const Tensor64& x) { return layer.forward(x, mode); },
      [&](const Tensor64& dy) { return layer.backward(dy); }, in, tol, rng, opt);
}

GradCheckResult check_fusion(const std::string& name, bool attention, Rng& rng, const GradSuiteOptions& opt) {
  FusionModule<double> fusion("fuse", 4, 8, attention, 3);
  const VisitFn visit = visitor_of(fusion);
  visit(randomizer(rng));
  Tensor64 low = random_tensor({2, 4, 8, 8}, rng);
  Tensor64 high = random_tensor({2, 8, 4, 4}, rng);
  const Tensor64 y = fusion.forward(low, high, Mode::train);
  Tensor64 r = random_tensor(y.shape(), rng);
  for (double& v : r.data()) v /= std::sqrt(static_cast<double>(y.size()));
  zero_grads(visit);
  auto [d_low, d_high] = fusion.backward(r);
  Check c;
  add_params(c, visit, opt.corrupt_backward);
  add_input(c, "low", low, d_low, opt.corrupt_backward);
  add_input(c, "high", high, d_high, opt.corrupt_backward);
  c.objective = [&] { return dot(fusion.forward(low, high, Mode::train), r); };
  return grad_check(name, c.objective, std::move(c.probes), kLayerTolerance, opt.settings, rng);
}

Tensor64 random_targets(Shape s, Rng& rng, Tensor64* weights) {
  Mask m(s.h, s.w, 0);
  Tensor64 t(s);
  *weights = Tensor64(s);
  for (std::size_t n = 0; n < s.n; ++n) {
    for (auto& v : m.v) v = rng.bernoulli(0.2) ? 1 : 0;
    const Grid<float> w = edge_weight_map(m);
    for (std::size_t i = 0; i < m.size(); ++i) {
      t.plane(n, 0)[i] = m.v[i];
      weights->plane(n, 0)[i] = w.v[i];
    }
  }
  return t;
}

GradCheckResult check_loss(Rng& rng, const GradSuiteOptions& opt) {
  const Shape s{2, 1, 6, 7};
  Tensor64 logits = random_tensor(s, rng, -4.0, 4.0);
  Tensor64 weights;
  const Tensor64 target = random_targets(s, rng, &weights);
  Check c;
  add_input(c, "logits", logits, ee_loss_grad(logits, target, weights), opt.corrupt_backward);
  c.objective = [&] { return ee_loss(logits, target, weights); };
  GradCheckSettings settings = opt.settings;
  settings.per_tensor = s.numel();
  // Smooth everywhere; a wider step keeps summation round-off well under the 1e-6 bar.
  settings.eps = 1e-4;
  return grad_check("ee_loss", c.objective, std::move(c.probes), kLossTolerance, settings, rng);
}

GradCheckResult check_model(const std::string& name, const ModelConfig& config, std::size_t batch, Mode mode,
                            Rng& rng, const GradSuiteOptions& opt) {
  LrNet<double> model(config);
  const VisitFn visit = visitor_of(model);
  visit(randomizer(rng));
  const auto w = static_cast<std::size_t>(config.window);
  Tensor64 image = random_tensor({batch, 1, w, w}, rng, 0.0, 1.0);
  Tensor64 weights;
  const Tensor64 target = random_targets(image.shape(), rng, &weights);
  const Tensor64 logits = model.forward(image, mode);
  model.zero_grad();
  const Tensor64 d_image = model.backward(ee_loss_grad(logits, target, weights));
  Check c;
  add_params(c, visit, opt.corrupt_backward);
  add_input(c, "image", image, d_image, opt.corrupt_backward);
  c.objective = [&] { return ee_loss(model.forward(image, mode), target, weights); };
  return grad_check(name, c.objective, std::move(c.probes), kModelTolerance, opt.settings, rng);
}

}  // namespace

std::vector<GradCheckResult> run_grad_suite(const GradSuiteOptions& opt,
                                            const std::function<void(const GradCheckResult&)>& on_result) {
  std::vector<GradCheckResult> results;
  auto record = [&](GradCheckResult r, std::uint64_t seed) {
    r.name += " seed=" + std::to_string(seed);
    if (on_result) on_result(r);
    results.push_back(std::move(r));
  };

  ModelConfig model_config;
  model_config.window = opt.model_window;

  for (std::uint64_t seed = 0; seed < opt.seeds; ++seed) {
    const Rng root = Rng(opt.base_seed).derive(seed);
    std::uint64_t stream = 0;
    auto next = [&] { return root.derive(stream++); };
    {
      Rng rng = next();
      BatchNorm<double> bn("bn", 3);
      record(check_layer("batchnorm.train", bn, {2, 3, 5, 4}, Mode::train, kLayerTolerance, rng, opt), seed);
    }
    {
      Rng rng = next();
      BatchNorm<double> bn("bn", 3);
      record(check_layer("batchnorm.infer", bn, {2, 3, 5, 4}, Mode::infer, kLayerTolerance, rng, opt), seed);
    }
    {
      Rng rng = next();
      DsConvBlock<double> ds("ds", 3, 4, 1);
      record(check_layer("ds_block.stride1", ds, {2, 3, 6, 6}, Mode::train, kLayerTolerance, rng, opt), seed);
    }
    {
      Rng rng = next();
      DsConvBlock<double> ds("ds", 3, 4, 2);
      record(check_layer("ds_block.stride2", ds, {2, 3, 6, 6}, Mode::train, kLayerTolerance, rng, opt), seed);
    }
    {
      Rng rng = next();
      DsConvBlock<double> ds("ds", 3, 4, 2);
      record(check_layer("ds_block.infer", ds, {1, 3, 6, 6}, Mode::infer, kLayerTolerance, rng, opt), seed);
    }
    {
      Rng rng = next();
      EcaLayer<double> eca("eca", 3);
      record(check_layer("eca", eca, {2, 5, 4, 4}, Mode::train, kLayerTolerance, rng, opt), seed);
    }
    {
      Rng rng = next();
      Pointwise<double> pw("pw", 3, 4);
      record(check_layer("pointwise", pw, {2, 3, 4, 4}, Mode::train, kLayerTolerance, rng, opt), seed);
    }
    {
      Rng rng = next();
      MaxPool<double> pool;
      record(check_unary(
                 "maxpool", VisitFn{}, [&](const Tensor64& x) { return pool.forward(x, Mode::train); },
                 [&](const Tensor64& dy) { return pool.backward(dy); }, {2, 3, 6, 6}, kLayerTolerance, rng, opt),
             seed);
    }
    {
      Rng rng = next();
      Upsample<double> up;
      record(check_unary(
                 "upsample", VisitFn{}, [&](const Tensor64& x) { return up.forward(x, 6, 8, Mode::train); },
                 [&](const Tensor64& dy) { return up.backward(dy); }, {2, 3, 3, 4}, kLayerTolerance, rng, opt),
             seed);
    }
    {
      Rng rng = next();
      EncoderStage<double> stage("stage", 4, 8, true, 3);
      record(check_layer("lfea", stage, {1, 4, 8, 8}, Mode::train, kLayerTolerance, rng, opt), seed);
    }
    {
      Rng rng = next();
      EncoderStage<double> stage("stage", 4, 8, false, 3);
      record(check_layer("encoder.ds", stage, {2, 4, 8, 8}, Mode::train, kLayerTolerance, rng, opt), seed);
    }
    {
      Rng rng = next();
      RftModule<double> rft("rft", 4, 3);
      record(check_layer("rft", rft, {2, 4, 6, 6}, Mode::train, kLayerTolerance, rng, opt), seed);
    }
    {
      Rng rng = next();
      record(check_fusion("sbam", true, rng, opt), seed);
    }
    {
      Rng rng = next();
      record(check_fusion("fpn", false, rng, opt), seed);
    }
    {
      Rng rng = next();
      record(check_loss(rng, opt), seed);
    }
    {
      Rng rng = next();
      record(check_model("lrnet.infer", model_config, 1, Mode::infer, rng, opt), seed);
    }
    {
      Rng rng = next();
      record(check_model("lrnet.train", model_config, 2, Mode::train, rng, opt), seed);
    }
  }
  return results;
}

}  // namespace lrnet
