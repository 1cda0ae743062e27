#include "lrnet/train.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "lrnet/loss.hpp"
#include "lrnet/optim.hpp"
#include "lrnet/weights_io.hpp"

namespace lrnet {

namespace fs = std::filesystem;

void TrainConfig::validate(const ModelConfig& model) const {
  require(batch_size >= 1, ErrorKind::config, "batch size must be at least 1");
  require(lr > 0 && std::isfinite(lr), ErrorKind::config, "learning rate must be positive");
  require(crop == static_cast<std::size_t>(model.window), ErrorKind::config,
          "crop size " + std::to_string(crop) + " must equal the model window " + std::to_string(model.window));
  require(val_fraction >= 0 && val_fraction < 1, ErrorKind::config, "validation fraction must lie in [0, 1)");
}

std::string format_epoch(const EpochStats& e) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "epoch=%zu train_loss=%.9g val_loss=%.9g seconds=%.3f", e.epoch, e.train_loss,
                e.val_loss, e.seconds);
  return buf;
}

std::size_t validation_count(std::size_t dataset_size, double fraction) {
  if (dataset_size < 5 || fraction <= 0) return 0;
  const auto n = static_cast<std::size_t>(std::lround(fraction * static_cast<double>(dataset_size)));
  return std::clamp<std::size_t>(n, 1, dataset_size - 1);
}

namespace {

constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kValStream = 2;
constexpr std::uint64_t kEpochStream = 1000;

struct Checkpoint {
  std::size_t epochs_done = 0;
  double best_val = std::numeric_limits<double>::infinity();
  std::size_t best_epoch = 0;
  std::vector<EpochStats> history;
};

void write_text_atomic(const fs::path& path, const std::string& text) {
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    require(static_cast<bool>(out), ErrorKind::data, "cannot write '" + tmp.string() + "'");
    out << text;
    require(static_cast<bool>(out.flush()), ErrorKind::data, "cannot write '" + tmp.string() + "'");
  }
  fs::rename(tmp, path);
}

void save_checkpoint(const fs::path& dir, const Checkpoint& ck) {
  std::ostringstream state;
  char buf[128];
  std::snprintf(buf, sizeof buf, "%.17g", ck.best_val);
  state << "epochs_done=" << ck.epochs_done << "\nbest_val=" << buf << "\nbest_epoch=" << ck.best_epoch << "\n";
  std::ostringstream log;
  for (const auto& e : ck.history) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g", e.train_loss, e.val_loss, e.seconds);
    state << "history=" << e.epoch << " " << buf << "\n";
    log << format_epoch(e) << "\n";
  }
  write_text_atomic(dir / kTrainState, state.str());
  write_text_atomic(dir / kLossLog, log.str());
}

Checkpoint load_checkpoint(const fs::path& dir) {
  std::ifstream in(dir / kTrainState);
  require(static_cast<bool>(in), ErrorKind::data, "cannot read '" + (dir / kTrainState).string() + "'");
  Checkpoint ck;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorKind::data, "malformed training state line '" + line + "'");
    const std::string key = line.substr(0, eq);
    std::istringstream value(line.substr(eq + 1));
    if (key == "epochs_done") {
      value >> ck.epochs_done;
    } else if (key == "best_val") {
      std::string s;
      value >> s;
      ck.best_val = std::stod(s);
    } else if (key == "best_epoch") {
      value >> ck.best_epoch;
    } else if (key == "history") {
      EpochStats e;
      std::string a, b, c;
      value >> e.epoch >> a >> b >> c;
      e.train_loss = std::stod(a);
      e.val_loss = std::stod(b);
      e.seconds = std::stod(c);
      ck.history.push_back(e);
    } else {
      fail(ErrorKind::data, "unknown training state key '" + key + "'");
    }
    require(!value.fail(), ErrorKind::data, "malformed training state line '" + line + "'");
  }
  return ck;
}

double validation_loss(const LrNet<float>& model, const std::vector<Sample>& crops, std::size_t batch_size) {
  double weighted = 0;
  for (std::size_t i = 0; i < crops.size(); i += batch_size) {
    const std::size_t n = std::min(batch_size, crops.size() - i);
    Batch b = make_batch(std::span<const Sample>(crops).subspan(i, n));
    const Tensor logits = model.predict_logits(b.images);
    weighted += ee_loss(logits, b.targets, b.weights) * static_cast<double>(n);
  }
  return weighted / static_cast<double>(crops.size());
}

}  // namespace

TrainResult train(const ModelConfig& model_config, const TrainConfig& config, const std::vector<Sample>& dataset,
                  const TrainOptions& options) {
  config.validate(model_config);
  require(!dataset.empty(), ErrorKind::data, "training dataset is empty");

  const Rng root(config.seed);
  const std::size_t n_val = validation_count(dataset.size(), config.val_fraction);
  const std::size_t n_train = dataset.size() - n_val;

  std::vector<Sample> val_crops;
  for (std::size_t i = n_train; i < dataset.size(); ++i) {
    Rng r = root.derive(kValStream).derive(i);
    val_crops.push_back(random_crop(dataset[i], config.crop, r));
  }

  LrNet<float> model(model_config);
  model.init(root.derive(kInitStream).next_u64());
  AdamState<float> adam;
  const AdamConfig adam_config{config.lr};
  Checkpoint ck;
  WeightStore best;

  const bool persist = !options.out_dir.empty();
  const fs::path dir(options.out_dir);
  if (persist) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    require(!ec && fs::is_directory(dir), ErrorKind::data, "cannot create output directory '" + dir.string() + "'");
  }
  if (persist && options.resume && fs::exists(dir / kTrainState)) {
    ck = load_checkpoint(dir);
    model.load_store(load_weights((dir / kLastWeights).string(), model_config));
    adam = load_adam_state((dir / kLastOptimizer).string());
    best = fs::exists(dir / kBestWeights) ? load_weights((dir / kBestWeights).string(), model_config) : model.to_store();
  } else {
    best = model.to_store();
  }

  auto params = model.parameters();
  for (std::size_t epoch = ck.epochs_done + 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng = root.derive(kEpochStream + epoch);
    std::vector<std::size_t> order(n_train);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);

    double loss_sum = 0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < n_train; start += config.batch_size, ++batch_index) {
      const std::size_t n = std::min(config.batch_size, n_train - start);
      std::vector<Sample> crops;
      crops.reserve(n);
      for (std::size_t j = 0; j < n; ++j) {
        Sample c = random_crop(dataset[order[start + j]], config.crop, rng);
        crops.push_back(augment(c, rng, config.augment));
      }
      Batch b = make_batch(crops);

      model.zero_grad();
      const Tensor logits = model.forward(b.images, Mode::train);
      const std::string where = "epoch " + std::to_string(epoch) + " batch " + std::to_string(batch_index);
      require(logits.all_finite(), ErrorKind::numeric, "training diverged at " + where + ": non-finite logits");
      const double loss = ee_loss(logits, b.targets, b.weights);
      require(std::isfinite(loss), ErrorKind::numeric, "training diverged at " + where + ": non-finite loss");
      model.backward(ee_loss_grad(logits, b.targets, b.weights));
      try {
        adam_step<float>(params, adam, adam_config);
      } catch (const Error& e) {
        fail(e.kind(), "training diverged at " + where + ": " + e.what());
      }
      loss_sum += loss * static_cast<double>(n);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(n_train);
    stats.val_loss = val_crops.empty() ? stats.train_loss : validation_loss(model, val_crops, config.batch_size);
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    ck.epochs_done = epoch;
    ck.history.push_back(stats);
    const WeightStore last = model.to_store();
    if (stats.val_loss < ck.best_val) {
      ck.best_val = stats.val_loss;
      ck.best_epoch = epoch;
      best = last;
      if (persist) save_weights(best, (dir / kBestWeights).string());
    }
    if (persist) {
      save_weights(last, (dir / kLastWeights).string());
      save_adam_state(adam, (dir / kLastOptimizer).string());
      save_checkpoint(dir, ck);
    }
    if (options.on_epoch) options.on_epoch(stats);
  }

  TrainResult result;
  result.last = model.to_store();
  result.best = std::move(best);
  result.best_epoch = ck.best_epoch;
  result.history = std::move(ck.history);
  if (persist && !fs::exists(dir / kBestWeights)) save_weights(result.best, (dir / kBestWeights).string());
  if (persist && !fs::exists(dir / kLastWeights)) save_weights(result.last, (dir / kLastWeights).string());
  return result;
}

}  // namespace lrnet
