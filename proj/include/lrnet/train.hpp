#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lrnet/data.hpp"
#include "lrnet/model.hpp"

namespace lrnet {

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 10;
  double lr = 5e-4;
  std::size_t crop = 256;
  std::uint64_t seed = 0;
  AugmentConfig augment;
  double val_fraction = 0.1;  // tail of the training split held out for checkpoint selection

  void validate(const ModelConfig& model) const;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double val_loss = 0;  // equals train_loss when no validation samples exist
  double seconds = 0;

  bool operator==(const EpochStats&) const = default;
};

struct TrainOptions {
  std::string out_dir;  // empty: keep everything in memory
  bool resume = false;  // continue from out_dir/last.* when present
  std::function<void(const EpochStats&)> on_epoch;
};

struct TrainResult {
  WeightStore last;
  WeightStore best;
  std::size_t best_epoch = 0;
  std::vector<EpochStats> history;
};

/// Checkpoint file names inside TrainOptions::out_dir.
inline constexpr const char* kLastWeights = "last.lrnw";
inline constexpr const char* kBestWeights = "best.lrnw";
inline constexpr const char* kLastOptimizer = "last.adam";
inline constexpr const char* kTrainState = "train_state.txt";
inline constexpr const char* kLossLog = "loss_log.txt";

std::string format_epoch(const EpochStats& e);

/// Number of trailing samples held out for validation.
std::size_t validation_count(std::size_t dataset_size, double fraction);

TrainResult train(const ModelConfig& model_config, const TrainConfig& config, const std::vector<Sample>& dataset,
                  const TrainOptions& options = {});

}  // namespace lrnet
