#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lrnet/data.hpp"
#include "lrnet/model.hpp"
#include "lrnet/train.hpp"

namespace lrnet {

struct RunConfig {
  std::string dataset = "data";
  std::string weights;
  std::string output = "out";
  std::string input;
  std::string pred;
  std::string gt;
  std::string split = "test";
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  double tau = 0.5;
  bool resume = false;
  ModelConfig model;
  TrainConfig train;
  SynthConfig synth;

  bool operator==(const RunConfig& other) const;
};

/// Every recognised key, in serialization order.
std::vector<std::string> config_keys();

/// Sets one key from its text form; unknown keys and malformed values are config errors.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);
std::string get_config_value(const RunConfig& config, const std::string& key);

/// Flat "key = value" lines, '#' comments, blank lines ignored. Applied on top of `config`.
void apply_config_text(RunConfig& config, const std::string& text, const std::string& origin = "config");
void apply_config_file(RunConfig& config, const std::string& path);

std::string serialize_config(const RunConfig& config);

/// Maps an --ablate name (no-lfea, no-lfd, no-rft, no-sbam) onto the model toggles.
void apply_ablation(ModelConfig& model, const std::string& name);

/// Copies seed and window into the nested configs and validates everything.
void finalize_config(RunConfig& config);

}  // namespace lrnet
