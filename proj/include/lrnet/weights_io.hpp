#pragma once

#include <cstdint>
#include <string>

#include "lrnet/model.hpp"
#include "lrnet/optim.hpp"

// Binary weight file:
//   "LRNW" | u16 version | u32 record count | records
//   record = u32 name length | name bytes | 4 x u32 extents | float32 values
// All integers and floats little-endian. Optimizer state uses the same record
// layout under magic "LRNA", with a u64 step counter after the version.

namespace lrnet {

inline constexpr std::uint16_t kWeightFormatVersion = 1;

/// Writes atomically: a temporary file is renamed over `path` once complete.
void save_weights(const WeightStore& store, const std::string& path);

/// Reads any well-formed weight file without checking it against a config.
WeightStore read_weights(const std::string& path);

/// Reads and verifies the name/shape set against `config`.
WeightStore load_weights(const std::string& path, const ModelConfig& config);

void save_adam_state(const AdamState<float>& state, const std::string& path);
AdamState<float> load_adam_state(const std::string& path);

/// Throws a data error naming the first missing, unexpected or mis-shaped tensor.
void check_layout(const WeightStore& store, const ModelConfig& config);

}  // namespace lrnet
