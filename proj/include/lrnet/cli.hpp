#pragma once

#include <ostream>
#include <string>

#include "lrnet/config.hpp"
#include "lrnet/error.hpp"
#include "lrnet/metrics.hpp"

namespace lrnet {

/// 0 success, 1 usage/config, 2 data (including shape), 3 numeric.
int exit_code(ErrorKind kind);

// Subcommand bodies. They throw lrnet::Error; run_cli maps errors to exit codes.
void cmd_synth(const RunConfig& cfg, std::ostream& out);
void cmd_train(const RunConfig& cfg, std::ostream& out);
void cmd_infer(const RunConfig& cfg, std::ostream& out);
EvalReport cmd_eval(const RunConfig& cfg, std::ostream& out);
Score cmd_score(double iou, double pd, double params_m, double flops_g, std::ostream& out);
/// Returns true when every check passes.
bool cmd_gradcheck(std::size_t seeds, int window, bool corrupt_backward, std::ostream& out);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace lrnet
