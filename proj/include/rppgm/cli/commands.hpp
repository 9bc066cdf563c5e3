#pragma once

#include <filesystem>
#include <optional>

#include "rppgm/cli/config.hpp"

namespace rppgm::cli {

// Each command writes the resolved config to <out>/config.json first.

// diagnostics.csv and checkpoints/ under cfg.out; resumes from `resume` when given.
trainer::TrainState cmd_train(const RunConfig& cfg, const std::optional<std::filesystem::path>& resume = {});

extern const char* const kSummaryHeader;

// One run directory per (h, sn) cell, h outer, plus summary.csv. A failing
// cell gets a status of numeric_error or error and the sweep moves on.
// Returns 0 when every cell finished, else 3 if any cell hit a numeric
// explosion, else 2.
int cmd_sweep(const RunConfig& cfg);

// landscape.csv (u, w, value) around the checkpoint's policy. The value is the
// oracle value (Monte-Carlo rollouts when no oracle is configured), negated.
void cmd_landscape(const RunConfig& cfg, const std::filesystem::path& checkpoint);

// diag.csv (h, v_single, v_batch, b_t) for the checkpoint's state, one row per
// unroll length in cfg.diag_h. b_t is nan without an oracle.
void cmd_diag(const RunConfig& cfg, const std::filesystem::path& checkpoint);

// Command-line entry point; returns the process exit status.
int run(int argc, char** argv);

} // namespace rppgm::cli
