#pragma once

#include "run_config.hpp"

#include "gptree/errors.hpp"

namespace gptree::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInternal = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

int exit_code(ErrorKind kind);

/// Validates the config, runs its command and writes config.json,
/// metrics.csv and report.md (plus command-specific files) to output_dir.
void run(const RunConfig& config);

void cmd_train_base(const RunConfig& config);
void cmd_eval(const RunConfig& config);
void cmd_inspect_artifact(const RunConfig& config);
void cmd_class_sweep(const RunConfig& config);
void cmd_chain_sweep(const RunConfig& config);
void cmd_incremental(const RunConfig& config);

}  // namespace gptree::cli
