#pragma once

#include <string>

#include "cfd/encoder.hpp"
#include "cfd/train_config.hpp"

namespace cfd {

// Run configuration for the command-line driver, read from a small
// TOML-style key/value file ([section] headers, `key = value` lines, string /
// number / boolean values). The full schema is validated before any compute:
// unknown sections or keys, type errors and missing required keys all fail
// parsing.
struct RunConfig {
  // [paths] — presence of individual entries is validated per command
  std::string detect_data;
  std::string span_data;
  std::string checkpoint_dir = "checkpoints";
  std::string report_dir = "reports";

  // [model]
  ModelConfig model;

  // [vocab]
  int vocab_min_freq = 2;
  int vocab_max_size = 8192;

  // [train] — `epochs` is filled per stage from the two entries below
  TrainConfig train;
  int epochs_stage1 = 50;
  int epochs_stage2 = 100;
  double split_ratio = 0.9;
  double threshold = 0.5;
};

RunConfig parse_run_config(const std::string& path);

}  // namespace cfd
