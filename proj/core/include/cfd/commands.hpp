#pragma once

#include <cstdint>
#include <optional>
#include <string>

namespace cfd {

// Command implementations behind the CLI. Each returns a process exit code
// (0 on success) and reports failures on stderr; they are plain functions so
// tests can drive the exact code paths the binary runs.

struct TrainOptions {
  std::string task;  // "detect" | "spans"
  std::string config_path;
  std::string from_checkpoint;  // stage-1 checkpoint for task=spans
  bool cold_start = false;
  std::optional<uint64_t> seed;  // overrides the config seed
  std::string out_dir;           // overrides checkpoint/report dirs
};
int run_train(const TrainOptions& options);

struct EvalOptions {
  std::string task;  // "detect" | "spans"
  std::string checkpoint_path;
  std::string data_path;
  std::string out_path;  // optional JSON report destination
  double threshold = 0.5;
};
int run_eval(const EvalOptions& options);

struct PredictOptions {
  std::string task;  // "detect" | "spans"
  std::string checkpoint_path;
  std::string input_path;
  std::string output_path;
  double threshold = 0.5;
};
int run_predict(const PredictOptions& options);

struct AnalyzeOptions {
  std::string checkpoint_path;
  std::string input_path;
  std::string out_dir;
};
int run_analyze(const AnalyzeOptions& options);

}  // namespace cfd
