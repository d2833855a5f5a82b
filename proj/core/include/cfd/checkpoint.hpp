#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cfd/encoder.hpp"
#include "cfd/tensor.hpp"
#include "cfd/train_config.hpp"

namespace cfd {

// Serialized model state: every named parameter and buffer, both configs,
// the vocabulary, the training-stage tag and the dev-metric history. Stored
// as a little-endian binary container with an explicit format version;
// loading validates the version and all tensor shapes against the config.
struct Checkpoint {
  static constexpr uint32_t kFormatVersion = 1;

  ModelConfig model;
  TrainConfig train;
  std::string stage;  // "stage1" | "stage2"
  std::vector<std::string> vocab_tokens;
  std::vector<double> metric_history;
  int best_epoch = 0;
  std::map<std::string, Tensor> tensors;

  // Digest over everything that is not head state; must survive the
  // stage-1 -> stage-2 transfer bit-exactly.
  uint64_t base_digest() const;

  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

}  // namespace cfd
