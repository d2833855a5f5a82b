#pragma once

#include <cstdint>
#include <string>

#include "cfd/tensor.hpp"

namespace cfd {

struct TrainConfig {
  double learning_rate = 3e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  int batch_size = 16;
  int epochs = 50;
  uint64_t seed = 42;
  // Monitored dev quantity: "dev_f1" (classification) or "dev_smooth_l1"
  // (span regression); set by the stage that runs.
  std::string early_stop_metric = "dev_f1";

  void validate() const {
    check(learning_rate > 0.0, "train: learning_rate must be > 0");
    check(weight_decay >= 0.0, "train: weight_decay must be >= 0");
    check(beta1 >= 0.0 && beta1 < 1.0, "train: beta1 must be in [0, 1)");
    check(beta2 >= 0.0 && beta2 < 1.0, "train: beta2 must be in [0, 1)");
    check(adam_eps > 0.0, "train: adam_eps must be > 0");
    check(batch_size >= 1, "train: batch_size must be >= 1");
    check(epochs >= 1, "train: epochs must be >= 1");
  }
};

}  // namespace cfd
