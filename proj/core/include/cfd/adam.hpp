#pragma once

#include <vector>

#include "cfd/autograd.hpp"
#include "cfd/train_config.hpp"

namespace cfd {

// Adam with decoupled weight decay. Moments are kept per parameter in the
// store's creation order; decay is skipped for bias, gain and normalization
// parameters.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(const ag::ParameterStore& store);

  // One update from the gradients currently held by the parameters.
  // Throws (naming the parameter) if a gradient is non-finite.
  void step(ag::ParameterStore& store, const TrainConfig& cfg);

  int64_t steps_taken() const { return step_count_; }

  static bool decays(const std::string& param_name);

 private:
  int64_t step_count_ = 0;
  std::vector<Tensor> first_moment_;
  std::vector<Tensor> second_moment_;
};

}  // namespace cfd
