#include "cfd/adam.hpp"

#include <cmath>

namespace cfd {

AdamOptimizer::AdamOptimizer(const ag::ParameterStore& store) {
  first_moment_.reserve(store.params().size());
  second_moment_.reserve(store.params().size());
  for (const auto& param : store.params()) {
    first_moment_.emplace_back(param->value.dims());
    second_moment_.emplace_back(param->value.dims());
  }
}

bool AdamOptimizer::decays(const std::string& param_name) {
  auto ends_with = [&](const char* suffix) {
    const size_t len = std::char_traits<char>::length(suffix);
    return param_name.size() >= len &&
           param_name.compare(param_name.size() - len, len, suffix) == 0;
  };
  return !(ends_with(".bias") || ends_with(".gain"));
}

void AdamOptimizer::step(ag::ParameterStore& store, const TrainConfig& cfg) {
  check(store.params().size() == first_moment_.size(),
        "adam: optimizer bound to a different parameter set");
  ++step_count_;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_count_));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_count_));

  for (size_t pi = 0; pi < store.params().size(); ++pi) {
    auto& param = store.params()[pi];
    if (param->grad.empty()) continue;  // parameter not touched by this graph
    Tensor& m = first_moment_[pi];
    Tensor& v = second_moment_[pi];
    Tensor& value = param->value;
    const Tensor& grad = param->grad;
    const bool decay = cfg.weight_decay > 0.0 && decays(param->name);

    for (int64_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      check(std::isfinite(g), "adam: non-finite gradient in parameter " + param->name);
      if (decay) value[i] *= 1.0 - cfg.learning_rate * cfg.weight_decay;
      m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
      v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = m[i] / bc1;
      const double v_hat = v[i] / bc2;
      value[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.adam_eps);
    }
  }
}

}  // namespace cfd
