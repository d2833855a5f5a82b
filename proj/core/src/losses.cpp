#include "cfd/losses.hpp"

#include <algorithm>
#include <cmath>

namespace cfd {

double bce_loss(double probability, int label) {
  check(label == 0 || label == 1, "bce_loss: label must be 0 or 1");
  const double p = std::clamp(probability, kBceEps, 1.0 - kBceEps);
  return label == 1 ? -std::log(p) : -std::log(1.0 - p);
}

ag::NodePtr bce_loss_node(ag::NodePtr probability, int label) {
  return ag::bce(std::move(probability), label, kBceEps);
}

Tensor quad_to_tensor(const NormalizedSpanQuad& quad) {
  return Tensor::row({quad.antecedent_start, quad.antecedent_end, quad.consequent_start,
                      quad.consequent_end});
}

double smooth_l1_loss(const NormalizedSpanQuad& pred, const NormalizedSpanQuad& target) {
  const Tensor p = quad_to_tensor(pred);
  const Tensor t = quad_to_tensor(target);
  double total = 0.0;
  for (int i = 0; i < 4; ++i) {
    const double x = p.at(0, i) - t.at(0, i);
    check(std::isfinite(x), "smooth_l1_loss: non-finite residual");
    const double ax = std::fabs(x);
    total += ax < 1.0 ? 0.5 * x * x : ax - 0.5;
  }
  return total / 4.0;
}

ag::NodePtr smooth_l1_loss_node(ag::NodePtr pred, const NormalizedSpanQuad& target) {
  return ag::smooth_l1(std::move(pred), quad_to_tensor(target));
}

}  // namespace cfd
