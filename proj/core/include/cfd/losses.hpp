#pragma once

#include "cfd/autograd.hpp"
#include "cfd/spans.hpp"

namespace cfd {

inline constexpr double kBceEps = 1e-7;

// Binary cross entropy; the probability is clamped to [eps, 1-eps] before
// the logs.
double bce_loss(double probability, int label);
ag::NodePtr bce_loss_node(ag::NodePtr probability, int label);

// Smooth L1 (Huber, beta = 1) averaged over the four span coordinates.
double smooth_l1_loss(const NormalizedSpanQuad& pred, const NormalizedSpanQuad& target);
ag::NodePtr smooth_l1_loss_node(ag::NodePtr pred, const NormalizedSpanQuad& target);

Tensor quad_to_tensor(const NormalizedSpanQuad& quad);

}  // namespace cfd
