#pragma once

#include "cfd/autograd.hpp"
#include "cfd/encoder.hpp"
#include "cfd/spans.hpp"
#include "cfd/tensor.hpp"

namespace cfd {

// Binary classification head: one linear unit plus sigmoid over the shared
// feature embedding.
class ClassifierHead {
 public:
  ClassifierHead(const ModelConfig& cfg, ag::ParameterStore& store, Rng& init_rng);

  ag::NodePtr prob_node(ag::NodePtr feature) const;
  double classify(const Tensor& feature) const;

  static int decide(double probability, double threshold = 0.5) {
    return probability >= threshold ? 1 : 0;
  }

 private:
  int feature_dim_;
  ag::NodePtr w_, b_;
};

// Span regression head: four linear outputs through a final ReLU. Emits raw
// nonnegative reals; rounding, clamping and absence decoding live in the
// span codec.
class RegressorHead {
 public:
  RegressorHead(const ModelConfig& cfg, ag::ParameterStore& store, Rng& init_rng);

  ag::NodePtr quad_node(ag::NodePtr feature) const;
  NormalizedSpanQuad regress(const Tensor& feature) const;

 private:
  int feature_dim_;
  ag::NodePtr w_, b_;
};

}  // namespace cfd
