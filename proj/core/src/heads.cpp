#include "cfd/heads.hpp"

namespace cfd {

ClassifierHead::ClassifierHead(const ModelConfig& cfg, ag::ParameterStore& store, Rng& init_rng)
    : feature_dim_(cfg.feature_dim) {
  w_ = store.create("head.cls.weight", {feature_dim_, 1}, ag::Init::kTruncNormal, init_rng);
  b_ = store.create("head.cls.bias", {1, 1}, ag::Init::kZeros, init_rng);
}

ag::NodePtr ClassifierHead::prob_node(ag::NodePtr feature) const {
  check(feature->value.rank() == 2 && feature->value.dim(0) == 1 &&
            feature->value.dim(1) == feature_dim_,
        "classify: feature width mismatch");
  return ag::sigmoid(ag::add_row(ag::matmul(feature, w_), b_));
}

double ClassifierHead::classify(const Tensor& feature) const {
  return prob_node(ag::constant(feature))->value[0];
}

RegressorHead::RegressorHead(const ModelConfig& cfg, ag::ParameterStore& store, Rng& init_rng)
    : feature_dim_(cfg.feature_dim) {
  w_ = store.create("head.reg.weight", {feature_dim_, 4}, ag::Init::kTruncNormal, init_rng);
  b_ = store.create("head.reg.bias", {1, 4}, ag::Init::kZeros, init_rng);
}

ag::NodePtr RegressorHead::quad_node(ag::NodePtr feature) const {
  check(feature->value.rank() == 2 && feature->value.dim(0) == 1 &&
            feature->value.dim(1) == feature_dim_,
        "regress: feature width mismatch");
  return ag::relu(ag::add_row(ag::matmul(feature, w_), b_));
}

NormalizedSpanQuad RegressorHead::regress(const Tensor& feature) const {
  const Tensor out = quad_node(ag::constant(feature))->value;
  return NormalizedSpanQuad{out.at(0, 0), out.at(0, 1), out.at(0, 2), out.at(0, 3)};
}

}  // namespace cfd
