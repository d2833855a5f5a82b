#include "cfd/model.hpp"

namespace cfd {

CfdModel::CfdModel(const ModelConfig& cfg, Stage stage, uint64_t init_seed)
    : cfg_(cfg), stage_(stage) {
  cfg_.validate();
  Rng init_rng(init_seed);
  encoder_ = std::make_unique<TransformerEncoder>(cfg_, store_, init_rng);
  fusion_ = std::make_unique<FusionNet>(cfg_, store_, init_rng);
  if (stage_ == Stage::kStage1) {
    classifier_ = std::make_unique<ClassifierHead>(cfg_, store_, init_rng);
  } else {
    regressor_ = std::make_unique<RegressorHead>(cfg_, store_, init_rng);
  }
}

const ClassifierHead& CfdModel::classifier() const {
  check(classifier_ != nullptr, "model: no classification head attached (stage 2 model)");
  return *classifier_;
}

const RegressorHead& CfdModel::regressor() const {
  check(regressor_ != nullptr, "model: no regression head attached (stage 1 model)");
  return *regressor_;
}

std::vector<ag::NodePtr> CfdModel::feature_batch(
    const std::vector<const EncodedSequence*>& batch, Mode mode, Rng* dropout_rng) {
  check(!batch.empty(), "model: empty batch");

  std::vector<ag::NodePtr> pooled;
  std::vector<ag::NodePtr> attention;
  pooled.reserve(batch.size());
  attention.reserve(batch.size());
  for (const EncodedSequence* seq : batch) {
    EncoderGraph graph = encoder_->build(seq->ids, seq->true_len, mode, dropout_rng);
    auto [emb, att] = TransformerEncoder::last3_nodes(graph);
    pooled.push_back(fusion_->pool_node(emb, seq->true_len));
    attention.push_back(ag::pad_grid(att, cfg_.max_len));
  }
  std::vector<ag::NodePtr> attn_emb = fusion_->attention_embed_batch(attention, mode, dropout_rng);

  std::vector<ag::NodePtr> features;
  features.reserve(batch.size());
  for (size_t i = 0; i < batch.size(); ++i) {
    features.push_back(fusion_->fuse_node(pooled[i], attn_emb[i], mode, dropout_rng));
  }
  return features;
}

ag::NodePtr CfdModel::prob_node(ag::NodePtr feature) const {
  return classifier().prob_node(std::move(feature));
}

ag::NodePtr CfdModel::quad_node(ag::NodePtr feature) const {
  return regressor().quad_node(std::move(feature));
}

double CfdModel::predict_probability(const EncodedSequence& seq) {
  auto features = feature_batch({&seq}, Mode::kEval, nullptr);
  return classifier().prob_node(features[0])->value[0];
}

NormalizedSpanQuad CfdModel::predict_quad(const EncodedSequence& seq) {
  auto features = feature_batch({&seq}, Mode::kEval, nullptr);
  const Tensor out = regressor().quad_node(features[0])->value;
  return NormalizedSpanQuad{out.at(0, 0), out.at(0, 1), out.at(0, 2), out.at(0, 3)};
}

EncoderOutput CfdModel::encode_eval(const EncodedSequence& seq) const {
  return encoder_->encode(seq.ids, seq.true_len, Mode::kEval, nullptr);
}

uint64_t CfdModel::base_digest() const {
  return ag::digest(store_, [](const std::string& name) { return name.rfind("head.", 0) != 0; });
}

void CfdModel::load_tensors(const Checkpoint& ckpt, bool include_head) {
  for (const auto& param : store_.params()) {
    const bool is_head = param->name.rfind("head.", 0) == 0;
    if (is_head && !include_head) continue;
    auto it = ckpt.tensors.find(param->name);
    if (is_head && it == ckpt.tensors.end()) continue;  // different head in donor
    check(it != ckpt.tensors.end(), "checkpoint: missing tensor " + param->name);
    check(it->second.dims() == param->value.dims(),
          "checkpoint: shape mismatch for " + param->name + ": expected " +
              param->value.shape_str() + ", found " + it->second.shape_str());
    param->value = it->second;
  }
  for (const auto& [name, buf] : store_.buffers()) {
    auto it = ckpt.tensors.find(name);
    check(it != ckpt.tensors.end(), "checkpoint: missing buffer " + name);
    check(it->second.dims() == buf.dims(), "checkpoint: shape mismatch for buffer " + name);
    store_.buffer(name) = it->second;
  }
}

Checkpoint CfdModel::to_checkpoint(const TrainConfig& tcfg, const Vocab& vocab) const {
  Checkpoint ckpt;
  ckpt.model = cfg_;
  ckpt.train = tcfg;
  ckpt.stage = stage_tag(stage_);
  ckpt.vocab_tokens = vocab.tokens();
  for (const auto& param : store_.params()) ckpt.tensors[param->name] = param->value;
  for (const auto& [name, buf] : store_.buffers()) ckpt.tensors[name] = buf;
  return ckpt;
}

}  // namespace cfd
