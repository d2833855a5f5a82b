#pragma once

#include <memory>
#include <optional>
#include <vector>

#include "cfd/autograd.hpp"
#include "cfd/checkpoint.hpp"
#include "cfd/corpus.hpp"
#include "cfd/encoder.hpp"
#include "cfd/fusion.hpp"
#include "cfd/heads.hpp"
#include "cfd/spans.hpp"

namespace cfd {

enum class Stage { kStage1, kStage2 };

inline const char* stage_tag(Stage s) { return s == Stage::kStage1 ? "stage1" : "stage2"; }

// Shared base architecture (encoder + fusion) with one task head attached.
// Stage 1 carries the binary classifier, stage 2 the span regressor; the
// head swap happens by constructing a stage-2 model and transferring the
// base tensors from a stage-1 checkpoint.
class CfdModel {
 public:
  CfdModel(const ModelConfig& cfg, Stage stage, uint64_t init_seed);

  const ModelConfig& config() const { return cfg_; }
  Stage stage() const { return stage_; }
  ag::ParameterStore& store() { return store_; }
  const ag::ParameterStore& store() const { return store_; }
  TransformerEncoder& encoder() { return *encoder_; }
  FusionNet& fusion() { return *fusion_; }
  const ClassifierHead& classifier() const;
  const RegressorHead& regressor() const;

  // Builds the shared feature embedding for every sample of a mini-batch
  // (batch normalization couples the samples in train mode).
  std::vector<ag::NodePtr> feature_batch(const std::vector<const EncodedSequence*>& batch,
                                         Mode mode, Rng* dropout_rng);

  ag::NodePtr prob_node(ag::NodePtr feature) const;  // stage 1
  ag::NodePtr quad_node(ag::NodePtr feature) const;  // stage 2

  // Eval-mode conveniences (deterministic, no dropout, running statistics).
  double predict_probability(const EncodedSequence& seq);
  NormalizedSpanQuad predict_quad(const EncodedSequence& seq);
  EncoderOutput encode_eval(const EncodedSequence& seq) const;

  uint64_t base_digest() const;

  // Copies tensors from a checkpoint into this model. Base tensors are
  // always copied; head tensors only when the stages match and
  // include_head is set. Shapes are validated.
  void load_tensors(const Checkpoint& ckpt, bool include_head);
  Checkpoint to_checkpoint(const TrainConfig& tcfg, const Vocab& vocab) const;

 private:
  ModelConfig cfg_;
  Stage stage_;
  ag::ParameterStore store_;
  std::unique_ptr<TransformerEncoder> encoder_;
  std::unique_ptr<FusionNet> fusion_;
  std::unique_ptr<ClassifierHead> classifier_;
  std::unique_ptr<RegressorHead> regressor_;
};

}  // namespace cfd
