#pragma once

#include <cstdint>
#include <vector>

#include "cfd/checkpoint.hpp"
#include "cfd/corpus.hpp"
#include "cfd/model.hpp"
#include "cfd/spans.hpp"
#include "cfd/train_config.hpp"

namespace cfd {

struct DetectSample {
  EncodedSequence seq;
  int label = 0;
};

struct SpanSample {
  EncodedSequence seq;
  NormalizedSpanQuad target;  // length-scaled training target
  SpanQuad gold;
  int length = 0;
};

struct EpochRecord {
  int epoch = 0;         // 1-based
  double train_loss = 0.0;  // mean per-sample loss of the epoch
  double dev_metric = 0.0;  // dev F1 (stage 1) or dev Smooth L1 (stage 2)
};

struct TrainResult {
  Checkpoint best;
  std::vector<EpochRecord> epochs;
  int best_epoch = 0;  // 1-based
  double best_metric = 0.0;
  // Stage-2 transfer bookkeeping: digest of the donor checkpoint's base
  // tensors and of this model's base right after initialization.
  uint64_t donor_base_digest = 0;
  uint64_t initial_base_digest = 0;
};

// Stage 1: trains base + classification head with binary cross entropy,
// monitoring dev binary F1; returns the best-epoch checkpoint.
TrainResult train_stage1(const std::vector<DetectSample>& train,
                         const std::vector<DetectSample>& dev, const ModelConfig& mcfg,
                         const TrainConfig& tcfg, const Vocab& vocab,
                         double threshold = 0.5);

// Stage 2: base initialized from a stage-1 checkpoint (pass nullptr for an
// explicit cold start), fresh regression head, fine-tuned end to end under
// Smooth L1; monitors dev Smooth L1 (lower is better).
TrainResult train_stage2(const Checkpoint* stage1, const std::vector<SpanSample>& train,
                         const std::vector<SpanSample>& dev, const ModelConfig& mcfg,
                         const TrainConfig& tcfg, const Vocab& vocab);

// Eval-mode dev metrics, exposed for reuse by the CLI.
double dev_binary_f1(CfdModel& model, const std::vector<DetectSample>& samples,
                     double threshold);
double dev_smooth_l1(CfdModel& model, const std::vector<SpanSample>& samples);

}  // namespace cfd
