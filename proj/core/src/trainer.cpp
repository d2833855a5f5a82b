#include "cfd/trainer.hpp"

#include <cmath>

#include "cfd/adam.hpp"
#include "cfd/heads.hpp"
#include "cfd/losses.hpp"
#include "cfd/metrics.hpp"

namespace cfd {

namespace {

// Independent deterministic streams derived from the run seed.
constexpr uint64_t kShuffleStream = 0x9E3779B97F4A7C15ULL;
constexpr uint64_t kDropoutStream = 0xC2B2AE3D27D4EB4FULL;

std::vector<std::vector<size_t>> make_batches(size_t n, int batch_size, Rng& rng) {
  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::vector<size_t>> batches;
  for (size_t start = 0; start < n; start += static_cast<size_t>(batch_size)) {
    const size_t end = std::min(n, start + static_cast<size_t>(batch_size));
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

void check_loss_finite(double loss, int epoch, size_t step) {
  if (!std::isfinite(loss)) {
    throw std::runtime_error("training diverged: non-finite loss " + std::to_string(loss) +
                             " at epoch " + std::to_string(epoch) + ", step " +
                             std::to_string(step));
  }
}

}  // namespace

double dev_binary_f1(CfdModel& model, const std::vector<DetectSample>& samples,
                     double threshold) {
  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(samples.size());
  for (const auto& s : samples) {
    const double p = model.predict_probability(s.seq);
    pairs.emplace_back(ClassifierHead::decide(p, threshold), s.label);
  }
  return binary_prf(pairs).f1;
}

double dev_smooth_l1(CfdModel& model, const std::vector<SpanSample>& samples) {
  check(!samples.empty(), "dev_smooth_l1: empty sample list");
  double total = 0.0;
  for (const auto& s : samples) {
    total += smooth_l1_loss(model.predict_quad(s.seq), s.target);
  }
  return total / static_cast<double>(samples.size());
}

TrainResult train_stage1(const std::vector<DetectSample>& train,
                         const std::vector<DetectSample>& dev, const ModelConfig& mcfg,
                         const TrainConfig& tcfg, const Vocab& vocab, double threshold) {
  check(!train.empty(), "train_stage1: empty training set");
  check(!dev.empty(), "train_stage1: empty dev set");
  tcfg.validate();

  CfdModel model(mcfg, Stage::kStage1, tcfg.seed);
  AdamOptimizer adam(model.store());
  Rng shuffle_rng(tcfg.seed ^ kShuffleStream);
  Rng dropout_rng(tcfg.seed ^ kDropoutStream);

  TrainConfig stamped = tcfg;
  stamped.early_stop_metric = "dev_f1";

  TrainResult result;
  for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    const auto batches = make_batches(train.size(), tcfg.batch_size, shuffle_rng);
    for (size_t step = 0; step < batches.size(); ++step) {
      const auto& batch = batches[step];
      std::vector<const EncodedSequence*> seqs;
      seqs.reserve(batch.size());
      for (size_t idx : batch) seqs.push_back(&train[idx].seq);
      auto features = model.feature_batch(seqs, Mode::kTrain, &dropout_rng);
      std::vector<ag::NodePtr> losses;
      losses.reserve(batch.size());
      for (size_t i = 0; i < batch.size(); ++i) {
        losses.push_back(bce_loss_node(model.prob_node(features[i]), train[batch[i]].label));
      }
      ag::NodePtr loss = ag::mean_of(losses);
      check_loss_finite(loss->value[0], epoch, step);
      loss_sum += loss->value[0] * static_cast<double>(batch.size());
      model.store().zero_grads();
      ag::backward(loss);
      adam.step(model.store(), tcfg);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    rec.dev_metric = dev_binary_f1(model, dev, threshold);
    result.epochs.push_back(rec);

    if (result.best_epoch == 0 || rec.dev_metric > result.best_metric) {
      result.best_epoch = epoch;
      result.best_metric = rec.dev_metric;
      result.best = model.to_checkpoint(stamped, vocab);
    }
  }

  result.best.best_epoch = result.best_epoch;
  for (const auto& rec : result.epochs) result.best.metric_history.push_back(rec.dev_metric);
  return result;
}

TrainResult train_stage2(const Checkpoint* stage1, const std::vector<SpanSample>& train,
                         const std::vector<SpanSample>& dev, const ModelConfig& mcfg,
                         const TrainConfig& tcfg, const Vocab& vocab) {
  check(!train.empty(), "train_stage2: empty training set");
  check(!dev.empty(), "train_stage2: empty dev set");
  tcfg.validate();

  CfdModel model(mcfg, Stage::kStage2, tcfg.seed);
  TrainResult result;
  if (stage1 != nullptr) {
    check(stage1->stage == "stage1", "train_stage2: initialization checkpoint must be stage1");
    model.load_tensors(*stage1, /*include_head=*/false);
    result.donor_base_digest = stage1->base_digest();
    result.initial_base_digest = model.base_digest();
    check(result.donor_base_digest == result.initial_base_digest,
          "train_stage2: base transfer mismatch");
  }

  AdamOptimizer adam(model.store());
  Rng shuffle_rng(tcfg.seed ^ kShuffleStream);
  Rng dropout_rng(tcfg.seed ^ kDropoutStream);

  TrainConfig stamped = tcfg;
  stamped.early_stop_metric = "dev_smooth_l1";

  for (int epoch = 1; epoch <= tcfg.epochs; ++epoch) {
    double loss_sum = 0.0;
    const auto batches = make_batches(train.size(), tcfg.batch_size, shuffle_rng);
    for (size_t step = 0; step < batches.size(); ++step) {
      const auto& batch = batches[step];
      std::vector<const EncodedSequence*> seqs;
      seqs.reserve(batch.size());
      for (size_t idx : batch) seqs.push_back(&train[idx].seq);
      auto features = model.feature_batch(seqs, Mode::kTrain, &dropout_rng);
      std::vector<ag::NodePtr> losses;
      losses.reserve(batch.size());
      for (size_t i = 0; i < batch.size(); ++i) {
        losses.push_back(
            smooth_l1_loss_node(model.quad_node(features[i]), train[batch[i]].target));
      }
      ag::NodePtr loss = ag::mean_of(losses);
      check_loss_finite(loss->value[0], epoch, step);
      loss_sum += loss->value[0] * static_cast<double>(batch.size());
      model.store().zero_grads();
      ag::backward(loss);
      adam.step(model.store(), tcfg);
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    rec.dev_metric = dev_smooth_l1(model, dev);
    result.epochs.push_back(rec);

    if (result.best_epoch == 0 || rec.dev_metric < result.best_metric) {
      result.best_epoch = epoch;
      result.best_metric = rec.dev_metric;
      result.best = model.to_checkpoint(stamped, vocab);
    }
  }

  result.best.best_epoch = result.best_epoch;
  for (const auto& rec : result.epochs) result.best.metric_history.push_back(rec.dev_metric);
  return result;
}

}  // namespace cfd
