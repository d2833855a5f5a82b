#include <benchmark/benchmark.h>

#include "cfd/corpus.hpp"
#include "cfd/metrics.hpp"
#include "cfd/model.hpp"
#include "cfd/spans.hpp"

namespace {

cfd::ModelConfig bench_config() {
  cfd::ModelConfig cfg;
  cfg.num_layers = 3;
  cfg.num_heads = 2;
  cfg.model_dim = 32;
  cfg.ffn_dim = 64;
  cfg.max_len = 32;
  cfg.dropout = 0.0;
  cfg.attention_embed_dim = 32;
  cfg.feature_dim = 32;
  cfg.vocab_size = 64;
  return cfg;
}

cfd::EncodedSequence bench_sequence(const cfd::ModelConfig& cfg) {
  cfd::EncodedSequence seq;
  seq.ids.assign(static_cast<size_t>(cfg.max_len), cfd::Vocab::kPadId);
  seq.ids[0] = cfd::Vocab::kClsId;
  for (int i = 1; i < 24; ++i) seq.ids[static_cast<size_t>(i)] = 3 + i % 60;
  seq.true_len = 24;
  return seq;
}

void BM_EncoderForward(benchmark::State& state) {
  const auto cfg = bench_config();
  cfd::CfdModel model(cfg, cfd::Stage::kStage1, 7);
  const auto seq = bench_sequence(cfg);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.encode_eval(seq));
  }
}
BENCHMARK(BM_EncoderForward);

void BM_FullFeatureForward(benchmark::State& state) {
  const auto cfg = bench_config();
  cfd::CfdModel model(cfg, cfd::Stage::kStage1, 7);
  const auto seq = bench_sequence(cfg);
  for (auto _ : state) {
    benchmark::DoNotOptimize(model.predict_probability(seq));
  }
}
BENCHMARK(BM_FullFeatureForward);

void BM_Tokenize(benchmark::State& state) {
  const std::string text =
      "If I had 10 pharmacists who worked with me, I could reach 100 people more "
      "effectively, and the clinic wouldn't close.";
  for (auto _ : state) {
    benchmark::DoNotOptimize(cfd::tokenize(text));
  }
}
BENCHMARK(BM_Tokenize);

void BM_SpanCodecRoundTrip(benchmark::State& state) {
  const cfd::SpanQuad quad = cfd::SpanQuad::with_consequent(3, 41, 45, 97);
  for (auto _ : state) {
    benchmark::DoNotOptimize(cfd::denormalize(cfd::normalize(quad, 120), 120));
  }
}
BENCHMARK(BM_SpanCodecRoundTrip);

void BM_SpanMetrics(benchmark::State& state) {
  std::vector<cfd::SpanPair> pairs;
  for (int i = 0; i < 64; ++i) {
    pairs.push_back(cfd::SpanPair{cfd::SpanQuad::with_consequent(0, 20 + i % 7, 30, 50),
                                  cfd::SpanQuad::with_consequent(5, 25, 33, 60), 80});
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(cfd::span_prf(pairs));
  }
}
BENCHMARK(BM_SpanMetrics);

}  // namespace

BENCHMARK_MAIN();
