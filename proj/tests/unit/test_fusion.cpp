#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cfd/fusion.hpp"
#include "test_support.hpp"

using namespace cfd;

namespace {

ModelConfig fusion_config() {
  ModelConfig cfg;
  cfg.num_layers = 3;
  cfg.num_heads = 2;  // conv input channels = 6
  cfg.model_dim = 8;
  cfg.ffn_dim = 16;
  cfg.max_len = 8;
  cfg.dropout = 0.0;
  cfg.attention_embed_dim = 16;
  cfg.feature_dim = 12;
  cfg.vocab_size = 16;
  return cfg;
}

Tensor random_stack(const ModelConfig& cfg, Rng& rng) {
  Tensor t({cfg.conv_in_channels(), cfg.max_len, cfg.max_len});
  for (int64_t i = 0; i < t.size(); ++i) t[i] = rng.uniform();
  return t;
}

}  // namespace

TEST_CASE("pool is the mean over unpadded rows") {
  Tensor m({2, 2});
  m.at(0, 0) = 1;
  m.at(0, 1) = 3;
  m.at(1, 0) = 3;
  m.at(1, 1) = 5;
  const Tensor p = pool(m, 2);
  CHECK(p.at(0, 0) == doctest::Approx(2.0));
  CHECK(p.at(0, 1) == doctest::Approx(4.0));

  SUBCASE("single row is the identity") {
    const Tensor q = pool(m, 1);
    CHECK(q.at(0, 0) == 1.0);
    CHECK(q.at(0, 1) == 3.0);
  }
  SUBCASE("zero matrix pools to zero") {
    const Tensor z = pool(Tensor({3, 4}), 3);
    for (int j = 0; j < 4; ++j) CHECK(z.at(0, j) == 0.0);
  }
  SUBCASE("bounds checked") {
    CHECK_THROWS(pool(m, 3));
    CHECK_THROWS(pool(m, 0));
  }
}

TEST_CASE("pool ignores padded rows and is permutation invariant") {
  Rng rng(21);
  Tensor m({6, 5});
  for (int64_t i = 0; i < m.size(); ++i) m[i] = rng.normal(0.0, 1.0);
  const int true_len = 4;
  const Tensor base = pool(m, true_len);

  SUBCASE("padded rows are irrelevant") {
    Tensor poisoned = m;
    for (int i = true_len; i < 6; ++i)
      for (int j = 0; j < 5; ++j) poisoned.at(i, j) = 1e9;
    const Tensor p = pool(poisoned, true_len);
    for (int j = 0; j < 5; ++j) CHECK(p.at(0, j) == base.at(0, j));
  }
  SUBCASE("row order is irrelevant") {
    Tensor shuffled = m;
    for (int j = 0; j < 5; ++j) {
      std::swap(shuffled.at(0, j), shuffled.at(3, j));
      std::swap(shuffled.at(1, j), shuffled.at(2, j));
    }
    const Tensor p = pool(shuffled, true_len);
    for (int j = 0; j < 5; ++j) CHECK(p.at(0, j) == doctest::Approx(base.at(0, j)).epsilon(1e-12));
  }
}

TEST_CASE("pad_attention_grid pads and truncates") {
  Tensor small({2, 3, 3});
  for (int64_t i = 0; i < small.size(); ++i) small[i] = static_cast<double>(i + 1);
  const Tensor padded = pad_attention_grid(small, 5);
  CHECK(padded.dims() == std::vector<int>{2, 5, 5});
  CHECK(padded.at(1, 2, 2) == small.at(1, 2, 2));
  CHECK(padded.at(0, 4, 4) == 0.0);
  const Tensor trimmed = pad_attention_grid(padded, 3);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) CHECK(trimmed.at(c, i, j) == small.at(c, i, j));
  CHECK_THROWS(pad_attention_grid(Tensor({2, 3, 4}), 5));  // non-square
}

TEST_CASE("attention embedding: shape, determinism, nonnegativity") {
  const ModelConfig cfg = fusion_config();
  ag::ParameterStore store;
  Rng init(22);
  FusionNet fusion(cfg, store, init);
  Rng data(23);
  const Tensor att = random_stack(cfg, data);

  const Tensor out = fusion.attention_embed(att, Mode::kEval);
  CHECK(out.dims() == std::vector<int>{1, cfg.attention_embed_dim});
  for (int64_t i = 0; i < out.size(); ++i) CHECK(out[i] >= 0.0);  // final ReLU

  const Tensor again = fusion.attention_embed(att, Mode::kEval);
  for (int64_t i = 0; i < out.size(); ++i) CHECK(out[i] == again[i]);

  SUBCASE("non-square token axes rejected") {
    CHECK_THROWS(fusion.attention_embed(Tensor({cfg.conv_in_channels(), 4, 5}), Mode::kEval));
  }
  SUBCASE("wrong channel count rejected") {
    CHECK_THROWS(fusion.attention_embed(Tensor({2, cfg.max_len, cfg.max_len}), Mode::kEval));
  }
}

TEST_CASE("layer norm example values and degenerate input") {
  Rng rng(1);
  ag::ParameterStore store;
  auto gain = store.create("g", {4}, ag::Init::kOnes, rng);
  auto bias = store.create("b", {4}, ag::Init::kZeros, rng);

  SUBCASE("closed-form check on [1,2,3,4]") {
    auto x = ag::constant(Tensor::row({1, 2, 3, 4}));
    const Tensor out = ag::layer_norm_rows(x, gain, bias, 1e-5)->value;
    CHECK(out.at(0, 0) == doctest::Approx(-1.3416).epsilon(1e-3));
    CHECK(out.at(0, 1) == doctest::Approx(-0.4472).epsilon(1e-3));
    CHECK(out.at(0, 2) == doctest::Approx(0.4472).epsilon(1e-3));
    CHECK(out.at(0, 3) == doctest::Approx(1.3416).epsilon(1e-3));
  }
  SUBCASE("constant input yields the bias vector") {
    bias->value[0] = 7.0;
    bias->value[1] = -2.0;
    auto x = ag::constant(Tensor::row({3.5, 3.5, 3.5, 3.5}));
    const Tensor out = ag::layer_norm_rows(x, gain, bias, 1e-5)->value;
    CHECK(out.at(0, 0) == doctest::Approx(7.0).epsilon(1e-9));
    CHECK(out.at(0, 1) == doctest::Approx(-2.0).epsilon(1e-9));
    CHECK(out.at(0, 2) == doctest::Approx(0.0).epsilon(1e-9));
  }
  SUBCASE("normalized output has zero mean and unit variance") {
    Rng data(2);
    for (int rep = 0; rep < 20; ++rep) {
      Tensor row({1, 4});
      for (int j = 0; j < 4; ++j) row.at(0, j) = data.normal(0.0, 3.0);
      const Tensor out = ag::layer_norm_rows(ag::constant(row), gain, bias, 1e-5)->value;
      // pre-affine values require unit gain / zero bias
      bias->value.fill(0.0);
      const Tensor pre = ag::layer_norm_rows(ag::constant(row), gain, bias, 1e-5)->value;
      double mean = 0.0, var = 0.0;
      for (int j = 0; j < 4; ++j) mean += pre.at(0, j);
      mean /= 4;
      for (int j = 0; j < 4; ++j) var += (pre.at(0, j) - mean) * (pre.at(0, j) - mean);
      var /= 4;
      CHECK(std::fabs(mean) < 1e-6);
      CHECK(var == doctest::Approx(1.0).epsilon(1e-4));
      (void)out;
    }
  }
}

TEST_CASE("fuse concatenates, normalizes and projects") {
  const ModelConfig cfg = fusion_config();
  ag::ParameterStore store;
  Rng init(24);
  FusionNet fusion(cfg, store, init);
  Rng data(25);

  Tensor pooled({1, 3 * cfg.model_dim});
  for (int64_t i = 0; i < pooled.size(); ++i) pooled[i] = data.normal(0.0, 1.0);
  Tensor attn({1, cfg.attention_embed_dim});
  for (int64_t i = 0; i < attn.size(); ++i) attn[i] = data.uniform();

  const Tensor feature = fusion.fuse(pooled, attn, Mode::kEval);
  CHECK(feature.dims() == std::vector<int>{1, cfg.feature_dim});
  CHECK(cfg.fused_width() == 3 * cfg.model_dim + cfg.attention_embed_dim);

  SUBCASE("width mismatch rejected") {
    CHECK_THROWS(fusion.fuse(Tensor({1, 7}), attn, Mode::kEval));
    CHECK_THROWS(fusion.fuse(pooled, Tensor({1, 3}), Mode::kEval));
  }
}

TEST_CASE("fusion path gradients match central finite differences") {
  const ModelConfig cfg = fusion_config();
  ag::ParameterStore store;
  Rng init(26);
  FusionNet fusion(cfg, store, init);
  Rng data(27);
  // attention input as a parameter so conv input gradients get checked too
  auto att0 = store.create("in.att0", {cfg.conv_in_channels(), cfg.max_len, cfg.max_len},
                           ag::Init::kTruncNormal, data, 0.5);
  auto att1 = store.create("in.att1", {cfg.conv_in_channels(), cfg.max_len, cfg.max_len},
                           ag::Init::kTruncNormal, data, 0.5);
  auto pooled0 = store.create("in.p0", {1, 3 * cfg.model_dim}, ag::Init::kTruncNormal, data, 1.0);
  auto pooled1 = store.create("in.p1", {1, 3 * cfg.model_dim}, ag::Init::kTruncNormal, data, 1.0);

  auto build = [&]() {
    // batch of two so batch statistics stay active in train mode
    auto embs = fusion.attention_embed_batch({att0, att1}, Mode::kTrain, nullptr);
    auto f0 = fusion.fuse_node(pooled0, embs[0], Mode::kTrain, nullptr);
    auto f1 = fusion.fuse_node(pooled1, embs[1], Mode::kTrain, nullptr);
    auto joined = ag::concat_cols(f0, f1);
    ag::NodePtr weights = ag::constant(Tensor({joined->value.dim(1), 1}, 0.31));
    return ag::matmul(ag::sigmoid(joined), weights);
  };
  const auto report = test::finite_difference_check(store, build, 1e-4);
  INFO("worst: ", report.worst_param);
  CHECK(report.max_rel_err <= 1e-4);
}
