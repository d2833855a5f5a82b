#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cfd/encoder.hpp"
#include "test_support.hpp"

using namespace cfd;

namespace {

ModelConfig tiny_config(int layers = 4, int heads = 2, int dim = 8, int max_len = 6,
                        int vocab = 16) {
  ModelConfig cfg;
  cfg.num_layers = layers;
  cfg.num_heads = heads;
  cfg.model_dim = dim;
  cfg.ffn_dim = 16;
  cfg.max_len = max_len;
  cfg.dropout = 0.0;
  cfg.attention_embed_dim = 8;
  cfg.feature_dim = 8;
  cfg.vocab_size = vocab;
  return cfg;
}

std::vector<int> ids_for(const ModelConfig& cfg, int true_len, Rng& rng) {
  std::vector<int> ids(static_cast<size_t>(cfg.max_len), Vocab::kPadId);
  ids[0] = Vocab::kClsId;
  for (int i = 1; i < true_len; ++i) {
    ids[static_cast<size_t>(i)] = 3 + static_cast<int>(rng.below(cfg.vocab_size - 3));
  }
  return ids;
}

}  // namespace

TEST_CASE("encode obeys the shape contract") {
  const ModelConfig cfg = tiny_config();
  ag::ParameterStore store;
  Rng init(1);
  TransformerEncoder enc(cfg, store, init);
  Rng data(2);
  const auto out = enc.encode(ids_for(cfg, 4, data), 4, Mode::kEval);
  REQUIRE(out.layer_embeddings.size() == 4);
  REQUIRE(out.layer_attention.size() == 4);
  for (const auto& e : out.layer_embeddings) {
    CHECK(e.dims() == std::vector<int>{6, 8});
    CHECK(e.all_finite());
  }
  for (const auto& a : out.layer_attention) {
    CHECK(a.dims() == std::vector<int>{2, 6, 6});
  }
}

TEST_CASE("attention rows are stochastic and padded keys get zero mass") {
  const ModelConfig cfg = tiny_config();
  ag::ParameterStore store;
  Rng init(3);
  TransformerEncoder enc(cfg, store, init);
  Rng data(4);
  for (int rep = 0; rep < 50; ++rep) {
    const int true_len = 1 + static_cast<int>(data.below(cfg.max_len));
    const auto out = enc.encode(ids_for(cfg, true_len, data), true_len, Mode::kEval);
    for (const auto& stack : out.layer_attention) {
      for (int h = 0; h < stack.dim(0); ++h) {
        for (int i = 0; i < true_len; ++i) {
          double row_sum = 0.0;
          for (int j = 0; j < stack.dim(2); ++j) {
            const double w = stack.at(h, i, j);
            CHECK(w >= 0.0);
            CHECK(w <= 1.0);
            if (j >= true_len) CHECK(w == 0.0);  // exactly zero at padding
            row_sum += w;
          }
          CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-6));
        }
      }
    }
  }
}

TEST_CASE("a single real token attends only to itself") {
  const ModelConfig cfg = tiny_config();
  ag::ParameterStore store;
  Rng init(5);
  TransformerEncoder enc(cfg, store, init);
  std::vector<int> ids(static_cast<size_t>(cfg.max_len), Vocab::kPadId);
  ids[0] = Vocab::kClsId;
  const auto out = enc.encode(ids, 1, Mode::kEval);
  for (const auto& stack : out.layer_attention) {
    for (int h = 0; h < stack.dim(0); ++h) {
      CHECK(stack.at(h, 0, 0) == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("encode validates inputs") {
  const ModelConfig cfg = tiny_config();
  ag::ParameterStore store;
  Rng init(6);
  TransformerEncoder enc(cfg, store, init);
  Rng data(7);
  const auto ids = ids_for(cfg, 3, data);
  CHECK_THROWS(enc.encode(ids, 0, Mode::kEval));                       // empty sequence
  CHECK_THROWS(enc.encode(std::vector<int>{1, 2}, 2, Mode::kEval));    // unpadded ids
  CHECK_THROWS(enc.encode(ids, cfg.max_len + 1, Mode::kEval));         // too long

  SUBCASE("non-finite parameter detected") {
    store.params()[0]->value[0] = std::nan("");
    CHECK_THROWS_WITH_AS(enc.encode(ids, 3, Mode::kEval),
                         doctest::Contains("non-finite"), std::runtime_error);
  }
}

TEST_CASE("eval mode is bit-deterministic; train mode dropout is not a no-op") {
  ModelConfig cfg = tiny_config();
  cfg.dropout = 0.3;
  ag::ParameterStore store;
  Rng init(8);
  TransformerEncoder enc(cfg, store, init);
  Rng data(9);
  const auto ids = ids_for(cfg, 5, data);

  const auto a = enc.encode(ids, 5, Mode::kEval);
  const auto b = enc.encode(ids, 5, Mode::kEval);
  for (size_t l = 0; l < a.layer_embeddings.size(); ++l) {
    for (int64_t i = 0; i < a.layer_embeddings[l].size(); ++i) {
      CHECK(a.layer_embeddings[l][i] == b.layer_embeddings[l][i]);  // bit-identical
    }
  }

  Rng drop(10);
  const auto c = enc.encode(ids, 5, Mode::kTrain, &drop);
  bool differs = false;
  for (int64_t i = 0; i < c.layer_embeddings.back().size(); ++i) {
    if (c.layer_embeddings.back()[i] != a.layer_embeddings.back()[i]) differs = true;
  }
  CHECK(differs);
}

TEST_CASE("last-three-layer concatenation") {
  SUBCASE("L=4: shapes and head order") {
    const ModelConfig cfg = tiny_config(4);
    ag::ParameterStore store;
    Rng init(11);
    TransformerEncoder enc(cfg, store, init);
    Rng data(12);
    const auto out = enc.encode(ids_for(cfg, 6, data), 6, Mode::kEval);
    const auto cat = last3_concat(out);
    CHECK(cat.embeddings.dims() == std::vector<int>{6, 24});
    CHECK(cat.attention.dims() == std::vector<int>{6, 6, 6});
    // layer L-2 heads come first, layer L last
    for (int h = 0; h < 2; ++h)
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) {
          CHECK(cat.attention.at(h, i, j) == out.layer_attention[1].at(h, i, j));
          CHECK(cat.attention.at(4 + h, i, j) == out.layer_attention[3].at(h, i, j));
        }
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 8; ++j) {
        CHECK(cat.embeddings.at(i, j) == out.layer_embeddings[1].at(i, j));
        CHECK(cat.embeddings.at(i, 16 + j) == out.layer_embeddings[3].at(i, j));
      }
  }
  SUBCASE("L=3 uses every layer") {
    const ModelConfig cfg = tiny_config(3);
    ag::ParameterStore store;
    Rng init(13);
    TransformerEncoder enc(cfg, store, init);
    Rng data(14);
    const auto out = enc.encode(ids_for(cfg, 4, data), 4, Mode::kEval);
    const auto cat = last3_concat(out);
    CHECK(cat.embeddings.dims() == std::vector<int>{6, 24});
    CHECK(cat.attention.dim(0) == 6);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 8; ++j)
        CHECK(cat.embeddings.at(i, j) == out.layer_embeddings[0].at(i, j));
  }
  SUBCASE("concatenation preserves row normalization") {
    const ModelConfig cfg = tiny_config();
    ag::ParameterStore store;
    Rng init(15);
    TransformerEncoder enc(cfg, store, init);
    Rng data(16);
    const int true_len = 5;
    const auto out = enc.encode(ids_for(cfg, true_len, data), true_len, Mode::kEval);
    const auto cat = last3_concat(out);
    for (int h = 0; h < cat.attention.dim(0); ++h) {
      for (int i = 0; i < true_len; ++i) {
        double sum = 0.0;
        for (int j = 0; j < cat.attention.dim(2); ++j) sum += cat.attention.at(h, i, j);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
      }
    }
  }
  SUBCASE("fewer than three layers is a construction-time error") {
    ModelConfig cfg = tiny_config(2);
    ag::ParameterStore store;
    Rng init(17);
    CHECK_THROWS_WITH_AS(TransformerEncoder(cfg, store, init),
                         doctest::Contains("num_layers"), std::runtime_error);
  }
}

TEST_CASE("encoder gradients match central finite differences") {
  const ModelConfig cfg = tiny_config(3, 2, 8, 6, 16);
  ag::ParameterStore store;
  Rng init(19);
  TransformerEncoder enc(cfg, store, init);
  Rng data(20);
  const auto ids = ids_for(cfg, 4, data);

  auto build = [&]() {
    const EncoderGraph graph = enc.build(ids, 4, Mode::kEval, nullptr);
    auto [emb, att] = TransformerEncoder::last3_nodes(graph);
    // pull both outputs into the objective so every path gets checked
    ag::NodePtr emb_part = ag::mean_rows(emb, 4);
    ag::NodePtr att_part = ag::mean_rows(ag::flatten(att), 1);
    ag::NodePtr joined = ag::concat_cols(emb_part, att_part);
    ag::NodePtr weights = ag::constant(Tensor({joined->value.dim(1), 1}, 0.37));
    return ag::matmul(ag::sigmoid(joined), weights);
  };
  const auto report = test::finite_difference_check(store, build, 1e-4);
  CHECK(report.checked > 1000);
  INFO("worst: ", report.worst_param);
  CHECK(report.max_rel_err <= 1e-4);
}
