#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include "cfd/analysis.hpp"
#include "test_support.hpp"

using namespace cfd;

namespace {

// Row-stochastic stack where head h puts all mass on column targets[h].
Tensor one_hot_stack(int heads, int tokens, const std::vector<int>& targets) {
  Tensor att({heads, tokens, tokens});
  for (int h = 0; h < heads; ++h)
    for (int i = 0; i < tokens; ++i) att.at(h, i, targets[static_cast<size_t>(h)]) = 1.0;
  return att;
}

Tensor uniform_stack(int heads, int tokens) {
  return Tensor({heads, tokens, tokens}, 1.0 / tokens);
}

}  // namespace

TEST_CASE("received attention") {
  SUBCASE("uniform attention spreads evenly") {
    const Tensor scores = received_attention(uniform_stack(3, 5), 5);
    CHECK(scores.dims() == std::vector<int>{3, 5});
    for (int h = 0; h < 3; ++h)
      for (int j = 0; j < 5; ++j) CHECK(scores.at(h, j) == doctest::Approx(0.2).epsilon(1e-12));
  }
  SUBCASE("one-hot columns concentrate the mass") {
    const Tensor scores = received_attention(one_hot_stack(2, 4, {2, 0}), 4);
    CHECK(scores.at(0, 2) == doctest::Approx(1.0));
    CHECK(scores.at(0, 0) == 0.0);
    CHECK(scores.at(1, 0) == doctest::Approx(1.0));
  }
  SUBCASE("single token receives everything") {
    const Tensor scores = received_attention(uniform_stack(2, 1), 1);
    CHECK(scores.at(0, 0) == doctest::Approx(1.0));
    CHECK(scores.at(1, 0) == doctest::Approx(1.0));
  }
  SUBCASE("column mass per head sums to one") {
    Rng rng(41);
    Tensor att({3, 6, 6});
    for (int h = 0; h < 3; ++h)
      for (int i = 0; i < 6; ++i) {
        double sum = 0;
        for (int j = 0; j < 6; ++j) {
          att.at(h, i, j) = rng.uniform() + 1e-3;
          sum += att.at(h, i, j);
        }
        for (int j = 0; j < 6; ++j) att.at(h, i, j) /= sum;
      }
    const Tensor scores = received_attention(att, 6);
    for (int h = 0; h < 3; ++h) {
      double mass = 0;
      for (int j = 0; j < 6; ++j) mass += scores.at(h, j);
      CHECK(mass == doctest::Approx(1.0).epsilon(1e-5));
    }
  }
  SUBCASE("length mismatch rejected") {
    CHECK_THROWS(received_attention(uniform_stack(2, 4), 5));
    CHECK_THROWS(received_attention(uniform_stack(2, 4), 0));
  }
}

TEST_CASE("top heads") {
  SUBCASE("plain argmax") {
    Tensor scores({3, 1});
    scores.at(0, 0) = 0.1;
    scores.at(1, 0) = 0.7;
    scores.at(2, 0) = 0.2;
    const auto heads = top_heads(scores);
    REQUIRE(heads.size() == 1);
    CHECK(heads[0] == std::vector<int>{2});  // 1-based
  }
  SUBCASE("exact ties all reported") {
    Tensor scores({4, 1});
    scores.at(0, 0) = 0.1;
    scores.at(1, 0) = 0.4;
    scores.at(2, 0) = 0.2;
    scores.at(3, 0) = 0.4;
    CHECK(top_heads(scores)[0] == std::vector<int>{2, 4});
  }
  SUBCASE("all equal reports the full set") {
    Tensor scores({3, 2}, 0.25);
    const auto heads = top_heads(scores);
    CHECK(heads[0] == std::vector<int>{1, 2, 3});
    CHECK(heads[1] == std::vector<int>{1, 2, 3});
  }
  SUBCASE("invariant under common positive rescaling") {
    Rng rng(43);
    Tensor scores({4, 6});
    for (int64_t i = 0; i < scores.size(); ++i) scores[i] = rng.uniform();
    const auto before = top_heads(scores);
    Tensor scaled = scores;
    for (int64_t i = 0; i < scaled.size(); ++i) scaled[i] *= 0.125;  // exact scaling
    CHECK(top_heads(scaled) == before);
  }
}

TEST_CASE("lexical tags") {
  auto tag_of = [](const std::string& word) {
    return lexical_tags(tokenize(word)).at(0);
  };
  CHECK(tag_of("wouldn't") == LexCategory::kAuxVerb);
  CHECK(tag_of("if") == LexCategory::kConjunction);
  CHECK(tag_of("If") == LexCategory::kConjunction);
  CHECK(tag_of("12") == LexCategory::kNumeral);
  CHECK(tag_of("twelve") == LexCategory::kNumeral);
  CHECK(tag_of("hundred") == LexCategory::kNumeral);
  CHECK(tag_of(".") == LexCategory::kPunctuation);
  CHECK(tag_of(",") == LexCategory::kPunctuation);
  CHECK(tag_of("pharmacists") == LexCategory::kOther);
  CHECK(tag_of("Would") == LexCategory::kAuxVerb);
  CHECK(tag_of("because") == LexCategory::kConjunction);

  SUBCASE("assignment is total and deterministic") {
    const auto tokens = tokenize("If I had 10 pharmacists, I wouldn't worry.");
    const auto a = lexical_tags(tokens);
    const auto b = lexical_tags(tokens);
    CHECK(a == b);
    CHECK(a.size() == tokens.size());
  }
}

TEST_CASE("annotate flags tokens inside predicted spans") {
  const std::string text = "If I had a boat, I would sail away.";
  Statement st{"ex1", text, count_code_points(text)};
  const auto tokens = tokenize(text);
  const auto tags = lexical_tags(tokens);
  std::vector<std::vector<int>> heads(tokens.size(), std::vector<int>{1});

  const int a_start = 0;
  const int a_end = static_cast<int>(std::string("If I had a boat").size()) - 1;
  const int c_start = static_cast<int>(text.find("I would"));
  const int c_end = st.length - 2;  // excludes the final period

  SUBCASE("with a full quad") {
    const auto report = annotate(st, tokens, heads, tags,
                                 SpanQuad::with_consequent(a_start, a_end, c_start, c_end));
    REQUIRE(report.tokens.size() == tokens.size());
    CHECK(report.tokens[0].in_antecedent);  // "If"
    CHECK_FALSE(report.tokens[0].in_consequent);
    const auto& last_word = report.tokens[report.tokens.size() - 2];  // "away"
    CHECK(last_word.in_consequent);
    const auto& period = report.tokens.back();
    CHECK_FALSE(period.in_consequent);
    CHECK(report.rendered.find("_If") != std::string::npos);
    CHECK(report.rendered.find("**I would") != std::string::npos);
  }
  SUBCASE("absent consequent leaves no consequent flags") {
    const auto report =
        annotate(st, tokens, heads, tags, SpanQuad::without_consequent(a_start, a_end));
    for (const auto& tok : report.tokens) CHECK_FALSE(tok.in_consequent);
    CHECK(report.rendered.find("**") == std::string::npos);
    CHECK(report.rendered.find("no consequent") != std::string::npos);
  }
  SUBCASE("no prediction at all") {
    const auto report = annotate(st, tokens, heads, tags, std::nullopt);
    for (const auto& tok : report.tokens) {
      CHECK_FALSE(tok.in_antecedent);
      CHECK_FALSE(tok.in_consequent);
    }
  }
  SUBCASE("misaligned inputs rejected") {
    std::vector<std::vector<int>> short_heads(tokens.size() - 1);
    CHECK_THROWS_WITH_AS(annotate(st, tokens, short_heads, tags, std::nullopt),
                         doctest::Contains("misaligned"), std::runtime_error);
  }
}

TEST_CASE("attention export round-trips through JSON") {
  test::TempDir dir("analysis");
  Rng rng(47);
  const int heads = 2, tokens = 4;
  Tensor att({heads, tokens, tokens});
  for (int h = 0; h < heads; ++h)
    for (int i = 0; i < tokens; ++i) {
      double sum = 0;
      for (int j = 0; j < tokens; ++j) {
        att.at(h, i, j) = rng.uniform() + 0.01;
        sum += att.at(h, i, j);
      }
      for (int j = 0; j < tokens; ++j) att.at(h, i, j) /= sum;
    }
  const std::vector<std::string> names{"<cls>", "If", "I", "had"};
  const std::string path = dir.file("att.json");
  export_attention(att, names, path);

  const auto doc = nlohmann::json::parse(test::read_text(path));
  CHECK(doc["tokens"].get<std::vector<std::string>>() == names);
  CHECK(doc["num_heads"].get<int>() == heads);
  REQUIRE(doc["heads"].size() == static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    CHECK(doc["heads"][static_cast<size_t>(h)]["head"].get<int>() == h + 1);
    const auto& rows = doc["heads"][static_cast<size_t>(h)]["weights"];
    REQUIRE(rows.size() == static_cast<size_t>(tokens));
    for (int i = 0; i < tokens; ++i) {
      REQUIRE(rows[static_cast<size_t>(i)].size() == static_cast<size_t>(tokens));
      double sum = 0;
      for (int j = 0; j < tokens; ++j) {
        const double v = rows[static_cast<size_t>(i)][static_cast<size_t>(j)].get<double>();
        CHECK(std::fabs(v - att.at(h, i, j)) <= 1e-9);  // round-trip tolerance
        sum += v;
      }
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
  CHECK(doc["received_attention"].size() == static_cast<size_t>(heads));

  SUBCASE("unwritable path rejected") {
    CHECK_THROWS(export_attention(att, names, dir.path() + "/missing/att.json"));
  }
  SUBCASE("token list must match the stack") {
    CHECK_THROWS(export_attention(att, {"a", "b"}, path));
  }
}
