#include "cfd/analysis.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

namespace cfd {

Tensor received_attention(const Tensor& attention, int true_len) {
  check(attention.rank() == 3, "received_attention: expects a rank-3 stack");
  check(attention.dim(1) == attention.dim(2), "received_attention: token axes must be square");
  check(true_len >= 1 && true_len <= attention.dim(1),
        "received_attention: true_len does not match the stack");
  const int heads = attention.dim(0);
  Tensor scores({heads, true_len});
  for (int h = 0; h < heads; ++h) {
    for (int j = 0; j < true_len; ++j) {
      double sum = 0.0;
      for (int i = 0; i < true_len; ++i) sum += attention.at(h, i, j);
      scores.at(h, j) = sum / static_cast<double>(true_len);
    }
  }
  return scores;
}

std::vector<std::vector<int>> top_heads(const Tensor& scores) {
  check(scores.rank() == 2, "top_heads: expects [heads x tokens]");
  check(scores.all_finite(), "top_heads: scores must be finite");
  const int heads = scores.dim(0), tokens = scores.dim(1);
  constexpr double kTieTolerance = 1e-9;
  std::vector<std::vector<int>> result(static_cast<size_t>(tokens));
  for (int j = 0; j < tokens; ++j) {
    double best = scores.at(0, j);
    for (int h = 1; h < heads; ++h) best = std::max(best, scores.at(h, j));
    for (int h = 0; h < heads; ++h) {
      if (scores.at(h, j) >= best - kTieTolerance) {
        result[static_cast<size_t>(j)].push_back(h + 1);
      }
    }
  }
  return result;
}

const char* lex_category_name(LexCategory category) {
  switch (category) {
    case LexCategory::kPunctuation:
      return "PUNCTUATION";
    case LexCategory::kAuxVerb:
      return "AUX_VERB";
    case LexCategory::kConjunction:
      return "CONJUNCTION";
    case LexCategory::kNumeral:
      return "NUMERAL";
    case LexCategory::kOther:
      return "OTHER";
  }
  return "OTHER";
}

namespace {

const std::set<std::string>& aux_verbs() {
  static const std::set<std::string> kAux{
      "would", "wouldn't", "could", "couldn't", "should", "shouldn't", "had", "has",
      "have",  "was",      "were",  "wish",     "'d",     "'ll",       "will", "won't",
      "can",   "can't",    "might", "must"};
  return kAux;
}

const std::set<std::string>& conjunctions() {
  static const std::set<std::string> kConj{"if", "but", "and", "or", "unless", "though",
                                           "because", "so"};
  return kConj;
}

const std::set<std::string>& number_words() {
  static const std::set<std::string> kNum{
      "zero",    "one",     "two",      "three",    "four",    "five",    "six",
      "seven",   "eight",   "nine",     "ten",      "eleven",  "twelve",  "thirteen",
      "fourteen", "fifteen", "sixteen", "seventeen", "eighteen", "nineteen", "twenty",
      "thirty",  "forty",   "fifty",    "sixty",    "seventy", "eighty",  "ninety",
      "hundred", "thousand", "million", "billion"};
  return kNum;
}

// ASCII lowercase plus typographic-apostrophe normalization.
std::string normalize_token(const std::string& surface) {
  std::string out;
  out.reserve(surface.size());
  for (size_t i = 0; i < surface.size(); ++i) {
    const unsigned char c = static_cast<unsigned char>(surface[i]);
    if (c == 0xE2 && i + 2 < surface.size() &&
        static_cast<unsigned char>(surface[i + 1]) == 0x80 &&
        static_cast<unsigned char>(surface[i + 2]) == 0x99) {
      out += '\'';  // U+2019
      i += 2;
      continue;
    }
    out += static_cast<char>(c >= 'A' && c <= 'Z' ? c - 'A' + 'a' : c);
  }
  return out;
}

bool all_digits(const std::string& surface) {
  if (surface.empty()) return false;
  for (unsigned char c : surface) {
    if (c < '0' || c > '9') return false;
  }
  return true;
}

LexCategory tag_token(const std::string& surface) {
  const std::string norm = normalize_token(surface);
  if (punctuation_only_token(surface)) return LexCategory::kPunctuation;
  if (aux_verbs().count(norm)) return LexCategory::kAuxVerb;
  if (conjunctions().count(norm)) return LexCategory::kConjunction;
  if (all_digits(norm) || number_words().count(norm)) return LexCategory::kNumeral;
  return LexCategory::kOther;
}

}  // namespace

std::vector<LexCategory> lexical_tags(const std::vector<TokenSpan>& tokens) {
  std::vector<LexCategory> tags;
  tags.reserve(tokens.size());
  for (const auto& tok : tokens) tags.push_back(tag_token(tok.surface));
  return tags;
}

namespace {

bool overlaps(int token_start, int token_end_excl, int span_start, int span_end_incl) {
  return token_start <= span_end_incl && token_end_excl - 1 >= span_start;
}

std::string join_heads(const std::vector<int>& heads) {
  std::string s;
  for (size_t i = 0; i < heads.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(heads[i]);
  }
  return s;
}

}  // namespace

AnnotatedReport annotate(const Statement& statement, const std::vector<TokenSpan>& tokens,
                         const std::vector<std::vector<int>>& token_top_heads,
                         const std::vector<LexCategory>& tags,
                         const std::optional<SpanQuad>& predicted) {
  check(tokens.size() == token_top_heads.size() && tokens.size() == tags.size(),
        "annotate: misaligned inputs");
  if (predicted) validate_quad(*predicted, statement.length);

  AnnotatedReport report;
  report.tokens.reserve(tokens.size());
  for (size_t i = 0; i < tokens.size(); ++i) {
    AnnotatedToken at;
    at.surface = tokens[i].surface;
    at.char_start = tokens[i].char_start;
    at.char_end = tokens[i].char_end;
    at.category = tags[i];
    at.top_heads = token_top_heads[i];
    if (predicted) {
      at.in_antecedent = overlaps(at.char_start, at.char_end, predicted->antecedent_start,
                                  predicted->antecedent_end);
      if (predicted->consequent_present) {
        at.in_consequent = overlaps(at.char_start, at.char_end, predicted->consequent_start,
                                    predicted->consequent_end);
      }
    }
    report.tokens.push_back(std::move(at));
  }

  std::ostringstream out;
  out << "statement: " << statement.id << "\n";
  std::string marked;
  for (int p = 0; p < statement.length; ++p) {
    if (predicted) {
      if (p == predicted->antecedent_start) marked += "_";
      if (predicted->consequent_present && p == predicted->consequent_start) marked += "**";
    }
    marked += substr_code_points(statement.text, p, 1);
    if (predicted) {
      if (p == predicted->antecedent_end) marked += "_";
      if (predicted->consequent_present && p == predicted->consequent_end) marked += "**";
    }
  }
  out << marked << "\n";
  if (predicted && !predicted->consequent_present) {
    out << "(no consequent predicted)\n";
  }
  out << "\n";
  out << "token\tspan\tcategory\theads\troles\n";
  for (const auto& at : report.tokens) {
    out << at.surface << "\t[" << at.char_start << "," << at.char_end << ")\t"
        << lex_category_name(at.category) << "\t" << join_heads(at.top_heads) << "\t";
    if (at.in_antecedent) out << "antecedent";
    if (at.in_antecedent && at.in_consequent) out << "+";
    if (at.in_consequent) out << "consequent";
    out << "\n";
  }
  report.rendered = out.str();
  return report;
}

void export_attention(const Tensor& attention, const std::vector<std::string>& tokens,
                      const std::string& path) {
  check(attention.rank() == 3, "export_attention: expects a rank-3 stack");
  check(attention.dim(1) == attention.dim(2), "export_attention: token axes must be square");
  check(static_cast<int>(tokens.size()) == attention.dim(1),
        "export_attention: token list does not match the stack");
  const int heads = attention.dim(0);
  const int t = attention.dim(1);

  nlohmann::json doc;
  doc["tokens"] = tokens;
  doc["num_heads"] = heads;
  nlohmann::json head_list = nlohmann::json::array();
  for (int h = 0; h < heads; ++h) {
    nlohmann::json rows = nlohmann::json::array();
    for (int i = 0; i < t; ++i) {
      nlohmann::json row = nlohmann::json::array();
      for (int j = 0; j < t; ++j) row.push_back(attention.at(h, i, j));
      rows.push_back(std::move(row));
    }
    head_list.push_back({{"head", h + 1}, {"weights", std::move(rows)}});
  }
  doc["heads"] = std::move(head_list);

  const Tensor scores = received_attention(attention, t);
  nlohmann::json received = nlohmann::json::array();
  for (int h = 0; h < heads; ++h) {
    nlohmann::json row = nlohmann::json::array();
    for (int j = 0; j < t; ++j) row.push_back(scores.at(h, j));
    received.push_back(std::move(row));
  }
  doc["received_attention"] = std::move(received);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  check(out.good(), "export_attention: cannot write " + path);
  out << doc.dump(2) << "\n";
  check(out.good(), "export_attention: write failed for " + path);
}

}  // namespace cfd
