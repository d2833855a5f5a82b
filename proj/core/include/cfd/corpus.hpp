#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cfd/rng.hpp"
#include "cfd/tensor.hpp"

namespace cfd {

// One text sample. `length` counts Unicode code points, not bytes; all span
// indices elsewhere are code-point indices into `text`.
struct Statement {
  std::string id;
  std::string text;
  int length = 0;
};

struct BinaryLabel {
  int value = 0;  // 0 = not a counterfactual, 1 = counterfactual
};

// Character-level span features with inclusive end indices. The antecedent
// is always present; the consequent may be absent.
struct SpanQuad {
  int antecedent_start = 0;
  int antecedent_end = 0;
  bool consequent_present = false;
  int consequent_start = 0;
  int consequent_end = 0;

  static SpanQuad with_consequent(int as, int ae, int cs, int ce) {
    return {as, ae, true, cs, ce};
  }
  static SpanQuad without_consequent(int as, int ae) { return {as, ae, false, 0, 0}; }

  bool operator==(const SpanQuad& other) const {
    if (antecedent_start != other.antecedent_start || antecedent_end != other.antecedent_end)
      return false;
    if (consequent_present != other.consequent_present) return false;
    if (!consequent_present) return true;
    return consequent_start == other.consequent_start && consequent_end == other.consequent_end;
  }
};

// Throws unless 0 <= start <= end < length for the antecedent and, when
// present, the consequent.
void validate_quad(const SpanQuad& quad, int length);

// One token with half-open code-point offsets into the source text.
struct TokenSpan {
  std::string surface;
  int char_start = 0;
  int char_end = 0;

  bool operator==(const TokenSpan& other) const {
    return surface == other.surface && char_start == other.char_start &&
           char_end == other.char_end;
  }
};

// Frequency-ranked token vocabulary with reserved pad / unknown / sequence-
// start ids.
class Vocab {
 public:
  static constexpr int kPadId = 0;
  static constexpr int kUnkId = 1;
  static constexpr int kClsId = 2;

  // Frequency-ranked over the given tokenized corpus; ties broken
  // lexicographically. Tokens below min_freq are dropped and the table is
  // capped at max_size entries (reserved ids included).
  static Vocab build(const std::vector<std::vector<TokenSpan>>& corpus, int min_freq = 2,
                     int max_size = 8192);
  static Vocab from_tokens(std::vector<std::string> tokens_by_id);

  int id(const std::string& token) const;
  int size() const { return static_cast<int>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::map<std::string, int> ids_;
};

// CSV loaders. Both expect a header row and UTF-8 text; quoted fields may
// contain commas and doubled quotes.
std::vector<std::pair<Statement, BinaryLabel>> load_detection_data(const std::string& path);
// Absent consequents are encoded as -1,-1 on disk.
std::vector<std::pair<Statement, SpanQuad>> load_span_data(const std::string& path);

// Seeded permutation split; |train| = floor(ratio * N).
template <typename T>
std::pair<std::vector<T>, std::vector<T>> split(const std::vector<T>& data, double ratio,
                                                uint64_t seed) {
  check(ratio > 0.0 && ratio < 1.0, "split: ratio must be in (0, 1)");
  check(data.size() >= 2, "split: need at least two samples");
  std::vector<size_t> order(data.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  const size_t train_n = static_cast<size_t>(ratio * static_cast<double>(data.size()));
  std::pair<std::vector<T>, std::vector<T>> out;
  out.first.reserve(train_n);
  out.second.reserve(data.size() - train_n);
  for (size_t i = 0; i < order.size(); ++i) {
    (i < train_n ? out.first : out.second).push_back(data[order[i]]);
  }
  return out;
}

// Whitespace-delimited tokens, further split at punctuation boundaries;
// apostrophes between word characters do not split. Offsets are code-point
// indices, end exclusive.
std::vector<TokenSpan> tokenize(const std::string& text);

// True iff every code point of the token is a punctuation mark under the
// tokenizer's character classes.
bool punctuation_only_token(const std::string& surface);

struct EncodedSequence {
  std::vector<int> ids;  // exactly max_len entries
  int true_len = 0;      // sequence-start marker plus real tokens
};

// Prepends the sequence-start marker, maps tokens to ids (unknowns to UNK),
// then truncates/pads to max_len.
EncodedSequence encode_ids(const std::vector<TokenSpan>& tokens, const Vocab& vocab,
                           int max_len);

// ---- UTF-8 helpers (code-point arithmetic for span bookkeeping) ----
int count_code_points(const std::string& text);
// Byte offset of every code point plus one past-the-end entry.
std::vector<int> code_point_byte_offsets(const std::string& text);
// Substring by code-point range [start, start + count).
std::string substr_code_points(const std::string& text, int start, int count);

// ---- CSV ----
std::vector<std::vector<std::string>> read_csv(const std::string& path);
std::string csv_quote(const std::string& field);

}  // namespace cfd
