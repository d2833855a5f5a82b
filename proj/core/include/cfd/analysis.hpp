#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cfd/corpus.hpp"
#include "cfd/tensor.hpp"

namespace cfd {

// Attention a token receives under each head of one layer: the column mean
// of the row-stochastic attention matrix over the unpadded query rows.
// Input stack is [H x T x T]; output is [H x true_len].
Tensor received_attention(const Tensor& attention, int true_len);

// Per token, the 1-based indices of every head whose received-attention
// score is within 1e-9 of the per-token maximum (ties all reported).
// `scores` is [H x tokens].
std::vector<std::vector<int>> top_heads(const Tensor& scores);

enum class LexCategory { kPunctuation, kAuxVerb, kConjunction, kNumeral, kOther };

const char* lex_category_name(LexCategory category);

// Deterministic lexicon lookup per token (case-insensitive).
std::vector<LexCategory> lexical_tags(const std::vector<TokenSpan>& tokens);

struct AnnotatedToken {
  std::string surface;
  int char_start = 0;
  int char_end = 0;  // exclusive
  LexCategory category = LexCategory::kOther;
  std::vector<int> top_heads;  // 1-based
  bool in_antecedent = false;
  bool in_consequent = false;
};

struct AnnotatedReport {
  std::vector<AnnotatedToken> tokens;
  std::string rendered;  // marked statement plus a per-token table
};

// Builds the per-token report. All inputs must align with `tokens`; a token
// carries a span flag when its character range overlaps the predicted span.
// The rendered text marks the antecedent as _..._ and the consequent as
// **...**.
AnnotatedReport annotate(const Statement& statement, const std::vector<TokenSpan>& tokens,
                         const std::vector<std::vector<int>>& token_top_heads,
                         const std::vector<LexCategory>& tags,
                         const std::optional<SpanQuad>& predicted);

// Writes head-wise heatmap data as JSON: token list, head count, row-major
// weight matrix per head and per-token received-attention scores.
void export_attention(const Tensor& attention, const std::vector<std::string>& tokens,
                      const std::string& path);

}  // namespace cfd
