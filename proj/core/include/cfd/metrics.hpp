#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "cfd/corpus.hpp"

namespace cfd {

// Binary classification metrics; the counterfactual class (1) is positive.
struct BinaryMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

// pairs of (predicted label, gold label)
BinaryMetrics binary_prf(const std::vector<std::pair<int, int>>& pairs);

// Character-overlap span metrics. Per example, the labelled character set is
// the union of antecedent and consequent characters (inclusive ranges);
// precision/recall compare predicted against gold sets, and corpus values are
// unweighted means of the per-example scores. An empty predicted set against
// an empty gold set scores 1; empty against nonempty scores 0.
struct SpanMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double exact_match = 0.0;
};

struct SpanPair {
  SpanQuad predicted;
  SpanQuad gold;
  int length = 0;  // shared statement length
};

struct SpanExampleScore {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool exact = false;
};

SpanExampleScore span_example_score(const SpanPair& pair);
SpanMetrics span_prf(const std::vector<SpanPair>& pairs);

// True iff all four coordinates and the absence states coincide.
bool exact_match(const SpanQuad& predicted, const SpanQuad& gold);

}  // namespace cfd
