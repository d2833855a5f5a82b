#include "cfd/metrics.hpp"

#include <algorithm>

namespace cfd {

BinaryMetrics binary_prf(const std::vector<std::pair<int, int>>& pairs) {
  check(!pairs.empty(), "binary_prf: empty input");
  BinaryMetrics m;
  for (const auto& [pred, gold] : pairs) {
    check(pred == 0 || pred == 1, "binary_prf: predicted label must be 0 or 1");
    check(gold == 0 || gold == 1, "binary_prf: gold label must be 0 or 1");
    if (pred == 1 && gold == 1) ++m.tp;
    if (pred == 1 && gold == 0) ++m.fp;
    if (pred == 0 && gold == 1) ++m.fn;
    if (pred == 0 && gold == 0) ++m.tn;
  }
  m.precision = m.tp + m.fp > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fp)
                                : 0.0;
  m.recall = m.tp + m.fn > 0 ? static_cast<double>(m.tp) / static_cast<double>(m.tp + m.fn)
                             : 0.0;
  m.f1 = m.precision + m.recall > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

bool exact_match(const SpanQuad& predicted, const SpanQuad& gold) {
  return predicted == gold;
}

namespace {

// Inclusive character intervals of a quad, merged so that overlapping
// antecedent/consequent ranges are not counted twice.
std::vector<std::pair<int, int>> merged_intervals(const SpanQuad& quad) {
  std::vector<std::pair<int, int>> spans{{quad.antecedent_start, quad.antecedent_end}};
  if (quad.consequent_present) {
    spans.emplace_back(quad.consequent_start, quad.consequent_end);
  }
  std::sort(spans.begin(), spans.end());
  std::vector<std::pair<int, int>> merged;
  for (const auto& s : spans) {
    if (!merged.empty() && s.first <= merged.back().second + 1) {
      merged.back().second = std::max(merged.back().second, s.second);
    } else {
      merged.push_back(s);
    }
  }
  return merged;
}

int64_t total_size(const std::vector<std::pair<int, int>>& intervals) {
  int64_t n = 0;
  for (const auto& [lo, hi] : intervals) n += hi - lo + 1;
  return n;
}

int64_t intersection_size(const std::vector<std::pair<int, int>>& a,
                          const std::vector<std::pair<int, int>>& b) {
  int64_t n = 0;
  for (const auto& [alo, ahi] : a) {
    for (const auto& [blo, bhi] : b) {
      const int lo = std::max(alo, blo);
      const int hi = std::min(ahi, bhi);
      if (lo <= hi) n += hi - lo + 1;
    }
  }
  return n;
}

}  // namespace

SpanExampleScore span_example_score(const SpanPair& pair) {
  validate_quad(pair.predicted, pair.length);
  validate_quad(pair.gold, pair.length);

  const auto pred = merged_intervals(pair.predicted);
  const auto gold = merged_intervals(pair.gold);
  const int64_t pred_n = total_size(pred);
  const int64_t gold_n = total_size(gold);
  const int64_t overlap = intersection_size(pred, gold);

  SpanExampleScore s;
  s.precision = pred_n > 0 ? static_cast<double>(overlap) / static_cast<double>(pred_n)
                           : (gold_n == 0 ? 1.0 : 0.0);
  s.recall = gold_n > 0 ? static_cast<double>(overlap) / static_cast<double>(gold_n)
                        : (pred_n == 0 ? 1.0 : 0.0);
  s.f1 = s.precision + s.recall > 0.0
             ? 2.0 * s.precision * s.recall / (s.precision + s.recall)
             : 0.0;
  s.exact = exact_match(pair.predicted, pair.gold);
  return s;
}

SpanMetrics span_prf(const std::vector<SpanPair>& pairs) {
  check(!pairs.empty(), "span_prf: empty input");
  SpanMetrics m;
  for (const auto& pair : pairs) {
    const SpanExampleScore s = span_example_score(pair);
    m.precision += s.precision;
    m.recall += s.recall;
    m.f1 += s.f1;
    if (s.exact) m.exact_match += 1.0;
  }
  const double n = static_cast<double>(pairs.size());
  m.precision /= n;
  m.recall /= n;
  m.f1 /= n;
  m.exact_match /= n;
  return m;
}

}  // namespace cfd
