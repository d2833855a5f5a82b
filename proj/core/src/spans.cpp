#include "cfd/spans.hpp"

#include <algorithm>
#include <cmath>

namespace cfd {

NormalizedSpanQuad normalize(const SpanQuad& quad, int length) {
  check(length >= 1, "normalize: length must be >= 1");
  validate_quad(quad, length);
  const double inv = 1.0 / static_cast<double>(length);
  NormalizedSpanQuad n;
  n.antecedent_start = quad.antecedent_start * inv;
  n.antecedent_end = quad.antecedent_end * inv;
  if (quad.consequent_present) {
    n.consequent_start = quad.consequent_start * inv;
    n.consequent_end = quad.consequent_end * inv;
  }
  return n;
}

namespace {

int decode_index(double value, int length) {
  // round half-up, then clamp into the statement
  const int rounded = static_cast<int>(std::floor(value * length + 0.5));
  return std::clamp(rounded, 0, length - 1);
}

}  // namespace

SpanQuad denormalize(const NormalizedSpanQuad& normalized, int length) {
  check(length >= 1, "denormalize: length must be >= 1");
  check(std::isfinite(normalized.antecedent_start) && std::isfinite(normalized.antecedent_end) &&
            std::isfinite(normalized.consequent_start) && std::isfinite(normalized.consequent_end),
        "denormalize: non-finite span feature");

  int as = decode_index(normalized.antecedent_start, length);
  int ae = decode_index(normalized.antecedent_end, length);
  if (as > ae) std::swap(as, ae);

  int cs = decode_index(normalized.consequent_start, length);
  int ce = decode_index(normalized.consequent_end, length);
  if (cs == 0 && ce == 0) return SpanQuad::without_consequent(as, ae);
  if (cs > ce) std::swap(cs, ce);
  return SpanQuad::with_consequent(as, ae, cs, ce);
}

}  // namespace cfd
