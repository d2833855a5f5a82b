#pragma once

#include "cfd/corpus.hpp"

namespace cfd {

// Length-scaled span features: character indices divided by statement length.
// Values are nonnegative; training targets lie in [0, 1]. An absent
// consequent is encoded as (0, 0).
struct NormalizedSpanQuad {
  double antecedent_start = 0.0;
  double antecedent_end = 0.0;
  double consequent_start = 0.0;
  double consequent_end = 0.0;
};

// Scales a span quad down by the statement length. The quad must be valid
// for the given length; an absent consequent maps to (0, 0).
NormalizedSpanQuad normalize(const SpanQuad& quad, int length);

// Scales normalized span features back up to character indices: multiply by
// length, round half-up, clamp into [0, length-1]. A rounded consequent of
// (0, 0) decodes as absent; an inverted span is repaired by swapping its
// endpoints. Note one corner: a genuine one-character consequent at position
// 0 collides with the absence code and decodes as absent.
SpanQuad denormalize(const NormalizedSpanQuad& normalized, int length);

}  // namespace cfd
