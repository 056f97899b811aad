#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

#include "cga/corpus.h"

namespace cga {

struct LengthRange {
  int min = 6;
  int max = 14;
};

// Planted escalation signal. Densities are per-token probabilities of drawing
// from the hostile (or calm) word pool; everything else is neutral filler.
//
// Derailing conversations alternate between an escalating speaker, who also
// writes the removed final comment, and a responder. The escalating speaker's
// hostility density rises linearly from `escalation_start` to
// `escalation_peak` at the final comment; the responder follows at
// `responder_share` of that level. Because the final forecastable utterance
// always belongs to the responder, it looks mild in isolation.
//
// Civil conversations carry one transient spike at a uniformly drawn position
// before the last forecastable utterance, after which the hostility subsides
// and calm, de-escalating vocabulary appears.
struct SignalParams {
  int min_tokens = 8;
  int max_tokens = 14;
  double escalation_start = 0.05;
  double escalation_peak = 0.6;
  double responder_share = 0.3;
  double spike_density = 0.1;
  double background_hostility = 0.01;
  double calm_density = 0.2;
  double background_calm = 0.02;
};

Json to_json(const SignalParams& params);

// Deterministic in `seed`. Emits n_pairs equal-length (derailing, civil)
// pairs sharing a pair_id, split 60/20/20 by pair.
Corpus generate_synthetic(std::uint64_t seed, std::size_t n_pairs, const LengthRange& lengths = {},
                          const SignalParams& signal = {});

namespace synthetic {
std::span<const std::string_view> hostile_words();
std::span<const std::string_view> calm_words();
std::span<const std::string_view> neutral_words();
}  // namespace synthetic

}  // namespace cga
