#pragma once

/**
 * Brute-force reference implementations, independent of the search engine.
 *
 * enumerate_constrained walks every token sequence up to a length cap,
 * multiplying model probabilities and constraint scores, and returns the
 * exact unnormalized mass of every surviving complete sequence. Branches
 * whose mass hits zero are pruned (hard constraints are absorbing), so the
 * practical cost tracks the constrained, not the raw, search space; a visit
 * budget still guards against explosion. Viable prefixes cut off at the cap
 * are accounted as lost mass so truncation error is measurable.
 *
 * These functions deliberately share nothing with the decoding strategies
 * beyond the model and constraint interfaces: they are the yardstick the
 * strategies are tested against.
 */

#include <cstdint>
#include <map>
#include <utility>
#include <vector>

#include "treedec/constraints.hpp"
#include "treedec/lm.hpp"

namespace treedec {

using SequenceProbMap = std::map<std::vector<TokenId>, double>;

struct SequenceDistribution {
  SequenceProbMap masses;      // complete sequence -> unnormalized mass
  double retained_mass = 0.0;  // sum of masses
  double lost_mass = 0.0;      // viable mass truncated at the length cap
  std::uint64_t lm_queries = 0;

  /** Masses divided by the retained mass; empty when nothing survived. */
  SequenceProbMap normalized() const;
};

/**
 * Exact constrained sequence distribution up to `max_len` total tokens
 * (prompt and end-of-sequence token included). `phi` may be null. Throws
 * CapExceeded (with the estimated size) once more than `visit_budget`
 * prefixes have been explored.
 */
SequenceDistribution enumerate_constrained(
    const LanguageModel& lm, const ConstraintPtr& phi, std::size_t max_len,
    const std::vector<TokenId>& prompt = {},
    std::uint64_t visit_budget = 10'000'000);

/** The k highest-mass sequences with their normalized probabilities; ties
 *  resolve in lexicographic token order. */
std::vector<std::pair<std::vector<TokenId>, double>> exact_top_k(
    const SequenceDistribution& dist, std::size_t k);

/** Total variation distance: half the sum of |p(x) - q(x)| over the union
 *  of supports. Inputs are treated as given (normalize first if needed). */
double total_variation(const SequenceProbMap& p, const SequenceProbMap& q);

}  // namespace treedec
