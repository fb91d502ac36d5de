#pragma once

/**
 * Node expansion: turning one LM query into scored, constraint-checked
 * children.
 *
 * For each expanded node the engine (1) queries the model once, (2) selects
 * candidate tokens, (3) evaluates the composed constraint on every candidate
 * continuation, and creates one child per candidate:
 *
 *   raw_weight  = parent.raw_weight * p(t) * phi(t)
 *   probability = parent.probability * p(t) * phi(t) / Z,
 *                 Z = sum of p(t') * phi(t') over the evaluated candidates
 *
 * Candidate selection is Greedy (j most likely tokens, ties to the lowest
 * token id) or Stochastic (j draws without replacement; with j = |V| this
 * reproduces exact expansion). The allow-list is always added to the
 * candidate set. Children are created in ascending token order, and nodes
 * are processed in ascending id order, so a seeded generator is consumed in
 * a schedule-independent order.
 *
 * Candidates with phi = 0 or zero probability become Terminal children with
 * score 0; a candidate ending with the eos token and positive probability
 * becomes Complete; everything else starts Inactive. New children are scored
 * by probability; strategies rescore afterwards. Expanded parents become
 * Inactive.
 */

#include <cstddef>
#include <span>
#include <vector>

#include "treedec/constraints.hpp"
#include "treedec/lm.hpp"
#include "treedec/rng.hpp"
#include "treedec/tree.hpp"

namespace treedec {

enum class ExpandMode { Greedy, Stochastic };

std::string to_string(ExpandMode mode);
ExpandMode expand_mode_from_string(const std::string& text);

struct ExpansionPolicy {
  ExpandMode mode = ExpandMode::Greedy;
  std::size_t sample_count = 1;    // j
  std::vector<TokenId> allow_list;  // tokens always evaluated
};

struct CacheOptions {
  bool use_lm_state = true;  // pass cached model state into queries
  bool prune = true;         // drop caches of non-active nodes between steps
};

/**
 * Expands every node in `node_ids` (all must be Active) and returns the ids
 * of all created children in creation order. `phi` may be null for
 * unconstrained decoding. One model query is issued per node.
 */
std::vector<NodeId> expand(DecodingTree& tree, std::span<const NodeId> node_ids,
                           const LanguageModel& lm, const ConstraintPtr& phi,
                           const ExpansionPolicy& policy, Rng& rng,
                           const CacheOptions& cache = {});

}  // namespace treedec
