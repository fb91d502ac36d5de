#pragma once

/**
 * The five decoding strategies, written as steps over a shared tree.
 *
 * Each step expands part of the frontier, rescores, prunes by status, and
 * chooses the next active set:
 *
 *  - beam_step:     expands all active nodes greedily with j = k, scores
 *                   children by raw_weight (their true constrained mass, so
 *                   surviving completions rank exactly like the brute-force
 *                   posterior), keeps the global top k.
 *  - sampling_step: stochastic expansion with j = ceil(k / #active); every
 *                   child with positive score stays active, no truncation.
 *  - smc_step:      particle filter; one stochastic child per particle,
 *                   weight = parent weight times 1 or 0 (constraint
 *                   survival), multinomial resampling when the normalized
 *                   effective sample size drops to the threshold.
 *  - mcts_step:     one rollout from the root selecting children by PUCT,
 *                   then win/playout backpropagation along the lineage.
 *  - asap_step:     one rollout from the root selecting children by
 *                   probability times expected future grammaticality (efg),
 *                   then efg backpropagation; converges on the constrained
 *                   posterior where naive sampling stays biased.
 *
 * MCTS and ASAp are stationary: after every step the active set is exactly
 * {root}. All randomness flows through the caller's generator; given the
 * same seed, every step is reproducible.
 */

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "treedec/expand.hpp"
#include "treedec/tree.hpp"

namespace treedec {

enum class DecoderKind { BeamSearch, Sampling, Smc, Mcts, Asap };

std::string to_string(DecoderKind kind);
DecoderKind decoder_kind_from_string(const std::string& text);

struct DecoderParams {
  DecoderKind kind = DecoderKind::BeamSearch;
  std::size_t k = 5;                // population / beam width
  std::size_t j = 0;                // expansion width; 0 = the kind's default
  std::optional<ExpandMode> mode;   // overrides the kind's default mode
  std::vector<TokenId> allow_list;  // tokens always evaluated on expansion
  double puct_c = 1.0;
  double ess_threshold = 0.6;
  std::size_t rollout_max_len = 256;
  CacheOptions cache;
};

/** The expansion mode a step uses: the explicit override if set, otherwise
 *  greedy for beam search and MCTS, stochastic for the rest. */
ExpandMode effective_mode(const DecoderParams& params);

/** Normalized effective sample size (Σw)² / (k·Σw²), in [0, 1]; 0 when all
 *  weights are 0. */
double normalized_ess(std::span<const double> weights, std::size_t k);

/** wins/max(1, playouts) + c · probability · √(parent.playouts) / (1 + playouts). */
double puct_score(const Node& node, const Node& parent, double puct_c);

/** Child-selection weight used during rollouts. */
enum class RolloutScorer { Probability, ProbabilityTimesEfg, Puct };

/**
 * Descends from `start` (must be Active), expanding childless nodes and
 * sampling one child per level proportionally to the scorer weight, until it
 * reaches a Complete child, the length cap, or a dead end. Dead-end interior
 * nodes (no selectable child) are marked Terminal so later rollouts cannot
 * loop back into them. Intermediate nodes become Inactive; the returned leaf
 * is the rollout's endpoint.
 */
NodeId rollout(DecodingTree& tree, NodeId start, const LanguageModel& lm,
               const ConstraintPtr& phi, const ExpansionPolicy& policy,
               std::size_t rollout_max_len, RolloutScorer scorer, double puct_c,
               Rng& rng, const CacheOptions& cache);

void beam_step(DecodingTree& tree, const LanguageModel& lm,
               const ConstraintPtr& phi, const DecoderParams& params, Rng& rng);
void sampling_step(DecodingTree& tree, const LanguageModel& lm,
                   const ConstraintPtr& phi, const DecoderParams& params, Rng& rng);
void smc_step(DecodingTree& tree, const LanguageModel& lm,
              const ConstraintPtr& phi, const DecoderParams& params, Rng& rng);
void mcts_step(DecodingTree& tree, const LanguageModel& lm,
               const ConstraintPtr& phi, const DecoderParams& params, Rng& rng);
void asap_step(DecodingTree& tree, const LanguageModel& lm,
               const ConstraintPtr& phi, const DecoderParams& params, Rng& rng);

/** Dispatches to the step function for params.kind. */
void decoder_step(DecodingTree& tree, const LanguageModel& lm,
                  const ConstraintPtr& phi, const DecoderParams& params, Rng& rng);

}  // namespace treedec
