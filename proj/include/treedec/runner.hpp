#pragma once

/**
 * The decode loop: build a tree from the prompt, apply the configured
 * strategy step while the termination condition is false, then aggregate.
 *
 * Termination fires on the first of, in fixed order: enough Complete nodes,
 * node budget reached, empty active set, any sequence at the length cap, the
 * soft wall-clock limit, the expansion budget, the step budget. The last
 * three are optional; the wall-clock limit is checked between steps only and
 * is the one knob that can make reruns diverge, so tests and optimizer
 * suites prefer the deterministic budgets.
 *
 * Aggregation ranks leaves in preference tiers: Complete first, then
 * finished-but-violating leaves (Terminal ending with eos, or truncated at
 * the length cap), then unfinished leaves (Active before Inactive), then the
 * remaining Terminal leaves. Within a tier: score descending, probability
 * descending, creation order.
 */

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "treedec/constraints.hpp"
#include "treedec/decoders.hpp"
#include "treedec/lm.hpp"
#include "treedec/tree.hpp"

#include "json.hpp"

namespace treedec {

struct TerminationPolicy {
  std::size_t min_complete = 5;
  std::size_t max_nodes = 10000;
  std::size_t max_seq_len = 256;  // full sequence length, prompt included
  std::optional<std::int64_t> time_limit_ms;
  std::optional<std::uint64_t> max_expansions;
  std::optional<std::uint64_t> max_steps;
};

struct TerminationCheck {
  bool stop = false;
  std::string reason;  // empty while stop is false
};

/** Evaluates the termination condition; the reason is the first firing
 *  disjunct in the documented order. */
TerminationCheck rho(const DecodingTree& tree, const TerminationPolicy& policy,
                     std::int64_t elapsed_ms, std::uint64_t steps_taken);

struct AggregationPolicy {
  std::size_t top_n = 5;
};

/** Ranks leaves by preference tier; `max_seq_len` defines "truncated".
 *  Returns up to policy.top_n node ids, best first. */
std::vector<NodeId> aggregate(const DecodingTree& tree,
                              const AggregationPolicy& policy,
                              std::size_t max_seq_len);

struct DecodeEntry {
  std::size_t rank = 0;  // 1-based
  std::vector<std::string> tokens;
  std::string text;
  double probability = 0.0;
  double score = 0.0;
  std::string status;
};

struct DecodeResult {
  std::vector<DecodeEntry> entries;
  std::string termination_reason;
  std::uint64_t expansions = 0;
  std::int64_t elapsed_ms = 0;
  std::uint64_t seed = 0;
};

/** One JSON record per entry, each carrying the run-level fields. */
nlohmann::json to_json_records(const DecodeResult& result);

/**
 * Runs one full decode. `phi` may be null. When `tree_out` is non-null the
 * finished tree is moved into it for inspection.
 */
DecodeResult run(const LanguageModel& lm, const ConstraintPtr& phi,
                 const DecoderParams& decoder, const TerminationPolicy& termination,
                 const AggregationPolicy& aggregation, std::uint64_t seed,
                 const std::vector<TokenId>& prompt = {},
                 std::optional<DecodingTree>* tree_out = nullptr);

}  // namespace treedec
