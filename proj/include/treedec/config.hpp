#pragma once

/**
 * Declarative run configuration.
 *
 * One JSON document configures everything: the language model, the decoder,
 * the constraint list, termination and aggregation policies, caching, the
 * seed, and (optionally) an optimizer section with a search space and task
 * suite. Validation is strict: unknown keys and invalid values are rejected
 * with an error naming the offending key path (for example "decoder.kind").
 *
 * Parsing fills every default, and the effective document is kept on the
 * parsed config as `canonical`; parsing a canonical document reproduces it
 * byte for byte, so configs round-trip.
 *
 * File paths inside a config (grammars, model files) are resolved relative
 * to the process working directory.
 */

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "treedec/constraints.hpp"
#include "treedec/decoders.hpp"
#include "treedec/lm.hpp"
#include "treedec/optimizer.hpp"
#include "treedec/runner.hpp"

#include "json.hpp"

namespace treedec {

struct OptimizeConfig {
  SearchSpace space;
  TaskSuite suite;
  std::map<std::string, ConstraintPtr> catalogue;
  ProposalStrategy strategy = ProposalStrategy::Grid;
  ObjectiveKind objective = ObjectiveKind::TopOne;
  std::size_t max_iters = 1;
  std::string trial_log;  // JSON-lines trial log path; empty writes to stdout
  std::string best_out;   // best-config document path; empty writes to stdout
};

struct RunConfig {
  std::uint64_t seed = 0;
  LmPtr lm;
  std::vector<ConstraintPtr> constraints;
  DecoderParams decoder;
  TerminationPolicy termination;
  AggregationPolicy aggregation;
  std::string output;  // decode/oracle output path; empty writes to stdout
  std::optional<OptimizeConfig> optimize;
  nlohmann::json canonical;  // the effective document, defaults filled in
};

/** Product of the configured constraints; null when the list is empty. */
ConstraintPtr composed_constraint(const RunConfig& config);

/** Parses and validates a configuration document. */
RunConfig parse_config(const nlohmann::json& doc);

/** Reads, parses and validates a configuration file. */
RunConfig load_config(const std::string& path);

}  // namespace treedec
