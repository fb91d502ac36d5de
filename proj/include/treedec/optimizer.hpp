#pragma once

/**
 * Configuration search over decoder kind, population size, expansion width,
 * and constraint subsets, scored against a task suite.
 *
 * A search point is evaluated by running one full decode per task with the
 * point's constraint subset, the task's own constraint (typically a grammar)
 * and the task's public predicate attached; the task counts as solved when
 * the best aggregated sequence satisfies both the public predicate and the
 * holdout predicate, which the decoder never sees. The objective is the mean
 * success rate over the suite.
 *
 * Two proposal strategies ship: Grid walks the space in a fixed documented
 * order (kind, then k, then j, then subset, last index fastest) and signals
 * exhaustion once every point appears in the history; Random draws points
 * uniformly, rejecting exact duplicates of history entries up to 100 times
 * before allowing repeats.
 *
 * Determinism: trial i runs with seed derive_seed(master, i), task t inside
 * it with derive_seed(trial_seed, t); proposal randomness uses its own
 * derived stream. Histories are therefore a pure function of (space, suite,
 * strategy, max_iters, master seed), whether trials run sequentially or on a
 * thread pool (results are committed in trial order).
 */

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "treedec/constraints.hpp"
#include "treedec/decoders.hpp"
#include "treedec/lm.hpp"
#include "treedec/rng.hpp"
#include "treedec/runner.hpp"

#include "json.hpp"

namespace treedec {

// ============================================================================
// Search space and task suite
// ============================================================================

struct SearchSpace {
  std::vector<DecoderKind> kinds;
  std::size_t k_min = 1;
  std::size_t k_max = 1;
  std::size_t j_min = 0;  // 0 keeps the kind's default expansion width
  std::size_t j_max = 0;
  /** Candidate constraint subsets, each a list of catalogue names. */
  std::vector<std::vector<std::string>> constraint_subsets = {{}};
  std::optional<std::int64_t> task_time_limit_ms;
  std::optional<std::uint64_t> task_expansion_cap;
};

/** Throws InputError unless kinds is nonempty, k_min >= 1, the ranges are
 *  ordered, and at least one subset is present. */
void validate_space(const SearchSpace& space);

/** Number of points in the grid (kinds x k range x j range x subsets). */
std::uint64_t grid_size(const SearchSpace& space);

/** All subsets of `names` in binary counting order: {}, {n0}, {n1},
 *  {n0,n1}, ... Limited to 16 names. */
std::vector<std::vector<std::string>> power_set(
    const std::vector<std::string>& names);

struct Task {
  std::vector<TokenId> prompt;
  ConstraintPtr task_constraint;  // optional, e.g. a grammar prefix; may be null
  long long public_target = 0;    // visible to the decoder as a constraint
  long long holdout_target = 0;   // used only for scoring
};

struct TaskSuite {
  std::vector<Task> tasks;
};

// ============================================================================
// Trials
// ============================================================================

struct TrialParams {
  DecoderKind kind = DecoderKind::BeamSearch;
  std::size_t k = 1;
  std::size_t j = 0;
  std::size_t subset_index = 0;
  std::vector<std::string> constraints;  // resolved subset names

  friend bool operator==(const TrialParams&, const TrialParams&) = default;
};

struct Trial {
  std::size_t trial = 0;
  TrialParams params;
  double objective = 0.0;  // mean task success, in [0, 1]
  double mean_time_ms = 0.0;
  double mean_expansions = 0.0;
  std::uint64_t seed = 0;
};

nlohmann::json params_to_json(const TrialParams& params);
nlohmann::json trial_to_json(const Trial& trial);

enum class ProposalStrategy { Grid, Random };
enum class ObjectiveKind { TopOne, AnyInTopN };

std::string to_string(ProposalStrategy strategy);
ProposalStrategy proposal_strategy_from_string(const std::string& text);
std::string to_string(ObjectiveKind kind);
ObjectiveKind objective_kind_from_string(const std::string& text);

// ============================================================================
// Evaluation and search
// ============================================================================

/** Everything a trial needs besides the searched parameters. The
 *  termination policy here is final: per-task budgets from the space are
 *  overlaid by apply_task_budgets before evaluation. */
struct OptimizerEnv {
  LmPtr lm;
  std::map<std::string, ConstraintPtr> catalogue;
  TerminationPolicy termination;
  AggregationPolicy aggregation;
  ObjectiveKind objective = ObjectiveKind::TopOne;
};

/** Copies `base` with the space's per-task soft time limit and expansion
 *  cap filled in (when present). */
TerminationPolicy apply_task_budgets(const TerminationPolicy& base,
                                     const SearchSpace& space);

/**
 * Next point to try, or nullopt when a Grid proposal finds every point
 * already in the history. Only history params are consulted.
 */
std::optional<TrialParams> propose(const SearchSpace& space,
                                   const std::vector<Trial>& history,
                                   ProposalStrategy strategy, Rng& rng);

/**
 * Runs every task in the suite under `params` and returns the scored trial
 * (with `trial` left 0; the caller indexes it). A task that throws counts
 * as a failure; the trial itself never aborts.
 */
Trial evaluate_config(const OptimizerEnv& env, const TrialParams& params,
                      const TaskSuite& suite, std::uint64_t trial_seed);

struct OptimizeResult {
  Trial best;
  std::vector<Trial> history;  // in trial order
};

/**
 * Proposes and evaluates up to max_iters points (fewer if the grid is
 * exhausted) and returns the best trial: highest objective, ties broken by
 * lower mean time, then by earlier trial index. `parallel` > 1 evaluates
 * trials on that many threads without changing the reported history.
 */
OptimizeResult optimize(const OptimizerEnv& env, const SearchSpace& space,
                        const TaskSuite& suite, ProposalStrategy strategy,
                        std::size_t max_iters, std::uint64_t master_seed,
                        std::size_t parallel = 1);

}  // namespace treedec
