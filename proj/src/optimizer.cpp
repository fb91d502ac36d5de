#include "treedec/optimizer.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <thread>

namespace treedec {

namespace {

// Proposal draws come from a stream index far above any realistic trial
// index, so they never collide with per-trial seeds.
constexpr std::uint64_t kProposeStream = 0xFFFFFFFFULL;

}  // namespace

// ============================================================================
// Space
// ============================================================================

void validate_space(const SearchSpace& space) {
  if (space.kinds.empty()) throw InputError("search space: no decoder kinds");
  if (space.k_min < 1) throw InputError("search space: k_min must be >= 1");
  if (space.k_min > space.k_max) {
    throw InputError("search space: k_min exceeds k_max");
  }
  if (space.j_min > space.j_max) {
    throw InputError("search space: j_min exceeds j_max");
  }
  if (space.constraint_subsets.empty()) {
    throw InputError("search space: no constraint subsets");
  }
}

std::uint64_t grid_size(const SearchSpace& space) {
  validate_space(space);
  return static_cast<std::uint64_t>(space.kinds.size()) *
         (space.k_max - space.k_min + 1) * (space.j_max - space.j_min + 1) *
         space.constraint_subsets.size();
}

std::vector<std::vector<std::string>> power_set(
    const std::vector<std::string>& names) {
  if (names.size() > 16) {
    throw InputError("power set limited to 16 named constraints");
  }
  std::vector<std::vector<std::string>> out;
  out.reserve(std::size_t{1} << names.size());
  for (std::uint32_t mask = 0; mask < (1u << names.size()); ++mask) {
    std::vector<std::string> subset;
    for (std::size_t i = 0; i < names.size(); ++i) {
      if (mask & (1u << i)) subset.push_back(names[i]);
    }
    out.push_back(std::move(subset));
  }
  return out;
}

// ============================================================================
// Serialization
// ============================================================================

nlohmann::json params_to_json(const TrialParams& params) {
  return nlohmann::json{{"kind", to_string(params.kind)},
                        {"k", params.k},
                        {"j", params.j},
                        {"constraints", params.constraints}};
}

nlohmann::json trial_to_json(const Trial& trial) {
  return nlohmann::json{{"trial", trial.trial},
                        {"params", params_to_json(trial.params)},
                        {"objective", trial.objective},
                        {"mean_time_ms", trial.mean_time_ms},
                        {"mean_expansions", trial.mean_expansions},
                        {"seed", trial.seed}};
}

std::string to_string(ProposalStrategy strategy) {
  return strategy == ProposalStrategy::Grid ? "grid" : "random";
}

ProposalStrategy proposal_strategy_from_string(const std::string& text) {
  if (text == "grid") return ProposalStrategy::Grid;
  if (text == "random") return ProposalStrategy::Random;
  throw InputError("unknown proposal strategy '" + text + "'");
}

std::string to_string(ObjectiveKind kind) {
  return kind == ObjectiveKind::TopOne ? "top1" : "pass_at_n";
}

ObjectiveKind objective_kind_from_string(const std::string& text) {
  if (text == "top1") return ObjectiveKind::TopOne;
  if (text == "pass_at_n") return ObjectiveKind::AnyInTopN;
  throw InputError("unknown objective kind '" + text + "'");
}

// ============================================================================
// Proposals
// ============================================================================

namespace {

TrialParams point_at(const SearchSpace& space, std::uint64_t index) {
  const std::uint64_t subsets = space.constraint_subsets.size();
  const std::uint64_t js = space.j_max - space.j_min + 1;
  const std::uint64_t ks = space.k_max - space.k_min + 1;
  TrialParams p;
  p.subset_index = static_cast<std::size_t>(index % subsets);
  index /= subsets;
  p.j = space.j_min + static_cast<std::size_t>(index % js);
  index /= js;
  p.k = space.k_min + static_cast<std::size_t>(index % ks);
  index /= ks;
  p.kind = space.kinds[static_cast<std::size_t>(index)];
  p.constraints = space.constraint_subsets[p.subset_index];
  return p;
}

bool in_history(const std::vector<Trial>& history, const TrialParams& params) {
  return std::any_of(history.begin(), history.end(), [&](const Trial& t) {
    return t.params == params;
  });
}

std::size_t pick(Rng& rng, std::size_t n) {
  return static_cast<std::size_t>(rng.next_u64() % n);
}

}  // namespace

std::optional<TrialParams> propose(const SearchSpace& space,
                                   const std::vector<Trial>& history,
                                   ProposalStrategy strategy, Rng& rng) {
  validate_space(space);
  if (strategy == ProposalStrategy::Grid) {
    const std::uint64_t total = grid_size(space);
    for (std::uint64_t i = 0; i < total; ++i) {
      TrialParams p = point_at(space, i);
      if (!in_history(history, p)) return p;
    }
    return std::nullopt;  // exhausted
  }
  TrialParams p;
  for (int attempt = 0; attempt < 100; ++attempt) {
    p.kind = space.kinds[pick(rng, space.kinds.size())];
    p.k = space.k_min + pick(rng, space.k_max - space.k_min + 1);
    p.j = space.j_min + pick(rng, space.j_max - space.j_min + 1);
    p.subset_index = pick(rng, space.constraint_subsets.size());
    p.constraints = space.constraint_subsets[p.subset_index];
    if (!in_history(history, p)) return p;
  }
  return p;  // duplicate allowed after 100 rejections
}

// ============================================================================
// Evaluation
// ============================================================================

TerminationPolicy apply_task_budgets(const TerminationPolicy& base,
                                     const SearchSpace& space) {
  TerminationPolicy out = base;
  if (space.task_time_limit_ms) out.time_limit_ms = space.task_time_limit_ms;
  if (space.task_expansion_cap) out.max_expansions = space.task_expansion_cap;
  return out;
}

namespace {

/** Generated text of an aggregated entry: token strings past the prompt,
 *  minus the trailing end-of-sequence marker. */
std::string content_text(const DecodeEntry& entry, std::size_t prompt_len,
                         const std::string& eos_token) {
  std::size_t end = entry.tokens.size();
  if (end > prompt_len && entry.tokens[end - 1] == eos_token) --end;
  std::string text;
  for (std::size_t i = prompt_len; i < end; ++i) text += entry.tokens[i];
  return text;
}

bool entry_solves(const DecodeEntry& entry, const Task& task,
                  std::size_t prompt_len, const std::string& eos_token) {
  std::string text = content_text(entry, prompt_len, eos_token);
  return completion_predicate_eval(task.public_target, text) > 0.0 &&
         completion_predicate_eval(task.holdout_target, text) > 0.0;
}

}  // namespace

Trial evaluate_config(const OptimizerEnv& env, const TrialParams& params,
                      const TaskSuite& suite, std::uint64_t trial_seed) {
  if (!env.lm) throw InputError("optimizer: no language model");
  if (suite.tasks.empty()) throw InputError("optimizer: empty task suite");

  const Vocabulary& vocab = env.lm->vocab();
  const std::string eos_token = vocab.token(vocab.eos());

  std::vector<ConstraintPtr> subset;
  for (const std::string& name : params.constraints) {
    auto it = env.catalogue.find(name);
    if (it == env.catalogue.end()) {
      throw InputError("unknown constraint name '" + name + "' in subset");
    }
    subset.push_back(it->second);
  }

  Trial out;
  out.params = params;
  out.seed = trial_seed;

  std::size_t successes = 0;
  double total_ms = 0.0;
  double total_expansions = 0.0;
  for (std::size_t t = 0; t < suite.tasks.size(); ++t) {
    const Task& task = suite.tasks[t];
    try {
      std::vector<ConstraintPtr> members = subset;
      if (task.task_constraint) members.push_back(task.task_constraint);
      members.push_back(std::make_shared<CompletionPredicateConstraint>(
          task.public_target, vocab));
      ConstraintPtr phi = compose_product(std::move(members));

      DecoderParams decoder;
      decoder.kind = params.kind;
      decoder.k = params.k;
      decoder.j = params.j;

      DecodeResult result =
          run(*env.lm, phi, decoder, env.termination, env.aggregation,
              derive_seed(trial_seed, t), task.prompt);
      total_ms += static_cast<double>(result.elapsed_ms);
      total_expansions += static_cast<double>(result.expansions);

      if (env.objective == ObjectiveKind::TopOne) {
        if (!result.entries.empty() &&
            entry_solves(result.entries.front(), task, task.prompt.size(),
                         eos_token)) {
          ++successes;
        }
      } else {
        for (const DecodeEntry& entry : result.entries) {
          if (entry_solves(entry, task, task.prompt.size(), eos_token)) {
            ++successes;
            break;
          }
        }
      }
    } catch (const Error&) {
      // A blocked or misconfigured task scores 0 without aborting the trial.
    }
  }
  const double n = static_cast<double>(suite.tasks.size());
  out.objective = static_cast<double>(successes) / n;
  out.mean_time_ms = total_ms / n;
  out.mean_expansions = total_expansions / n;
  return out;
}

// ============================================================================
// Search loop
// ============================================================================

OptimizeResult optimize(const OptimizerEnv& env, const SearchSpace& space,
                        const TaskSuite& suite, ProposalStrategy strategy,
                        std::size_t max_iters, std::uint64_t master_seed,
                        std::size_t parallel) {
  if (max_iters < 1) throw InputError("optimize: max_iters must be >= 1");
  validate_space(space);
  if (suite.tasks.empty()) throw InputError("optimize: empty task suite");

  OptimizerEnv run_env = env;
  run_env.termination = apply_task_budgets(env.termination, space);

  // Proposals never depend on objectives, so they can all be drawn up
  // front; this keeps sequential and parallel runs identical.
  Rng propose_rng(derive_seed(master_seed, kProposeStream));
  std::vector<Trial> history;
  for (std::size_t i = 0; i < max_iters; ++i) {
    std::optional<TrialParams> next =
        propose(space, history, strategy, propose_rng);
    if (!next) break;
    Trial stub;
    stub.trial = i;
    stub.params = std::move(*next);
    stub.seed = derive_seed(master_seed, i);
    history.push_back(std::move(stub));
  }

  auto evaluate_at = [&](std::size_t i) {
    Trial scored =
        evaluate_config(run_env, history[i].params, suite, history[i].seed);
    scored.trial = i;
    history[i] = std::move(scored);
  };

  if (parallel <= 1 || history.size() <= 1) {
    for (std::size_t i = 0; i < history.size(); ++i) evaluate_at(i);
  } else {
    std::atomic<std::size_t> cursor{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&]() {
      for (;;) {
        std::size_t i = cursor.fetch_add(1);
        if (i >= history.size()) return;
        try {
          evaluate_at(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    };
    std::vector<std::thread> pool;
    std::size_t threads = std::min(parallel, history.size());
    pool.reserve(threads);
    for (std::size_t i = 0; i < threads; ++i) pool.emplace_back(worker);
    for (std::thread& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
  }

  if (history.empty()) {
    throw InputError("optimize: grid already exhausted, nothing evaluated");
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < history.size(); ++i) {
    const Trial& a = history[i];
    const Trial& b = history[best];
    if (a.objective > b.objective ||
        (a.objective == b.objective && a.mean_time_ms < b.mean_time_ms)) {
      best = i;
    }
  }
  return OptimizeResult{history[best], std::move(history)};
}

}  // namespace treedec
