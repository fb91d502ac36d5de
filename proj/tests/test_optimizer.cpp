#include "doctest.h"

#include <memory>
#include <vector>

#include "treedec/optimizer.hpp"

#include "test_support.hpp"

using namespace treedec;
using doctest::Approx;

namespace {

// Sums over {1, 2, +}: "1" is likeliest but "2" and "1+1" hit the target 2.
std::shared_ptr<LookupLm> sum_lm() {
  return LookupLm::from_json_text(R"({
    "vocab": ["1", "2", "+", "</s>"], "eos": "</s>",
    "rows": {"": [0.5, 0.3, 0.1, 0.1]},
    "default": [0.05, 0.05, 0.1, 0.8]
  })", "<test>");
}

OptimizerEnv make_env(std::shared_ptr<LookupLm> lm) {
  OptimizerEnv env;
  env.lm = lm;
  env.termination.min_complete = 1;
  env.termination.max_seq_len = 8;
  env.aggregation.top_n = 5;
  return env;
}

SearchSpace two_beams() {
  SearchSpace space;
  space.kinds = {DecoderKind::BeamSearch};
  space.k_min = 2;
  space.k_max = 4;
  return space;
}

Task make_task(long long pub, long long holdout, ConstraintPtr constraint = nullptr) {
  Task t;
  t.task_constraint = std::move(constraint);
  t.public_target = pub;
  t.holdout_target = holdout;
  return t;
}

}  // namespace

// ============================================================================
// Space bookkeeping
// ============================================================================

TEST_CASE("search spaces are validated") {
  SearchSpace space;
  CHECK_THROWS_AS(validate_space(space), InputError);  // no kinds
  space.kinds = {DecoderKind::BeamSearch};
  CHECK_NOTHROW(validate_space(space));
  space.k_min = 0;
  CHECK_THROWS_AS(validate_space(space), InputError);
  space.k_min = 3;
  space.k_max = 2;
  CHECK_THROWS_AS(validate_space(space), InputError);
  space.k_max = 3;
  space.j_min = 2;
  space.j_max = 1;
  CHECK_THROWS_AS(validate_space(space), InputError);
  space.j_max = 2;
  space.constraint_subsets.clear();
  CHECK_THROWS_AS(validate_space(space), InputError);
}

TEST_CASE("grid size multiplies the axis extents") {
  SearchSpace space;
  space.kinds = {DecoderKind::BeamSearch, DecoderKind::Sampling};
  space.k_min = 1;
  space.k_max = 2;
  space.constraint_subsets = {{}, {"x"}};
  CHECK(grid_size(space) == 8);  // 2 kinds x 2 ks x 1 j x 2 subsets
}

TEST_CASE("power set enumerates subsets in binary counting order") {
  auto subsets = power_set({"x", "y"});
  REQUIRE(subsets.size() == 4);
  CHECK(subsets[0].empty());
  CHECK(subsets[1] == std::vector<std::string>({"x"}));
  CHECK(subsets[2] == std::vector<std::string>({"y"}));
  CHECK(subsets[3] == std::vector<std::string>({"x", "y"}));
  CHECK(power_set({}).size() == 1);
  CHECK_THROWS_AS(power_set(std::vector<std::string>(17, "n")), InputError);
}

// ============================================================================
// Proposals
// ============================================================================

TEST_CASE("grid proposals walk the space with the subset index fastest") {
  SearchSpace space;
  space.kinds = {DecoderKind::BeamSearch, DecoderKind::Sampling};
  space.k_min = 1;
  space.k_max = 2;
  space.j_min = 0;
  space.j_max = 1;
  space.constraint_subsets = {{}, {"x"}};

  Rng rng(1);
  std::vector<Trial> history;
  std::vector<TrialParams> seen;
  while (auto p = propose(space, history, ProposalStrategy::Grid, rng)) {
    seen.push_back(*p);
    Trial t;
    t.params = *p;
    history.push_back(t);
  }
  REQUIRE(seen.size() == 16);
  // Subset varies first, then j, then k, then kind.
  CHECK(seen[0].subset_index == 0);
  CHECK(seen[1].subset_index == 1);
  CHECK(seen[1].constraints == std::vector<std::string>({"x"}));
  CHECK(seen[2].j == 1);
  CHECK(seen[4].k == 2);
  CHECK(seen[8].kind == DecoderKind::Sampling);
  CHECK(seen[0].kind == DecoderKind::BeamSearch);
  // Exhausted: one more proposal yields nothing.
  CHECK_FALSE(propose(space, history, ProposalStrategy::Grid, rng).has_value());
}

TEST_CASE("random proposals avoid history until the space is used up") {
  SearchSpace space;
  space.kinds = {DecoderKind::BeamSearch};
  space.k_min = 1;
  space.k_max = 2;

  Rng rng(3);
  std::vector<Trial> history;
  auto first = propose(space, history, ProposalStrategy::Random, rng);
  REQUIRE(first.has_value());
  Trial t;
  t.params = *first;
  history.push_back(t);

  auto second = propose(space, history, ProposalStrategy::Random, rng);
  REQUIRE(second.has_value());
  CHECK_FALSE(*second == *first);  // two points, so the other one

  t.params = *second;
  history.push_back(t);
  // Fully explored: random proposals fall back to repeats, never nullopt.
  auto third = propose(space, history, ProposalStrategy::Random, rng);
  CHECK(third.has_value());
}

// ============================================================================
// Evaluation
// ============================================================================

TEST_CASE("a trial scores the mean of public-and-holdout task successes") {
  auto lm = sum_lm();
  OptimizerEnv env = make_env(lm);
  TaskSuite suite;
  suite.tasks.push_back(make_task(2, 2));  // solvable: "2"
  suite.tasks.push_back(make_task(2, 7));  // holdout can never match

  TrialParams params;
  params.kind = DecoderKind::BeamSearch;
  params.k = 2;

  Trial trial = evaluate_config(env, params, suite, 5);
  CHECK(trial.objective == Approx(0.5));
  CHECK(trial.seed == 5);
  CHECK(trial.mean_expansions > 0.0);
}

TEST_CASE("wider beams reach completions narrow beams miss") {
  auto lm = sum_lm();
  OptimizerEnv env = make_env(lm);
  // Forbidding the digit 2 leaves "1+1" as the only way to reach the target.
  env.catalogue["no_two"] = std::make_shared<LexicalForbidConstraint>(
      std::vector<std::string>{"2"}, lm->vocab());

  TaskSuite suite;
  suite.tasks.push_back(make_task(2, 2, env.catalogue["no_two"]));

  TrialParams narrow;
  narrow.kind = DecoderKind::BeamSearch;
  narrow.k = 2;
  TrialParams wide = narrow;
  wide.k = 4;

  CHECK(evaluate_config(env, narrow, suite, 5).objective == Approx(0.0));
  CHECK(evaluate_config(env, wide, suite, 5).objective == Approx(1.0));
}

TEST_CASE("a task that throws scores zero without aborting the trial") {
  auto lm = sum_lm();
  OptimizerEnv env = make_env(lm);
  TaskSuite suite;
  Task broken = make_task(2, 2);
  broken.prompt = {99};  // outside the vocabulary
  suite.tasks.push_back(broken);
  suite.tasks.push_back(make_task(2, 2));

  TrialParams params;
  params.kind = DecoderKind::BeamSearch;
  params.k = 2;
  Trial trial = evaluate_config(env, params, suite, 5);
  CHECK(trial.objective == Approx(0.5));
}

TEST_CASE("evaluation rejects unusable inputs") {
  auto lm = sum_lm();
  OptimizerEnv env = make_env(lm);
  TaskSuite suite;
  suite.tasks.push_back(make_task(2, 2));
  TrialParams params;

  TaskSuite empty;
  CHECK_THROWS_AS(evaluate_config(env, params, empty, 5), InputError);

  params.constraints = {"missing"};
  CHECK_THROWS_WITH_AS(evaluate_config(env, params, suite, 5),
                       doctest::Contains("unknown constraint name"), InputError);

  OptimizerEnv no_lm;
  CHECK_THROWS_AS(evaluate_config(no_lm, TrialParams{}, suite, 5), InputError);
}

TEST_CASE("the top-n objective accepts any ranked entry that passes") {
  auto lm = sum_lm();
  OptimizerEnv env = make_env(lm);
  env.termination.max_seq_len = 1;  // stop before anything completes

  TaskSuite suite;
  suite.tasks.push_back(make_task(2, 2));
  TrialParams params;
  params.kind = DecoderKind::BeamSearch;
  params.k = 4;

  // Rank 1 is the unfinished "1", which misses the target; "2" sits below.
  CHECK(evaluate_config(env, params, suite, 5).objective == Approx(0.0));
  env.objective = ObjectiveKind::AnyInTopN;
  CHECK(evaluate_config(env, params, suite, 5).objective == Approx(1.0));
}

TEST_CASE("task budgets overlay the base termination policy") {
  TerminationPolicy base;
  base.min_complete = 3;
  SearchSpace space = two_beams();
  TerminationPolicy same = apply_task_budgets(base, space);
  CHECK(same.min_complete == 3);
  CHECK_FALSE(same.time_limit_ms.has_value());

  space.task_time_limit_ms = 50;
  space.task_expansion_cap = 1000;
  TerminationPolicy capped = apply_task_budgets(base, space);
  CHECK(capped.time_limit_ms == 50);
  CHECK(capped.max_expansions == 1000);
  CHECK(capped.min_complete == 3);
}

// ============================================================================
// The search loop
// ============================================================================

TEST_CASE("grid optimization returns the argmax of its own history") {
  auto lm = sum_lm();
  OptimizerEnv env = make_env(lm);
  env.catalogue["no_two"] = std::make_shared<LexicalForbidConstraint>(
      std::vector<std::string>{"2"}, lm->vocab());

  TaskSuite suite;
  suite.tasks.push_back(make_task(2, 2));
  suite.tasks.push_back(make_task(2, 7));
  suite.tasks.push_back(make_task(2, 2, env.catalogue["no_two"]));

  SearchSpace space = two_beams();  // k in {2, 3, 4}
  OptimizeResult result =
      optimize(env, space, suite, ProposalStrategy::Grid, 10, 77);

  CHECK(result.history.size() == 3);  // exhausted before max_iters
  for (std::size_t i = 0; i < result.history.size(); ++i) {
    CHECK(result.history[i].trial == i);
    CHECK(result.history[i].seed == derive_seed(77, i));
  }

  // Independent re-evaluation agrees with the recorded history.
  std::size_t best = 0;
  for (std::size_t i = 0; i < result.history.size(); ++i) {
    Trial check = evaluate_config(env, result.history[i].params, suite,
                                  result.history[i].seed);
    CHECK(check.objective == Approx(result.history[i].objective));
    if (check.objective > result.history[best].objective) best = i;
  }
  CHECK(result.best.trial == result.history[best].trial);
  // k = 3 and k = 4 both solve task 3 ("1+1" ranks third by raw weight), so
  // the objective ties at 2/3 and the earlier trial wins.
  CHECK(result.best.params.k == 3);
  CHECK(result.best.objective == Approx(2.0 / 3.0));
}

TEST_CASE("parallel optimization reports the same history as sequential") {
  auto lm = sum_lm();
  OptimizerEnv env = make_env(lm);
  TaskSuite suite;
  suite.tasks.push_back(make_task(2, 2));
  suite.tasks.push_back(make_task(3, 3));

  SearchSpace space = two_beams();
  OptimizeResult seq = optimize(env, space, suite, ProposalStrategy::Grid, 10, 9, 1);
  OptimizeResult par = optimize(env, space, suite, ProposalStrategy::Grid, 10, 9, 3);

  REQUIRE(seq.history.size() == par.history.size());
  for (std::size_t i = 0; i < seq.history.size(); ++i) {
    CHECK(seq.history[i].params == par.history[i].params);
    CHECK(seq.history[i].objective == par.history[i].objective);
    CHECK(seq.history[i].seed == par.history[i].seed);
  }
  CHECK(seq.best.trial == par.best.trial);
}

TEST_CASE("random optimization is reproducible and bounded by max_iters") {
  auto lm = sum_lm();
  OptimizerEnv env = make_env(lm);
  TaskSuite suite;
  suite.tasks.push_back(make_task(2, 2));

  SearchSpace space = two_beams();
  space.kinds = {DecoderKind::BeamSearch, DecoderKind::Sampling};

  OptimizeResult a = optimize(env, space, suite, ProposalStrategy::Random, 4, 123);
  OptimizeResult b = optimize(env, space, suite, ProposalStrategy::Random, 4, 123);
  REQUIRE(a.history.size() == 4);
  REQUIRE(b.history.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(a.history[i].params == b.history[i].params);
    CHECK(a.history[i].objective == b.history[i].objective);
  }
}

TEST_CASE("trial records serialize their parameters and outcomes") {
  Trial trial;
  trial.trial = 2;
  trial.params.kind = DecoderKind::Smc;
  trial.params.k = 8;
  trial.params.constraints = {"no_two"};
  trial.objective = 0.75;
  trial.seed = 99;

  nlohmann::json j = trial_to_json(trial);
  CHECK(j["trial"] == 2);
  CHECK(j["params"]["kind"] == "smc");
  CHECK(j["params"]["k"] == 8);
  CHECK(j["params"]["constraints"] == nlohmann::json::array({"no_two"}));
  CHECK(j["objective"] == 0.75);
  CHECK(j["seed"] == 99);
  CHECK(j.contains("mean_time_ms"));
  CHECK(j.contains("mean_expansions"));
}
