#pragma once

/**
 * Constraint functions over token sequences.
 *
 * A constraint maps a sequence to a score in [0, 1]; 0 vetoes the sequence.
 * Constraints only judge the generated part: tokens before `prefix_length`
 * are skipped, and when `is_finished` is true the final token is the
 * end-of-sequence marker and is excluded from the content as well.
 *
 * Evaluation is incremental: `prior` must be the initial state or a state
 * this constraint produced for a prefix of `tokens`; the constraint catches
 * up from that position. Chained evaluation yields exactly the same score
 * as evaluating the full sequence from the initial state.
 *
 * Scores are multiplied by compose_product(); any member scoring 0 vetoes
 * the product, and the empty product scores 1. A score of 0 is absorbing:
 * the engine never extends a vetoed sequence.
 */

#include <cstdint>
#include <memory>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "treedec/grammar.hpp"
#include "treedec/vocab.hpp"

namespace treedec {

struct ConstraintStateBase {
  std::size_t consumed = 0;
  virtual ~ConstraintStateBase() = default;
};
using ConstraintStatePtr = std::shared_ptr<const ConstraintStateBase>;

struct ConstraintOutcome {
  double score;
  ConstraintStatePtr state;
};

class Constraint {
 public:
  virtual ~Constraint() = default;
  virtual std::string name() const = 0;
  virtual ConstraintStatePtr initial_state() const = 0;
  virtual ConstraintOutcome evaluate(std::span<const TokenId> tokens,
                                     std::size_t prefix_length,
                                     const ConstraintStatePtr& prior,
                                     bool is_finished) const = 0;
};
using ConstraintPtr = std::shared_ptr<const Constraint>;

/** Grammar prefix viability: 1 while the generated part can still derive a
 *  sentence (or is one); finished sequences must parse completely. */
class CfgPrefixConstraint final : public Constraint {
 public:
  CfgPrefixConstraint(std::shared_ptr<const Grammar> grammar, Vocabulary vocab);
  std::string name() const override { return "cfg_prefix"; }
  ConstraintStatePtr initial_state() const override;
  ConstraintOutcome evaluate(std::span<const TokenId> tokens,
                             std::size_t prefix_length,
                             const ConstraintStatePtr& prior,
                             bool is_finished) const override;

 private:
  std::shared_ptr<const Grammar> grammar_;
  Vocabulary vocab_;
  std::vector<std::optional<std::uint32_t>> token_terminal_;
};

/** Vetoes sequences whose generated text contains a forbidden substring,
 *  including substrings spanning token boundaries. */
class LexicalForbidConstraint final : public Constraint {
 public:
  LexicalForbidConstraint(std::vector<std::string> forbidden, Vocabulary vocab);
  std::string name() const override { return "lexical_forbid"; }
  ConstraintStatePtr initial_state() const override;
  ConstraintOutcome evaluate(std::span<const TokenId> tokens,
                             std::size_t prefix_length,
                             const ConstraintStatePtr& prior,
                             bool is_finished) const override;

 private:
  std::vector<std::string> forbidden_;
  Vocabulary vocab_;
  std::size_t window_;  // longest forbidden substring minus one
};

/** Generated part must start with the required opening tokens; after the
 *  opening, tokens from the forbidden set are vetoed. */
class StructuralPrefixConstraint final : public Constraint {
 public:
  StructuralPrefixConstraint(std::vector<std::string> required_prefix,
                             std::vector<std::string> forbidden_after,
                             Vocabulary vocab);
  std::string name() const override { return "structural_prefix"; }
  ConstraintStatePtr initial_state() const override;
  ConstraintOutcome evaluate(std::span<const TokenId> tokens,
                             std::size_t prefix_length,
                             const ConstraintStatePtr& prior,
                             bool is_finished) const override;

 private:
  std::vector<std::string> required_;
  std::set<std::string> forbidden_after_;
  Vocabulary vocab_;
};

/** Scores 1 for every unfinished sequence; a finished sequence must decode
 *  to an arithmetic sum evaluating to the target. */
class CompletionPredicateConstraint final : public Constraint {
 public:
  CompletionPredicateConstraint(long long target, Vocabulary vocab);
  std::string name() const override { return "completion_predicate"; }
  ConstraintStatePtr initial_state() const override;
  ConstraintOutcome evaluate(std::span<const TokenId> tokens,
                             std::size_t prefix_length,
                             const ConstraintStatePtr& prior,
                             bool is_finished) const override;
  long long target() const { return target_; }

 private:
  long long target_;
  Vocabulary vocab_;
};

/** Vetoes sequences whose generated part exceeds max_tokens content tokens. */
class MaxLengthConstraint final : public Constraint {
 public:
  explicit MaxLengthConstraint(std::size_t max_tokens);
  std::string name() const override { return "max_length"; }
  ConstraintStatePtr initial_state() const override;
  ConstraintOutcome evaluate(std::span<const TokenId> tokens,
                             std::size_t prefix_length,
                             const ConstraintStatePtr& prior,
                             bool is_finished) const override;

 private:
  std::size_t max_tokens_;
};

/** Product of experts: scores multiply, states advance member-wise. */
class ProductConstraint final : public Constraint {
 public:
  explicit ProductConstraint(std::vector<ConstraintPtr> members);
  std::string name() const override;
  ConstraintStatePtr initial_state() const override;
  ConstraintOutcome evaluate(std::span<const TokenId> tokens,
                             std::size_t prefix_length,
                             const ConstraintStatePtr& prior,
                             bool is_finished) const override;
  const std::vector<ConstraintPtr>& members() const { return members_; }

 private:
  std::vector<ConstraintPtr> members_;
};

/** Builds the product constraint; the composite is itself a constraint. */
ConstraintPtr compose_product(std::vector<ConstraintPtr> members);

/** Sum-of-nonnegative-integers evaluator: "3+4" -> 7. Returns nullopt for
 *  anything that does not match `int ('+' int)*`. */
std::optional<long long> eval_arithmetic(const std::string& text);

/** 1 iff the decoded sequence parses as an arithmetic expression evaluating
 *  to the target, else 0. */
double completion_predicate_eval(long long target, const std::string& decoded);

}  // namespace treedec
