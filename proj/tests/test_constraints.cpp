#include "doctest.h"

#include <vector>

#include "treedec/constraints.hpp"
#include "treedec/grammar.hpp"

#include "test_support.hpp"

using namespace treedec;

namespace {

Vocabulary abc_vocab() {
  return Vocabulary::with_eos_token({"a", "b", "c", "</s>"}, "</s>");
}

std::vector<TokenId> seq(const Vocabulary& v, const std::string& text) {
  return v.encode(text);
}

double score_of(const Constraint& c, const std::vector<TokenId>& tokens,
                std::size_t prefix_length, bool finished) {
  return c.evaluate(tokens, prefix_length, nullptr, finished).score;
}

/** Chained one-token-at-a-time evaluation must match batch evaluation. */
void check_incremental(const Constraint& c, const std::vector<TokenId>& tokens,
                       std::size_t prefix_length, bool finished) {
  ConstraintStatePtr state = nullptr;
  double chained = 0.0;
  for (std::size_t len = 1; len <= tokens.size(); ++len) {
    bool fin = finished && len == tokens.size();
    std::span<const TokenId> view(tokens.data(), len);
    ConstraintOutcome out = c.evaluate(view, prefix_length, state, fin);
    CHECK(out.state->consumed == len);
    state = out.state;
    chained = out.score;
  }
  CHECK(chained == score_of(c, tokens, prefix_length, finished));
}

}  // namespace

// ============================================================================
// Grammar prefix constraint
// ============================================================================

TEST_CASE("grammar constraint scores viable prefixes and complete sentences") {
  auto v = abc_vocab();
  CfgPrefixConstraint c(Grammar::load(fixture_path("g1.bnf")), v);

  CHECK(score_of(c, seq(v, "a b"), 0, false) == 1.0);
  CHECK(score_of(c, seq(v, "a a b"), 0, false) == 1.0);
  CHECK(score_of(c, seq(v, "b a"), 0, false) == 0.0);
  CHECK(score_of(c, seq(v, "a b c c"), 0, false) == 0.0);

  // Finished sequences must parse completely, not just viably.
  CHECK(score_of(c, seq(v, "a b </s>"), 0, true) == 0.0);
  CHECK(score_of(c, seq(v, "a b c </s>"), 0, true) == 1.0);
  CHECK(score_of(c, seq(v, "</s>"), 0, true) == 1.0);  // empty sentence
}

TEST_CASE("grammar constraint skips the prompt and the end marker") {
  auto v = abc_vocab();
  CfgPrefixConstraint c(Grammar::load(fixture_path("g1.bnf")), v);

  // "c c" would be dead as content, but here it is prompt.
  auto tokens = seq(v, "c c a b c </s>");
  CHECK(c.evaluate(tokens, 2, nullptr, true).score == 1.0);
}

TEST_CASE("grammar constraint kills tokens outside the terminal alphabet") {
  auto v = abc_vocab();
  CfgPrefixConstraint c(Grammar::load(fixture_path("g1.bnf")), v);
  // "</s>" mid-sequence maps to no grammar terminal.
  CHECK(score_of(c, seq(v, "a </s> b"), 0, false) == 0.0);
}

TEST_CASE("grammar constraint requires its terminals in the vocabulary") {
  Vocabulary small = Vocabulary::with_eos_token({"a", "b", "</s>"}, "</s>");
  CHECK_THROWS_WITH_AS(
      CfgPrefixConstraint(Grammar::load(fixture_path("g1.bnf")), small),
      doctest::Contains("grammar terminal 'c'"), InputError);
}

TEST_CASE("grammar constraint evaluates incrementally") {
  auto v = abc_vocab();
  CfgPrefixConstraint c(Grammar::load(fixture_path("g1.bnf")), v);
  check_incremental(c, seq(v, "a a b b c c"), 0, false);
  check_incremental(c, seq(v, "a b c </s>"), 0, true);
  check_incremental(c, seq(v, "c a b"), 1, false);
  check_incremental(c, seq(v, "b a c"), 0, false);  // stays dead once dead
}

// ============================================================================
// Prior-state contract
// ============================================================================

TEST_CASE("foreign and out-of-position states are rejected") {
  auto v = abc_vocab();
  CfgPrefixConstraint cfg(Grammar::load(fixture_path("g1.bnf")), v);
  LexicalForbidConstraint lex({"b"}, v);

  auto tokens = seq(v, "a b");
  auto lex_state = lex.evaluate(tokens, 0, nullptr, false).state;
  CHECK_THROWS_WITH_AS(cfg.evaluate(tokens, 0, lex_state, false),
                       doctest::Contains("foreign state"), ContractViolation);

  auto ahead = cfg.evaluate(tokens, 0, nullptr, false).state;
  std::span<const TokenId> shorter(tokens.data(), 1);
  CHECK_THROWS_WITH_AS(cfg.evaluate(shorter, 0, ahead, false),
                       doctest::Contains("state ahead of sequence"),
                       ContractViolation);
}

// ============================================================================
// Lexical forbid
// ============================================================================

TEST_CASE("forbidden substrings are detected across token boundaries") {
  auto v = abc_vocab();
  LexicalForbidConstraint c({"bc"}, v);
  CHECK(score_of(c, seq(v, "a b"), 0, false) == 1.0);
  CHECK(score_of(c, seq(v, "b c"), 0, false) == 0.0);
  CHECK(score_of(c, seq(v, "a b c"), 0, false) == 0.0);
  // Prompt chars do not join with content chars.
  CHECK(score_of(c, seq(v, "b c"), 1, false) == 1.0);
  // Violations are permanent.
  check_incremental(c, seq(v, "a b c a"), 0, false);
  check_incremental(c, seq(v, "a a b </s>"), 0, true);
}

TEST_CASE("lexical forbid rejects degenerate substring lists") {
  auto v = abc_vocab();
  CHECK_THROWS_AS(LexicalForbidConstraint({}, v), InputError);
  CHECK_THROWS_AS(LexicalForbidConstraint({""}, v), InputError);
}

// ============================================================================
// Structural prefix
// ============================================================================

TEST_CASE("structural constraint enforces the opening and later vetoes") {
  auto v = abc_vocab();
  StructuralPrefixConstraint c({"a", "b"}, {"c"}, v);
  CHECK(score_of(c, seq(v, "a"), 0, false) == 1.0);
  CHECK(score_of(c, seq(v, "a b"), 0, false) == 1.0);
  CHECK(score_of(c, seq(v, "a c"), 0, false) == 0.0);
  CHECK(score_of(c, seq(v, "b"), 0, false) == 0.0);
  CHECK(score_of(c, seq(v, "a b a a"), 0, false) == 1.0);
  CHECK(score_of(c, seq(v, "a b c"), 0, false) == 0.0);
  // A finished sequence must contain the whole opening.
  CHECK(score_of(c, seq(v, "a </s>"), 0, true) == 0.0);
  CHECK(score_of(c, seq(v, "a b </s>"), 0, true) == 1.0);
  check_incremental(c, seq(v, "a b a c"), 0, false);
  CHECK_THROWS_AS(StructuralPrefixConstraint({}, {}, v), InputError);
}

// ============================================================================
// Completion predicate
// ============================================================================

TEST_CASE("arithmetic evaluator accepts sums of nonnegative integers") {
  CHECK(eval_arithmetic("12") == 12);
  CHECK(eval_arithmetic("3+4") == 7);
  CHECK(eval_arithmetic("1+2+3") == 6);
  CHECK(eval_arithmetic("007") == 7);
  CHECK_FALSE(eval_arithmetic("").has_value());
  CHECK_FALSE(eval_arithmetic("+3").has_value());
  CHECK_FALSE(eval_arithmetic("3+").has_value());
  CHECK_FALSE(eval_arithmetic("3++4").has_value());
  CHECK_FALSE(eval_arithmetic("3-4").has_value());
  CHECK_FALSE(eval_arithmetic("a").has_value());
  CHECK(completion_predicate_eval(7, "3+4") == 1.0);
  CHECK(completion_predicate_eval(8, "3+4") == 0.0);
  CHECK(completion_predicate_eval(5, "x") == 0.0);
}

TEST_CASE("completion predicate is neutral until the sequence finishes") {
  Vocabulary v = Vocabulary::with_eos_token({"1", "2", "+", "</s>"}, "</s>");
  CompletionPredicateConstraint c(2, v);
  CHECK(c.target() == 2);
  CHECK(score_of(c, seq(v, "+"), 0, false) == 1.0);  // unfinished: anything goes
  CHECK(score_of(c, seq(v, "1 + 1 </s>"), 0, true) == 1.0);
  CHECK(score_of(c, seq(v, "2 </s>"), 0, true) == 1.0);
  CHECK(score_of(c, seq(v, "1 + 2 </s>"), 0, true) == 0.0);
  CHECK(score_of(c, seq(v, "+ </s>"), 0, true) == 0.0);
  // Prompt text does not count toward the expression.
  CHECK(c.evaluate(seq(v, "1 2 </s>"), 1, nullptr, true).score == 1.0);
  check_incremental(c, seq(v, "1 + 1 </s>"), 0, true);
}

// ============================================================================
// Max length
// ============================================================================

TEST_CASE("length cap counts only generated content") {
  auto v = abc_vocab();
  MaxLengthConstraint c(2);
  CHECK(score_of(c, seq(v, "a b"), 0, false) == 1.0);
  CHECK(score_of(c, seq(v, "a b c"), 0, false) == 0.0);
  CHECK(c.evaluate(seq(v, "a b c"), 1, nullptr, false).score == 1.0);
  CHECK(score_of(c, seq(v, "a b </s>"), 0, true) == 1.0);
  check_incremental(c, seq(v, "a b c a"), 0, false);
  CHECK_THROWS_AS(MaxLengthConstraint(0), InputError);
}

// ============================================================================
// Product composition
// ============================================================================

TEST_CASE("product multiplies member scores and advances member states") {
  auto v = abc_vocab();
  auto cfg = std::make_shared<CfgPrefixConstraint>(
      Grammar::load(fixture_path("g1.bnf")), v);
  auto cap = std::make_shared<MaxLengthConstraint>(3);
  auto product = compose_product({cfg, cap});

  CHECK(product->name() == "product(cfg_prefix, max_length)");
  CHECK(score_of(*product, seq(v, "a b c"), 0, false) == 1.0);
  CHECK(score_of(*product, seq(v, "a a b b"), 0, false) == 0.0);  // too long
  CHECK(score_of(*product, seq(v, "b a"), 0, false) == 0.0);      // dead prefix
  check_incremental(*product, seq(v, "a b c </s>"), 0, true);

  // Foreign states are caught at the composite level too.
  auto lex_state =
      LexicalForbidConstraint({"b"}, v).evaluate(seq(v, "a"), 0, nullptr, false).state;
  CHECK_THROWS_AS(product->evaluate(seq(v, "a"), 0, lex_state, false),
                  ContractViolation);
}

TEST_CASE("empty product scores one") {
  auto v = abc_vocab();
  auto product = compose_product({});
  CHECK(score_of(*product, seq(v, "a b"), 0, false) == 1.0);
  CHECK(score_of(*product, seq(v, "a </s>"), 0, true) == 1.0);
}
