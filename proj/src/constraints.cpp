#include "treedec/constraints.hpp"

#include <algorithm>

namespace treedec {

namespace {

/** Downcasts a prior state, checking ownership and position. */
template <typename StateT>
const StateT& resolve_prior(const Constraint& owner, const ConstraintStatePtr& prior,
                            std::span<const TokenId> tokens,
                            const ConstraintStatePtr& initial) {
  const ConstraintStatePtr& base = prior ? prior : initial;
  const auto* typed = dynamic_cast<const StateT*>(base.get());
  if (!typed) {
    throw ContractViolation(owner.name() + ": state/prefix mismatch (foreign state)");
  }
  if (typed->consumed > tokens.size()) {
    throw ContractViolation(owner.name() + ": state/prefix mismatch (state ahead of sequence)");
  }
  return *typed;
}

/** True when position i holds generated content (not prompt, not the final
 *  end-of-sequence marker). */
inline bool is_content(std::size_t i, std::size_t prefix_length,
                       std::size_t size, bool is_finished) {
  if (i < prefix_length) return false;
  if (is_finished && i + 1 == size) return false;
  return true;
}

}  // namespace

// ============================================================================
// CfgPrefix
// ============================================================================

namespace {
struct CfgState : ConstraintStateBase {
  EarleyChart chart;
  bool dead = false;
  explicit CfgState(EarleyChart c) : chart(std::move(c)) {}
};
}  // namespace

CfgPrefixConstraint::CfgPrefixConstraint(std::shared_ptr<const Grammar> grammar,
                                         Vocabulary vocab)
    : grammar_(std::move(grammar)), vocab_(std::move(vocab)) {
  token_terminal_.resize(vocab_.size());
  for (std::size_t t = 0; t < vocab_.size(); ++t) {
    token_terminal_[t] = grammar_->terminal_index(vocab_.token(static_cast<TokenId>(t)));
  }
  for (const std::string& term : grammar_->terminals()) {
    if (!vocab_.contains(term)) {
      throw InputError("grammar terminal '" + term + "' is not a vocabulary token");
    }
  }
}

ConstraintStatePtr CfgPrefixConstraint::initial_state() const {
  return std::make_shared<CfgState>(EarleyChart(grammar_));
}

ConstraintOutcome CfgPrefixConstraint::evaluate(std::span<const TokenId> tokens,
                                                std::size_t prefix_length,
                                                const ConstraintStatePtr& prior,
                                                bool is_finished) const {
  ConstraintStatePtr initial = prior ? nullptr : initial_state();
  const CfgState& from = resolve_prior<CfgState>(*this, prior, tokens, initial);
  auto next = std::make_shared<CfgState>(from);
  for (std::size_t i = from.consumed; i < tokens.size(); ++i) {
    if (is_content(i, prefix_length, tokens.size(), is_finished) && !next->dead) {
      const auto& term = token_terminal_[tokens[i]];
      if (!term) {
        next->dead = true;
      } else {
        next->chart = next->chart.advanced(*term);
        if (next->chart.dead()) next->dead = true;
      }
    }
    next->consumed = i + 1;
  }
  double score;
  if (next->dead) {
    score = 0.0;
  } else if (is_finished) {
    score = next->chart.verdict() == PrefixVerdict::Complete ? 1.0 : 0.0;
  } else {
    score = next->chart.verdict() == PrefixVerdict::Dead ? 0.0 : 1.0;
  }
  return {score, std::move(next)};
}

// ============================================================================
// LexicalForbid
// ============================================================================

namespace {
struct LexState : ConstraintStateBase {
  std::string tail;
  bool violated = false;
};
}  // namespace

LexicalForbidConstraint::LexicalForbidConstraint(std::vector<std::string> forbidden,
                                                 Vocabulary vocab)
    : forbidden_(std::move(forbidden)), vocab_(std::move(vocab)), window_(0) {
  if (forbidden_.empty()) throw InputError("lexical_forbid: no substrings given");
  for (const auto& f : forbidden_) {
    if (f.empty()) throw InputError("lexical_forbid: empty substring");
    window_ = std::max(window_, f.size() - 1);
  }
}

ConstraintStatePtr LexicalForbidConstraint::initial_state() const {
  return std::make_shared<LexState>();
}

ConstraintOutcome LexicalForbidConstraint::evaluate(std::span<const TokenId> tokens,
                                                    std::size_t prefix_length,
                                                    const ConstraintStatePtr& prior,
                                                    bool is_finished) const {
  ConstraintStatePtr initial = prior ? nullptr : initial_state();
  const LexState& from = resolve_prior<LexState>(*this, prior, tokens, initial);
  auto next = std::make_shared<LexState>(from);
  for (std::size_t i = from.consumed; i < tokens.size(); ++i) {
    if (is_content(i, prefix_length, tokens.size(), is_finished) && !next->violated) {
      std::string window = next->tail + vocab_.token(tokens[i]);
      for (const auto& f : forbidden_) {
        if (window.find(f) != std::string::npos) {
          next->violated = true;
          break;
        }
      }
      // Keep only the chars a future match could still need.
      if (window.size() > window_) window.erase(0, window.size() - window_);
      next->tail = std::move(window);
    }
    next->consumed = i + 1;
  }
  return {next->violated ? 0.0 : 1.0, std::move(next)};
}

// ============================================================================
// StructuralPrefix
// ============================================================================

namespace {
struct StructState : ConstraintStateBase {
  std::size_t content = 0;
  bool violated = false;
};
}  // namespace

StructuralPrefixConstraint::StructuralPrefixConstraint(
    std::vector<std::string> required_prefix,
    std::vector<std::string> forbidden_after, Vocabulary vocab)
    : required_(std::move(required_prefix)),
      forbidden_after_(forbidden_after.begin(), forbidden_after.end()),
      vocab_(std::move(vocab)) {
  if (required_.empty() && forbidden_after_.empty()) {
    throw InputError("structural_prefix: nothing to enforce");
  }
}

ConstraintStatePtr StructuralPrefixConstraint::initial_state() const {
  return std::make_shared<StructState>();
}

ConstraintOutcome StructuralPrefixConstraint::evaluate(
    std::span<const TokenId> tokens, std::size_t prefix_length,
    const ConstraintStatePtr& prior, bool is_finished) const {
  ConstraintStatePtr initial = prior ? nullptr : initial_state();
  const StructState& from = resolve_prior<StructState>(*this, prior, tokens, initial);
  auto next = std::make_shared<StructState>(from);
  for (std::size_t i = from.consumed; i < tokens.size(); ++i) {
    if (is_content(i, prefix_length, tokens.size(), is_finished) && !next->violated) {
      const std::string& tok = vocab_.token(tokens[i]);
      if (next->content < required_.size()) {
        if (tok != required_[next->content]) next->violated = true;
      } else if (forbidden_after_.count(tok)) {
        next->violated = true;
      }
      next->content += 1;
    }
    next->consumed = i + 1;
  }
  double score = next->violated ? 0.0 : 1.0;
  // A finished sequence must contain the full opening.
  if (is_finished && next->content < required_.size()) score = 0.0;
  return {score, std::move(next)};
}

// ============================================================================
// CompletionPredicate
// ============================================================================

namespace {
struct PredicateState : ConstraintStateBase {
  std::string text;
};
}  // namespace

CompletionPredicateConstraint::CompletionPredicateConstraint(long long target,
                                                             Vocabulary vocab)
    : target_(target), vocab_(std::move(vocab)) {}

ConstraintStatePtr CompletionPredicateConstraint::initial_state() const {
  return std::make_shared<PredicateState>();
}

ConstraintOutcome CompletionPredicateConstraint::evaluate(
    std::span<const TokenId> tokens, std::size_t prefix_length,
    const ConstraintStatePtr& prior, bool is_finished) const {
  ConstraintStatePtr initial = prior ? nullptr : initial_state();
  const PredicateState& from = resolve_prior<PredicateState>(*this, prior, tokens, initial);
  auto next = std::make_shared<PredicateState>(from);
  for (std::size_t i = from.consumed; i < tokens.size(); ++i) {
    if (is_content(i, prefix_length, tokens.size(), is_finished)) {
      next->text += vocab_.token(tokens[i]);
    }
    next->consumed = i + 1;
  }
  // The predicate only fires on finished sequences; unfinished ones are
  // neutral so that search can reach a completion before being judged.
  double score = is_finished ? completion_predicate_eval(target_, next->text) : 1.0;
  return {score, std::move(next)};
}

// ============================================================================
// MaxLength
// ============================================================================

namespace {
struct LengthState : ConstraintStateBase {
  std::size_t content = 0;
};
}  // namespace

MaxLengthConstraint::MaxLengthConstraint(std::size_t max_tokens)
    : max_tokens_(max_tokens) {
  if (max_tokens_ == 0) throw InputError("max_length: max_tokens must be >= 1");
}

ConstraintStatePtr MaxLengthConstraint::initial_state() const {
  return std::make_shared<LengthState>();
}

ConstraintOutcome MaxLengthConstraint::evaluate(std::span<const TokenId> tokens,
                                                std::size_t prefix_length,
                                                const ConstraintStatePtr& prior,
                                                bool is_finished) const {
  ConstraintStatePtr initial = prior ? nullptr : initial_state();
  const LengthState& from = resolve_prior<LengthState>(*this, prior, tokens, initial);
  auto next = std::make_shared<LengthState>(from);
  for (std::size_t i = from.consumed; i < tokens.size(); ++i) {
    if (is_content(i, prefix_length, tokens.size(), is_finished)) next->content += 1;
    next->consumed = i + 1;
  }
  return {next->content > max_tokens_ ? 0.0 : 1.0, std::move(next)};
}

// ============================================================================
// Product of experts
// ============================================================================

namespace {
struct ProductState : ConstraintStateBase {
  std::vector<ConstraintStatePtr> member_states;
};
}  // namespace

ProductConstraint::ProductConstraint(std::vector<ConstraintPtr> members)
    : members_(std::move(members)) {
  for (const auto& m : members_) {
    if (!m) throw InputError("product: null member constraint");
  }
}

std::string ProductConstraint::name() const {
  std::string out = "product(";
  for (std::size_t i = 0; i < members_.size(); ++i) {
    if (i > 0) out += ", ";
    out += members_[i]->name();
  }
  return out + ")";
}

ConstraintStatePtr ProductConstraint::initial_state() const {
  auto st = std::make_shared<ProductState>();
  st->member_states.reserve(members_.size());
  for (const auto& m : members_) st->member_states.push_back(m->initial_state());
  return st;
}

ConstraintOutcome ProductConstraint::evaluate(std::span<const TokenId> tokens,
                                              std::size_t prefix_length,
                                              const ConstraintStatePtr& prior,
                                              bool is_finished) const {
  ConstraintStatePtr initial = prior ? nullptr : initial_state();
  const ProductState& from = resolve_prior<ProductState>(*this, prior, tokens, initial);
  if (from.member_states.size() != members_.size()) {
    throw ContractViolation("product: state/prefix mismatch (member count)");
  }
  auto next = std::make_shared<ProductState>();
  next->member_states.reserve(members_.size());
  double score = 1.0;  // empty product
  for (std::size_t i = 0; i < members_.size(); ++i) {
    ConstraintOutcome out = members_[i]->evaluate(tokens, prefix_length,
                                                  from.member_states[i], is_finished);
    score *= out.score;
    next->member_states.push_back(std::move(out.state));
  }
  next->consumed = tokens.size();
  return {score, std::move(next)};
}

ConstraintPtr compose_product(std::vector<ConstraintPtr> members) {
  return std::make_shared<ProductConstraint>(std::move(members));
}

// ============================================================================
// Arithmetic predicate
// ============================================================================

std::optional<long long> eval_arithmetic(const std::string& text) {
  std::size_t pos = 0;
  auto parse_int = [&]() -> std::optional<long long> {
    std::size_t start = pos;
    while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') ++pos;
    if (pos == start) return std::nullopt;
    long long value = 0;
    for (std::size_t i = start; i < pos; ++i) value = value * 10 + (text[i] - '0');
    return value;
  };
  auto first = parse_int();
  if (!first) return std::nullopt;
  long long sum = *first;
  while (pos < text.size()) {
    if (text[pos] != '+') return std::nullopt;
    ++pos;
    auto term = parse_int();
    if (!term) return std::nullopt;
    sum += *term;
  }
  return sum;
}

double completion_predicate_eval(long long target, const std::string& decoded) {
  auto value = eval_arithmetic(decoded);
  return (value && *value == target) ? 1.0 : 0.0;
}

}  // namespace treedec
