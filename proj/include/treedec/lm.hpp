#pragma once

/**
 * Small deterministic language models.
 *
 * A LanguageModel maps a token prefix to an exact next-token distribution
 * over its vocabulary. Models are immutable after construction and hold no
 * per-query mutable state: determinism is part of the contract. Queries may
 * carry an opaque LmState from the previous query on the same prefix minus
 * one token; using or dropping the state never changes the distribution,
 * only the work done to produce it.
 *
 * Three families are provided:
 *  - UniformLm: every token equally likely in every context.
 *  - LookupLm:  explicit conditional rows keyed by context, with a default
 *               row for absent contexts. Loadable from a JSON file.
 *  - NgramLm:   order-n counts with add-k smoothing, trainable from a
 *               corpus and serializable to JSON.
 */

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "treedec/vocab.hpp"

namespace treedec {

/**
 * Opaque incremental-query state. For the n-gram model it is the trailing
 * (order - 1) tokens of the prefix; for the lookup model the full context
 * key. Callers must treat it as a black box.
 */
struct LmState {
  std::vector<TokenId> context;
};

struct LmResult {
  TokenDistribution dist;
  LmState state;
};

class LanguageModel {
 public:
  virtual ~LanguageModel() = default;

  virtual const Vocabulary& vocab() const = 0;

  /**
   * Exact next-token distribution after `tokens`. `state`, when given, must
   * come from a previous query on `tokens` minus its last element; passing
   * nullptr recomputes from scratch with an identical result.
   */
  LmResult next(std::span<const TokenId> tokens,
                const LmState* state = nullptr) const {
    return next_impl(tokens, state);
  }

  /**
   * Element-wise batch of next(); input errors are rethrown with the
   * offending element index prepended.
   */
  std::vector<LmResult> batch_next(
      const std::vector<std::vector<TokenId>>& prefixes) const;

 protected:
  virtual LmResult next_impl(std::span<const TokenId> tokens,
                             const LmState* state) const = 0;

  void check_tokens(std::span<const TokenId> tokens) const;
};

using LmPtr = std::shared_ptr<const LanguageModel>;

// ============================================================================
// Uniform
// ============================================================================

class UniformLm final : public LanguageModel {
 public:
  explicit UniformLm(Vocabulary vocab) : vocab_(std::move(vocab)) {}
  const Vocabulary& vocab() const override { return vocab_; }

 protected:
  LmResult next_impl(std::span<const TokenId> tokens,
                     const LmState* state) const override;

 private:
  Vocabulary vocab_;
};

// ============================================================================
// Lookup table
// ============================================================================

/**
 * File schema:
 *   { "vocab": ["a","b","</s>"], "eos": "</s>",
 *     "rows": { "": [..], "a b": [..] }, "default": [..] }
 * Context keys are token strings joined by a single space; "" is the empty
 * prefix. Every row must have |vocab| entries summing to one within 1e-6.
 */
class LookupLm final : public LanguageModel {
 public:
  LookupLm(Vocabulary vocab,
           std::vector<std::pair<std::vector<TokenId>, TokenDistribution>> rows,
           TokenDistribution default_row);

  static std::shared_ptr<LookupLm> load(const std::string& path);
  static std::shared_ptr<LookupLm> from_json_text(const std::string& text,
                                                  const std::string& origin);

  const Vocabulary& vocab() const override { return vocab_; }

 protected:
  LmResult next_impl(std::span<const TokenId> tokens,
                     const LmState* state) const override;

 private:
  Vocabulary vocab_;
  // Keyed by space-joined token strings; values validated at construction.
  std::unordered_map<std::string, TokenDistribution> rows_;
  TokenDistribution default_row_;

  std::string key_for(std::span<const TokenId> tokens) const;
};

// ============================================================================
// N-gram with add-k smoothing
// ============================================================================

class NgramLm final : public LanguageModel {
 public:
  /**
   * Trains from a corpus of token sequences. Counts transitions whose
   * context is the previous min(order - 1, position) tokens; no implicit
   * end-of-sequence is appended, so eos mass comes from smoothing alone.
   * The vocabulary is the sorted distinct corpus tokens plus the eos token.
   */
  static std::shared_ptr<NgramLm> train(
      const std::vector<std::vector<std::string>>& corpus, std::size_t order,
      double smoothing_k = 1.0, const std::string& eos_token = "</s>");

  /** One whitespace-tokenized sequence per nonblank line. */
  static std::shared_ptr<NgramLm> train_from_file(const std::string& path,
                                                  std::size_t order,
                                                  double smoothing_k = 1.0,
                                                  const std::string& eos_token = "</s>");

  static std::shared_ptr<NgramLm> load(const std::string& path);
  /** Deterministic serialization: identical training inputs give identical bytes. */
  std::string serialize() const;
  void save(const std::string& path) const;

  const Vocabulary& vocab() const override { return vocab_; }

  std::size_t order() const { return order_; }
  double smoothing() const { return smoothing_k_; }

 protected:
  LmResult next_impl(std::span<const TokenId> tokens,
                     const LmState* state) const override;

 private:
  NgramLm(Vocabulary vocab, std::size_t order, double smoothing_k);

  Vocabulary vocab_;
  std::size_t order_;
  double smoothing_k_;
  // context key (space-joined trailing tokens) -> per-token counts.
  std::unordered_map<std::string, std::vector<std::uint64_t>> counts_;

  std::string context_key(std::span<const TokenId> tokens) const;
};

}  // namespace treedec
