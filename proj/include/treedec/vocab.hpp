#pragma once

/**
 * Token vocabulary and next-token distributions.
 *
 * A Vocabulary is an ordered list of unique token strings with one
 * distinguished end-of-sequence token. Token ids are indices into that list.
 * A TokenDistribution assigns one probability per vocabulary entry and must
 * sum to one within 1e-9.
 */

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "treedec/errors.hpp"

namespace treedec {

using TokenId = std::uint32_t;

class Vocabulary {
 public:
  /** Validates uniqueness, size >= 2 and eos_index in range. */
  Vocabulary(std::vector<std::string> tokens, std::size_t eos_index);

  /** Convenience: eos given by token string; must be present in tokens. */
  static Vocabulary with_eos_token(std::vector<std::string> tokens,
                                   const std::string& eos_token);

  std::size_t size() const { return tokens_.size(); }
  const std::string& token(TokenId id) const;
  TokenId eos() const { return eos_; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  bool contains(const std::string& token) const;
  /** Throws InputError for unknown token strings. */
  TokenId id_of(const std::string& token) const;

  /** Maps whitespace-separated token strings to ids. */
  std::vector<TokenId> encode(const std::string& text) const;
  /** Concatenation of the token strings (no separator). */
  std::string decode(std::span<const TokenId> ids) const;

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
  TokenId eos_ = 0;
};

/** Probabilities aligned with vocabulary ids. */
using TokenDistribution = std::vector<double>;

/** Throws InputError unless probs has vocab_size entries, all in [0, 1],
 *  summing to one within tolerance. */
void validate_distribution(const TokenDistribution& probs,
                           std::size_t vocab_size, double tolerance = 1e-9,
                           const std::string& what = "distribution");

}  // namespace treedec
