#include "treedec/vocab.hpp"

#include <cmath>
#include <sstream>

namespace treedec {

Vocabulary::Vocabulary(std::vector<std::string> tokens, std::size_t eos_index)
    : tokens_(std::move(tokens)) {
  if (tokens_.size() < 2) {
    throw InputError("vocabulary needs at least two tokens (one content token plus eos)");
  }
  if (eos_index >= tokens_.size()) {
    throw InputError("eos index " + std::to_string(eos_index) + " out of range");
  }
  eos_ = static_cast<TokenId>(eos_index);
  index_.reserve(tokens_.size());
  for (std::size_t i = 0; i < tokens_.size(); ++i) {
    if (tokens_[i].empty()) {
      throw InputError("vocabulary token " + std::to_string(i) + " is empty");
    }
    auto [_, inserted] = index_.emplace(tokens_[i], static_cast<TokenId>(i));
    if (!inserted) {
      throw InputError("duplicate vocabulary token: " + tokens_[i]);
    }
  }
}

Vocabulary Vocabulary::with_eos_token(std::vector<std::string> tokens,
                                      const std::string& eos_token) {
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i] == eos_token) return Vocabulary(std::move(tokens), i);
  }
  throw InputError("eos token '" + eos_token + "' not present in vocabulary");
}

const std::string& Vocabulary::token(TokenId id) const {
  if (id >= tokens_.size()) {
    throw InputError("token id " + std::to_string(id) + " out of range");
  }
  return tokens_[id];
}

bool Vocabulary::contains(const std::string& token) const {
  return index_.count(token) != 0;
}

TokenId Vocabulary::id_of(const std::string& token) const {
  auto it = index_.find(token);
  if (it == index_.end()) {
    throw InputError("unknown token: '" + token + "'");
  }
  return it->second;
}

std::vector<TokenId> Vocabulary::encode(const std::string& text) const {
  std::vector<TokenId> out;
  std::istringstream in(text);
  std::string tok;
  while (in >> tok) out.push_back(id_of(tok));
  return out;
}

std::string Vocabulary::decode(std::span<const TokenId> ids) const {
  std::string out;
  for (TokenId id : ids) out += token(id);
  return out;
}

void validate_distribution(const TokenDistribution& probs,
                           std::size_t vocab_size, double tolerance,
                           const std::string& what) {
  if (probs.size() != vocab_size) {
    throw InputError(what + ": expected " + std::to_string(vocab_size) +
                     " probabilities, got " + std::to_string(probs.size()));
  }
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || p > 1.0 + tolerance) {
      throw InputError(what + ": probability out of [0, 1]");
    }
    sum += p;
  }
  if (std::abs(sum - 1.0) > tolerance) {
    throw InputError(what + ": probabilities sum to " + std::to_string(sum) +
                     ", expected 1");
  }
}

}  // namespace treedec
