#include "treedec/oracle.hpp"

#include <algorithm>
#include <cmath>

namespace treedec {

SequenceProbMap SequenceDistribution::normalized() const {
  SequenceProbMap out;
  if (retained_mass <= 0.0) return out;
  for (const auto& [seq, mass] : masses) out[seq] = mass / retained_mass;
  return out;
}

namespace {

struct Enumerator {
  const LanguageModel& lm;
  const ConstraintPtr& phi;
  std::size_t max_len;
  std::size_t prompt_length;
  TokenId eos;
  std::uint64_t visit_budget;
  std::uint64_t visits = 0;
  SequenceDistribution out;

  void walk(std::vector<TokenId>& prefix, double mass,
            const ConstraintStatePtr& state) {
    if (++visits > visit_budget) {
      double estimate = std::pow(static_cast<double>(lm.vocab().size()),
                                 static_cast<double>(max_len));
      throw CapExceeded("enumeration visit budget exhausted", estimate);
    }
    TokenDistribution dist = lm.next(prefix).dist;
    out.lm_queries += 1;
    for (TokenId t = 0; t < dist.size(); ++t) {
      if (dist[t] <= 0.0) continue;
      prefix.push_back(t);
      double score = 1.0;
      ConstraintStatePtr next_state;
      if (phi) {
        ConstraintOutcome outcome =
            phi->evaluate(prefix, prompt_length, state, t == eos);
        score = outcome.score;
        next_state = std::move(outcome.state);
      }
      double m = mass * dist[t] * score;
      if (m > 0.0) {
        if (t == eos) {
          out.masses[prefix] += m;
          out.retained_mass += m;
        } else if (prefix.size() >= max_len) {
          out.lost_mass += m;  // viable but cut off at the cap
        } else {
          walk(prefix, m, next_state);
        }
      }
      prefix.pop_back();
    }
  }
};

}  // namespace

SequenceDistribution enumerate_constrained(const LanguageModel& lm,
                                           const ConstraintPtr& phi,
                                           std::size_t max_len,
                                           const std::vector<TokenId>& prompt,
                                           std::uint64_t visit_budget) {
  if (max_len <= prompt.size()) {
    throw InputError("enumeration cap must exceed the prompt length");
  }
  for (TokenId t : prompt) {
    if (t >= lm.vocab().size()) {
      throw InputError("prompt token id " + std::to_string(t) +
                       " outside the vocabulary");
    }
  }
  Enumerator e{lm,           phi,          max_len, prompt.size(),
               lm.vocab().eos(), visit_budget, 0,       {}};
  std::vector<TokenId> prefix = prompt;
  e.walk(prefix, 1.0, nullptr);
  return std::move(e.out);
}

std::vector<std::pair<std::vector<TokenId>, double>> exact_top_k(
    const SequenceDistribution& dist, std::size_t k) {
  std::vector<std::pair<std::vector<TokenId>, double>> ranked(
      dist.masses.begin(), dist.masses.end());
  // The map is already in lexicographic order; a stable sort on mass keeps
  // that order for ties.
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  if (ranked.size() > k) ranked.resize(k);
  if (dist.retained_mass > 0.0) {
    for (auto& [seq, mass] : ranked) mass /= dist.retained_mass;
  }
  return ranked;
}

double total_variation(const SequenceProbMap& p, const SequenceProbMap& q) {
  double sum = 0.0;
  for (const auto& [seq, prob] : p) {
    auto it = q.find(seq);
    sum += std::abs(prob - (it == q.end() ? 0.0 : it->second));
  }
  for (const auto& [seq, prob] : q) {
    if (!p.count(seq)) sum += prob;
  }
  return 0.5 * sum;
}

}  // namespace treedec
