#pragma once

/**
 * Seeded random source.
 *
 * Every stochastic operation in the engine draws exclusively from an Rng that
 * the caller seeds explicitly, and consumes draws in a documented order
 * (nodes by ascending id, candidates by draw index). Two runs with the same
 * seed therefore produce identical trees.
 */

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "treedec/errors.hpp"

namespace treedec {

/** Splits a seed into an independent stream; used to derive per-trial and
 *  per-task seeds from (master seed, index...). */
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 finalizer over the combined value.
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /** Uniform double in [0, 1). */
  double uniform() {
    return std::uniform_real_distribution<double>(0.0, 1.0)(engine_);
  }

  /** Index drawn proportionally to nonnegative weights; total must be > 0. */
  std::size_t categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) {
      if (w < 0.0) throw ContractViolation("categorical: negative weight");
      total += w;
    }
    if (!(total > 0.0)) {
      throw ContractViolation("categorical: weights sum to zero");
    }
    double u = uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
      acc += weights[i];
      if (u < acc) return i;
    }
    // Guard against rounding at the upper edge: return last positive weight.
    for (std::size_t i = weights.size(); i-- > 0;) {
      if (weights[i] > 0.0) return i;
    }
    return weights.size() - 1;
  }

  /**
   * Draws j distinct indices without replacement, proportionally to weights.
   * Once all positive-weight indices are exhausted, remaining slots are
   * filled in ascending index order so that j = weights.size() always yields
   * the full index set (this makes stochastic selection with j = |V|
   * coincide with exact expansion).
   */
  std::vector<std::size_t> sample_without_replacement(
      std::span<const double> weights, std::size_t j) {
    std::vector<double> remaining(weights.begin(), weights.end());
    std::vector<bool> taken(weights.size(), false);
    std::vector<std::size_t> out;
    std::size_t want = std::min(j, weights.size());
    out.reserve(want);
    while (out.size() < want) {
      double total = 0.0;
      for (double w : remaining) total += w;
      if (total > 0.0) {
        std::size_t idx = categorical(remaining);
        out.push_back(idx);
        taken[idx] = true;
        remaining[idx] = 0.0;
      } else {
        for (std::size_t i = 0; i < weights.size() && out.size() < want; ++i) {
          if (!taken[i]) {
            out.push_back(i);
            taken[i] = true;
          }
        }
      }
    }
    return out;
  }

  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace treedec
