#include "treedec/expand.hpp"

#include <algorithm>
#include <numeric>

namespace treedec {

std::string to_string(ExpandMode mode) {
  switch (mode) {
    case ExpandMode::Greedy: return "greedy";
    case ExpandMode::Stochastic: return "stochastic";
  }
  throw ContractViolation("unknown expand mode");
}

ExpandMode expand_mode_from_string(const std::string& text) {
  if (text == "greedy") return ExpandMode::Greedy;
  if (text == "stochastic") return ExpandMode::Stochastic;
  throw InputError("unknown expand mode '" + text + "'");
}

namespace {

std::vector<TokenId> greedy_candidates(const TokenDistribution& dist, std::size_t j) {
  std::vector<TokenId> order(dist.size());
  std::iota(order.begin(), order.end(), TokenId{0});
  std::stable_sort(order.begin(), order.end(), [&](TokenId a, TokenId b) {
    return dist[a] > dist[b];  // stable sort keeps ties in ascending id order
  });
  order.resize(std::min<std::size_t>(j, order.size()));
  return order;
}

}  // namespace

std::vector<NodeId> expand(DecodingTree& tree, std::span<const NodeId> node_ids,
                           const LanguageModel& lm, const ConstraintPtr& phi,
                           const ExpansionPolicy& policy, Rng& rng,
                           const CacheOptions& cache) {
  if (policy.sample_count == 0) {
    throw ContractViolation("expansion sample count must be >= 1");
  }
  const Vocabulary& vocab = lm.vocab();
  for (TokenId t : policy.allow_list) {
    if (t >= vocab.size()) {
      throw InputError("allow-list token id " + std::to_string(t) +
                       " outside the vocabulary");
    }
  }

  std::vector<NodeId> ids(node_ids.begin(), node_ids.end());
  std::sort(ids.begin(), ids.end());

  std::vector<NodeId> created;
  for (NodeId id : ids) {
    const Node& parent = tree.node(id);
    if (parent.status != NodeStatus::Active) {
      throw ContractViolation("node " + std::to_string(id) +
                              ": only active nodes can be expanded");
    }

    const LmState* state = nullptr;
    if (cache.use_lm_state && parent.lm_cache) state = &*parent.lm_cache;
    LmResult result = lm.next(parent.tokens, state);
    tree.note_expansion();

    std::vector<TokenId> candidates;
    if (policy.mode == ExpandMode::Greedy) {
      candidates = greedy_candidates(result.dist, policy.sample_count);
    } else {
      for (std::size_t idx :
           rng.sample_without_replacement(result.dist, policy.sample_count)) {
        candidates.push_back(static_cast<TokenId>(idx));
      }
    }
    candidates.insert(candidates.end(), policy.allow_list.begin(),
                      policy.allow_list.end());
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()),
                     candidates.end());

    struct Candidate {
      TokenId token;
      double weight;  // p(t) * phi
      ConstraintStatePtr state;
    };
    std::vector<Candidate> evaluated;
    evaluated.reserve(candidates.size());
    double z = 0.0;
    std::vector<TokenId> child_tokens = parent.tokens;
    child_tokens.push_back(0);
    for (TokenId t : candidates) {
      child_tokens.back() = t;
      double phi_score = 1.0;
      ConstraintStatePtr next_state;
      if (phi) {
        ConstraintOutcome outcome =
            phi->evaluate(child_tokens, tree.prompt_length(),
                          parent.constraint_state, t == tree.eos());
        phi_score = outcome.score;
        next_state = std::move(outcome.state);
      }
      double weight = result.dist[t] * phi_score;
      z += weight;
      evaluated.push_back({t, weight, std::move(next_state)});
    }

    for (Candidate& c : evaluated) {
      double probability = z > 0.0 ? parent.probability * c.weight / z : 0.0;
      double raw_weight = parent.raw_weight * c.weight;
      NodeStatus status;
      double score;
      if (probability <= 0.0) {
        status = NodeStatus::Terminal;
        score = 0.0;
        probability = 0.0;
      } else if (c.token == tree.eos()) {
        status = NodeStatus::Complete;
        score = probability;
      } else {
        status = NodeStatus::Inactive;
        score = probability;
      }
      NodeId child = tree.add_child(id, c.token, probability, raw_weight, score,
                                    status, std::move(c.state));
      if (cache.use_lm_state && status == NodeStatus::Inactive) {
        tree.set_lm_cache(child, result.state);
      }
      created.push_back(child);
    }

    tree.set_status(id, NodeStatus::Inactive);
  }
  return created;
}

}  // namespace treedec
