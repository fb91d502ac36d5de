#include "treedec/decoders.hpp"

#include <algorithm>
#include <cmath>

namespace treedec {

std::string to_string(DecoderKind kind) {
  switch (kind) {
    case DecoderKind::BeamSearch: return "beam_search";
    case DecoderKind::Sampling: return "sampling";
    case DecoderKind::Smc: return "smc";
    case DecoderKind::Mcts: return "mcts";
    case DecoderKind::Asap: return "asap";
  }
  throw ContractViolation("unknown decoder kind");
}

DecoderKind decoder_kind_from_string(const std::string& text) {
  if (text == "beam_search") return DecoderKind::BeamSearch;
  if (text == "sampling") return DecoderKind::Sampling;
  if (text == "smc") return DecoderKind::Smc;
  if (text == "mcts") return DecoderKind::Mcts;
  if (text == "asap") return DecoderKind::Asap;
  throw InputError("unknown decoder kind '" + text + "'");
}

ExpandMode effective_mode(const DecoderParams& params) {
  if (params.mode) return *params.mode;
  switch (params.kind) {
    case DecoderKind::BeamSearch:
    case DecoderKind::Mcts:
      return ExpandMode::Greedy;
    case DecoderKind::Sampling:
    case DecoderKind::Smc:
    case DecoderKind::Asap:
      return ExpandMode::Stochastic;
  }
  throw ContractViolation("unknown decoder kind");
}

double normalized_ess(std::span<const double> weights, std::size_t k) {
  if (k == 0) throw ContractViolation("ess population size must be >= 1");
  double sum = 0.0;
  double sum_sq = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw ContractViolation("ess weights must be nonnegative");
    sum += w;
    sum_sq += w * w;
  }
  if (sum_sq <= 0.0) return 0.0;
  return (sum * sum) / (static_cast<double>(k) * sum_sq);
}

double puct_score(const Node& node, const Node& parent, double puct_c) {
  double exploitation =
      static_cast<double>(node.wins) /
      std::max<double>(1.0, static_cast<double>(node.playouts));
  double exploration = puct_c * node.probability *
                       std::sqrt(static_cast<double>(parent.playouts)) /
                       (1.0 + static_cast<double>(node.playouts));
  return exploitation + exploration;
}

// ============================================================================
// Rollouts
// ============================================================================

namespace {

/** Selection weight of a child during a rollout; Terminal children are never
 *  selectable, Complete children are valid endpoints. */
double child_weight(const Node& child, const Node& parent,
                    RolloutScorer scorer, double puct_c) {
  if (child.status == NodeStatus::Terminal) return 0.0;
  switch (scorer) {
    case RolloutScorer::Probability:
      return child.probability;
    case RolloutScorer::ProbabilityTimesEfg:
      return child.probability * child.efg;
    case RolloutScorer::Puct:
      return puct_score(child, parent, puct_c);
  }
  throw ContractViolation("unknown rollout scorer");
}

}  // namespace

NodeId rollout(DecodingTree& tree, NodeId start, const LanguageModel& lm,
               const ConstraintPtr& phi, const ExpansionPolicy& policy,
               std::size_t rollout_max_len, RolloutScorer scorer, double puct_c,
               Rng& rng, const CacheOptions& cache) {
  if (tree.node(start).status != NodeStatus::Active) {
    throw ContractViolation("rollout must start at an active node");
  }
  NodeId cur = start;
  while (true) {
    if (tree.node(cur).tokens.size() >= rollout_max_len) {
      return cur;  // length cap; caller treats the leaf as a failure
    }
    if (tree.node(cur).children.empty()) {
      NodeId ids[1] = {cur};
      expand(tree, ids, lm, phi, policy, rng, cache);
    } else if (tree.node(cur).status == NodeStatus::Active) {
      tree.set_status(cur, NodeStatus::Inactive);
    }

    const Node& parent = tree.node(cur);
    std::vector<double> weights;
    weights.reserve(parent.children.size());
    double total = 0.0;
    for (NodeId c : parent.children) {
      double w = child_weight(tree.node(c), parent, scorer, puct_c);
      weights.push_back(w);
      total += w;
    }
    if (total <= 0.0 && scorer == RolloutScorer::Puct) {
      // Nothing visited yet anywhere under this node: fall back to the
      // model-and-constraint prior.
      total = 0.0;
      for (std::size_t i = 0; i < weights.size(); ++i) {
        const Node& c = tree.node(parent.children[i]);
        weights[i] = c.status == NodeStatus::Terminal ? 0.0 : c.probability;
        total += weights[i];
      }
    }
    if (total <= 0.0) {
      // Every continuation is dead; seal the subtree off so later rollouts
      // do not wander back in.
      tree.mark_terminal(cur);
      return cur;
    }

    NodeId pick = parent.children[rng.categorical(weights)];
    if (tree.node(pick).status == NodeStatus::Complete) {
      if (cache.prune) tree.prune_lm_cache();
      return pick;
    }
    tree.set_status(pick, NodeStatus::Active);
    if (cache.prune) tree.prune_lm_cache();
    cur = pick;
  }
}

// ============================================================================
// Beam search
// ============================================================================

void beam_step(DecodingTree& tree, const LanguageModel& lm,
               const ConstraintPtr& phi, const DecoderParams& params, Rng& rng) {
  std::vector<NodeId> active = tree.ids_with_status(NodeStatus::Active);
  if (active.empty()) return;

  ExpansionPolicy policy{effective_mode(params), params.k, params.allow_list};
  std::vector<NodeId> created =
      expand(tree, active, lm, phi, policy, rng, params.cache);

  // Rank by raw weight: the chained unnormalized mass, which orders complete
  // sequences exactly as the constrained posterior does.
  std::vector<NodeId> survivors;
  for (NodeId c : created) {
    if (tree.node(c).status == NodeStatus::Terminal) continue;
    tree.set_score(c, tree.node(c).raw_weight);
    survivors.push_back(c);
  }
  std::sort(survivors.begin(), survivors.end(), [&](NodeId a, NodeId b) {
    double sa = tree.node(a).score;
    double sb = tree.node(b).score;
    if (sa != sb) return sa > sb;
    return a < b;
  });

  for (std::size_t i = 0; i < survivors.size(); ++i) {
    const Node& n = tree.node(survivors[i]);
    if (i < params.k) {
      if (n.status == NodeStatus::Inactive) {
        tree.set_status(survivors[i], NodeStatus::Active);
      }
      // Complete nodes occupy a slot but stay final.
    }
    // Children outside the top k remain Inactive.
  }
  if (params.cache.prune) tree.prune_lm_cache();
}

// ============================================================================
// Sampling
// ============================================================================

void sampling_step(DecodingTree& tree, const LanguageModel& lm,
                   const ConstraintPtr& phi, const DecoderParams& params, Rng& rng) {
  std::vector<NodeId> active = tree.ids_with_status(NodeStatus::Active);
  if (active.empty()) return;

  std::size_t j = (params.k + active.size() - 1) / active.size();  // ceil(k/|N|)
  ExpansionPolicy policy{effective_mode(params), j, params.allow_list};
  std::vector<NodeId> created =
      expand(tree, active, lm, phi, policy, rng, params.cache);

  for (NodeId c : created) {
    const Node& n = tree.node(c);
    if (n.status == NodeStatus::Inactive && n.score > 0.0) {
      tree.set_status(c, NodeStatus::Active);
    }
  }
  if (params.cache.prune) tree.prune_lm_cache();
}

// ============================================================================
// Sequential Monte Carlo
// ============================================================================

void smc_step(DecodingTree& tree, const LanguageModel& lm,
              const ConstraintPtr& phi, const DecoderParams& params, Rng& rng) {
  std::vector<NodeId> particles = tree.ids_with_status(NodeStatus::Active);
  if (particles.empty()) return;

  ExpansionPolicy policy{effective_mode(params), 1, params.allow_list};
  std::vector<NodeId> created =
      expand(tree, particles, lm, phi, policy, rng, params.cache);

  // Weight update: a particle keeps its weight while its continuation
  // survives the constraint, and drops to zero otherwise.
  std::vector<double> weights;
  weights.reserve(created.size());
  for (NodeId c : created) {
    const Node& n = tree.node(c);
    if (n.status == NodeStatus::Terminal) {
      weights.push_back(0.0);
      continue;
    }
    double w = tree.node(*n.parent).score * std::ceil(n.probability);
    tree.set_score(c, w);
    weights.push_back(w);
  }

  std::vector<NodeId> extendable;
  for (NodeId c : created) {
    if (tree.node(c).status == NodeStatus::Inactive) extendable.push_back(c);
  }

  double ess = normalized_ess(weights, params.k);
  if (ess <= params.ess_threshold) {
    // Resample k particles with replacement proportionally to the pre-reset
    // weights; survivors continue with the mean weight. Complete particles
    // leave the population and keep their own weight.
    std::vector<double> pool;
    pool.reserve(extendable.size());
    for (NodeId c : extendable) pool.push_back(tree.node(c).score);
    double pool_total = 0.0;
    for (double w : pool) pool_total += w;
    if (pool_total > 0.0) {
      double total = 0.0;
      for (double w : weights) total += w;
      double mean = total / static_cast<double>(params.k);
      std::vector<std::size_t> multiplicity(extendable.size(), 0);
      for (std::size_t draw = 0; draw < params.k; ++draw) {
        multiplicity[rng.categorical(pool)] += 1;
      }
      for (std::size_t i = 0; i < extendable.size(); ++i) {
        if (multiplicity[i] == 0) continue;  // pruned, stays Inactive
        tree.set_score(extendable[i], mean);
        tree.set_status(extendable[i], NodeStatus::Active);
        for (std::size_t copy = 1; copy < multiplicity[i]; ++copy) {
          tree.clone_node(extendable[i]);
        }
      }
    }
    // With no surviving extendable mass the population collapses and the
    // termination condition (no active nodes) ends the run.
  } else {
    for (NodeId c : extendable) {
      if (tree.node(c).score > 0.0) tree.set_status(c, NodeStatus::Active);
    }
  }
  if (params.cache.prune) tree.prune_lm_cache();
}

// ============================================================================
// Monte Carlo tree search
// ============================================================================

void mcts_step(DecodingTree& tree, const LanguageModel& lm,
               const ConstraintPtr& phi, const DecoderParams& params, Rng& rng) {
  const Node& root = tree.node(tree.root());
  if (root.status == NodeStatus::Terminal || root.status == NodeStatus::Complete) {
    return;  // nothing left to search
  }
  if (root.status != NodeStatus::Active) {
    tree.set_status(tree.root(), NodeStatus::Active);
  }

  ExpansionPolicy policy{effective_mode(params), params.k, params.allow_list};
  NodeId leaf = rollout(tree, tree.root(), lm, phi, policy, params.rollout_max_len,
                        RolloutScorer::Puct, params.puct_c, rng, params.cache);

  bool is_win = tree.node(leaf).status == NodeStatus::Complete;
  std::vector<NodeId> path = tree.lineage(leaf);
  for (NodeId id : path) tree.record_playout(id, is_win);
  for (NodeId id : path) {
    const Node& n = tree.node(id);
    if (n.status == NodeStatus::Terminal) continue;  // sealed dead ends keep score 0
    if (!n.parent) {
      tree.set_score(id, static_cast<double>(n.wins) /
                             std::max<double>(1.0, static_cast<double>(n.playouts)));
    } else {
      tree.set_score(id, puct_score(n, tree.node(*n.parent), params.puct_c));
    }
  }

  // Stationary move: the search always restarts from the root.
  for (NodeId id : tree.ids_with_status(NodeStatus::Active)) {
    if (id != tree.root()) tree.set_status(id, NodeStatus::Inactive);
  }
  if (tree.node(tree.root()).status == NodeStatus::Inactive) {
    tree.set_status(tree.root(), NodeStatus::Active);
  }
  if (params.cache.prune) tree.prune_lm_cache();
}

// ============================================================================
// Adaptive sampling (expected future grammaticality)
// ============================================================================

void asap_step(DecodingTree& tree, const LanguageModel& lm,
               const ConstraintPtr& phi, const DecoderParams& params, Rng& rng) {
  const Node& root = tree.node(tree.root());
  if (root.status == NodeStatus::Terminal || root.status == NodeStatus::Complete) {
    return;
  }
  if (root.status != NodeStatus::Active) {
    tree.set_status(tree.root(), NodeStatus::Active);
  }

  std::size_t j = params.j > 0 ? params.j : params.k;
  ExpansionPolicy policy{effective_mode(params), j, params.allow_list};
  NodeId leaf = rollout(tree, tree.root(), lm, phi, policy, params.rollout_max_len,
                        RolloutScorer::ProbabilityTimesEfg, params.puct_c, rng,
                        params.cache);

  if (tree.node(leaf).status != NodeStatus::Complete) {
    tree.set_efg(leaf, 0.0);  // truncated or dead-end rollouts carry no credit
  }
  std::vector<NodeId> path = tree.lineage(leaf);
  for (std::size_t i = path.size(); i-- > 1;) {
    NodeId id = path[i - 1];  // leaf's parent up to the root
    const Node& m = tree.node(id);
    if (m.raw_weight <= 0.0) {
      tree.set_efg(id, 0.0);
      continue;
    }
    double efg = 0.0;
    for (NodeId c : m.children) {
      const Node& child = tree.node(c);
      // Conditional constrained mass p(t)·phi of the child, recovered from
      // the chained raw weights.
      efg += (child.raw_weight / m.raw_weight) * child.efg;
    }
    tree.set_efg(id, std::clamp(efg, 0.0, 1.0));
  }

  for (NodeId id : tree.ids_with_status(NodeStatus::Active)) {
    if (id != tree.root()) tree.set_status(id, NodeStatus::Inactive);
  }
  if (tree.node(tree.root()).status == NodeStatus::Inactive) {
    tree.set_status(tree.root(), NodeStatus::Active);
  }
  if (params.cache.prune) tree.prune_lm_cache();
}

void decoder_step(DecodingTree& tree, const LanguageModel& lm,
                  const ConstraintPtr& phi, const DecoderParams& params, Rng& rng) {
  switch (params.kind) {
    case DecoderKind::BeamSearch: return beam_step(tree, lm, phi, params, rng);
    case DecoderKind::Sampling: return sampling_step(tree, lm, phi, params, rng);
    case DecoderKind::Smc: return smc_step(tree, lm, phi, params, rng);
    case DecoderKind::Mcts: return mcts_step(tree, lm, phi, params, rng);
    case DecoderKind::Asap: return asap_step(tree, lm, phi, params, rng);
  }
  throw ContractViolation("unknown decoder kind");
}

}  // namespace treedec
