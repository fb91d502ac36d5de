#pragma once

/**
 * The decoding tree: an append-only arena of partial token sequences.
 *
 * Every node holds the full sequence from the prompt root down, two chained
 * measures, and an algorithm-specific score:
 *
 *  - probability: product over the lineage of the renormalized constrained
 *    next-token probabilities (each step divided by the surviving candidate
 *    mass). The root has probability 1.
 *  - raw_weight: product over the lineage of model probability times
 *    constraint score, with no renormalization. This is the sequence's true
 *    unnormalized constrained mass; the root has raw_weight 1.
 *  - score: whatever the active strategy ranks by.
 *
 * Status invariants, enforced on every mutation:
 *  - Terminal nodes have score 0, and a score of 0 on a non-final node can
 *    only be introduced by marking it Terminal.
 *  - Complete nodes end with the end-of-sequence token and have score > 0.
 *  - Terminal and Complete are final: no transitions out, no children under
 *    them. Violations throw ContractViolation; unknown ids throw
 *    StructuralError.
 *
 * Nodes are never removed; abandoning a branch is a status change. Node ids
 * are creation order, which makes them a stable deterministic tie-breaker.
 */

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "treedec/constraints.hpp"
#include "treedec/errors.hpp"
#include "treedec/lm.hpp"
#include "treedec/vocab.hpp"

#include "json.hpp"

namespace treedec {

using NodeId = std::uint32_t;

enum class NodeStatus { Active, Inactive, Terminal, Complete };

std::string to_string(NodeStatus status);
NodeStatus node_status_from_string(const std::string& text);

struct Node {
  NodeId id = 0;
  std::vector<TokenId> tokens;  // full sequence, prompt included
  double probability = 1.0;
  double raw_weight = 1.0;
  double score = 1.0;
  NodeStatus status = NodeStatus::Active;
  std::optional<NodeId> parent;
  std::vector<NodeId> children;
  ConstraintStatePtr constraint_state;
  std::optional<LmState> lm_cache;
  std::uint64_t playouts = 0;
  std::uint64_t wins = 0;
  double efg = 1.0;  // expected future grammaticality, in [0, 1]
};

class DecodingTree {
 public:
  /** Roots the tree at the prompt (empty for unconditional decoding). */
  DecodingTree(std::vector<TokenId> prompt, TokenId eos);

  NodeId root() const { return 0; }
  std::size_t size() const { return nodes_.size(); }
  const Node& node(NodeId id) const;

  std::size_t prompt_length() const { return prompt_length_; }
  TokenId eos() const { return eos_; }

  /**
   * Appends a child extending `parent` by one token. The status must
   * already satisfy the node invariants for the given score.
   */
  NodeId add_child(NodeId parent, TokenId token, double probability,
                   double raw_weight, double score, NodeStatus status,
                   ConstraintStatePtr constraint_state);

  /**
   * Duplicates a non-root node as a new sibling (same parent, same fields,
   * fresh id). Used by resampling to realize multiplicity.
   */
  NodeId clone_node(NodeId id);

  void set_status(NodeId id, NodeStatus status);
  void set_score(NodeId id, double score);
  /** Sets score to 0 and status to Terminal in one step. */
  void mark_terminal(NodeId id);

  void set_lm_cache(NodeId id, LmState state);
  /** Drops cached model state everywhere except on Active nodes. */
  void prune_lm_cache();

  void record_playout(NodeId id, bool win);
  void set_efg(NodeId id, double efg);

  /** Number of nodes with the given status, maintained incrementally. */
  std::size_t count(NodeStatus status) const;
  /** Ids of all nodes with the given status, in ascending (creation) order. */
  std::vector<NodeId> ids_with_status(NodeStatus status) const;
  /** Longest sequence length over all nodes, prompt included. */
  std::size_t max_sequence_length() const { return max_sequence_length_; }

  /** Model queries made so far; expansion calls note_expansion() once per
   *  expanded node. */
  std::uint64_t expansion_count() const { return expansion_count_; }
  void note_expansion() { ++expansion_count_; }

  /** Path from the root to `id`, inclusive. */
  std::vector<NodeId> lineage(NodeId id) const;

  /** Array of per-node records in id order. Each record carries exactly:
   *  id, tokens, probability, score, status, parent, playouts, wins, efg. */
  nlohmann::json snapshot(const Vocabulary& vocab) const;

 private:
  Node& node_mut(NodeId id);
  void check_status_invariants(const Node& node, NodeStatus next_status,
                               double next_score) const;

  std::vector<Node> nodes_;
  TokenId eos_;
  std::size_t prompt_length_;
  std::size_t max_sequence_length_;
  std::uint64_t expansion_count_ = 0;
  std::size_t status_counts_[4] = {0, 0, 0, 0};
};

}  // namespace treedec
