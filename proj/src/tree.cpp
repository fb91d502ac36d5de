#include "treedec/tree.hpp"

#include <algorithm>

namespace treedec {

namespace {
std::size_t status_index(NodeStatus s) { return static_cast<std::size_t>(s); }

bool is_final(NodeStatus s) {
  return s == NodeStatus::Terminal || s == NodeStatus::Complete;
}
}  // namespace

std::string to_string(NodeStatus status) {
  switch (status) {
    case NodeStatus::Active: return "active";
    case NodeStatus::Inactive: return "inactive";
    case NodeStatus::Terminal: return "terminal";
    case NodeStatus::Complete: return "complete";
  }
  throw ContractViolation("unknown node status");
}

NodeStatus node_status_from_string(const std::string& text) {
  if (text == "active") return NodeStatus::Active;
  if (text == "inactive") return NodeStatus::Inactive;
  if (text == "terminal") return NodeStatus::Terminal;
  if (text == "complete") return NodeStatus::Complete;
  throw InputError("unknown node status '" + text + "'");
}

DecodingTree::DecodingTree(std::vector<TokenId> prompt, TokenId eos)
    : eos_(eos), prompt_length_(prompt.size()), max_sequence_length_(prompt.size()) {
  Node root;
  root.id = 0;
  root.tokens = std::move(prompt);
  root.status = NodeStatus::Active;
  nodes_.push_back(std::move(root));
  status_counts_[status_index(NodeStatus::Active)] = 1;
}

const Node& DecodingTree::node(NodeId id) const {
  if (id >= nodes_.size()) {
    throw StructuralError("no node with id " + std::to_string(id));
  }
  return nodes_[id];
}

Node& DecodingTree::node_mut(NodeId id) {
  if (id >= nodes_.size()) {
    throw StructuralError("no node with id " + std::to_string(id));
  }
  return nodes_[id];
}

void DecodingTree::check_status_invariants(const Node& node, NodeStatus next_status,
                                           double next_score) const {
  if (next_score < 0.0) {
    throw ContractViolation("node " + std::to_string(node.id) +
                            ": score must be nonnegative");
  }
  switch (next_status) {
    case NodeStatus::Terminal:
      if (next_score != 0.0) {
        throw ContractViolation("node " + std::to_string(node.id) +
                                ": terminal nodes must have score 0");
      }
      break;
    case NodeStatus::Complete:
      if (node.tokens.empty() || node.tokens.back() != eos_) {
        throw ContractViolation("node " + std::to_string(node.id) +
                                ": complete nodes must end with eos");
      }
      if (next_score <= 0.0) {
        throw ContractViolation("node " + std::to_string(node.id) +
                                ": complete nodes must have score > 0");
      }
      break;
    case NodeStatus::Active:
    case NodeStatus::Inactive:
      break;
  }
}

NodeId DecodingTree::add_child(NodeId parent, TokenId token, double probability,
                               double raw_weight, double score, NodeStatus status,
                               ConstraintStatePtr constraint_state) {
  Node& p = node_mut(parent);
  if (is_final(p.status)) {
    throw ContractViolation("node " + std::to_string(parent) +
                            ": cannot extend a " + to_string(p.status) + " node");
  }
  if (probability < 0.0 || probability > 1.0 + 1e-12) {
    throw ContractViolation("child probability out of [0, 1]");
  }
  if (raw_weight < 0.0) {
    throw ContractViolation("child raw_weight must be nonnegative");
  }

  Node child;
  child.id = static_cast<NodeId>(nodes_.size());
  child.tokens = p.tokens;
  child.tokens.push_back(token);
  child.probability = probability;
  child.raw_weight = raw_weight;
  child.score = score;
  child.status = status;
  child.parent = parent;
  child.constraint_state = std::move(constraint_state);
  check_status_invariants(child, status, score);

  p.children.push_back(child.id);
  max_sequence_length_ = std::max(max_sequence_length_, child.tokens.size());
  status_counts_[status_index(status)] += 1;
  nodes_.push_back(std::move(child));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId DecodingTree::clone_node(NodeId id) {
  const Node& src = node(id);
  if (!src.parent) {
    throw ContractViolation("cannot clone the root");
  }
  Node copy = src;
  copy.id = static_cast<NodeId>(nodes_.size());
  copy.children.clear();
  node_mut(*src.parent).children.push_back(copy.id);
  status_counts_[status_index(copy.status)] += 1;
  max_sequence_length_ = std::max(max_sequence_length_, copy.tokens.size());
  nodes_.push_back(std::move(copy));
  return static_cast<NodeId>(nodes_.size() - 1);
}

void DecodingTree::set_status(NodeId id, NodeStatus status) {
  Node& n = node_mut(id);
  if (n.status == status) return;
  if (is_final(n.status)) {
    throw ContractViolation("node " + std::to_string(id) + ": " +
                            to_string(n.status) + " is final, cannot become " +
                            to_string(status));
  }
  check_status_invariants(n, status, n.score);
  status_counts_[status_index(n.status)] -= 1;
  status_counts_[status_index(status)] += 1;
  n.status = status;
}

void DecodingTree::set_score(NodeId id, double score) {
  Node& n = node_mut(id);
  check_status_invariants(n, n.status, score);
  n.score = score;
}

void DecodingTree::mark_terminal(NodeId id) {
  Node& n = node_mut(id);
  if (n.status == NodeStatus::Terminal) {
    return;
  }
  if (n.status == NodeStatus::Complete) {
    throw ContractViolation("node " + std::to_string(id) +
                            ": complete is final, cannot become terminal");
  }
  status_counts_[status_index(n.status)] -= 1;
  status_counts_[status_index(NodeStatus::Terminal)] += 1;
  n.score = 0.0;
  n.status = NodeStatus::Terminal;
}

void DecodingTree::set_lm_cache(NodeId id, LmState state) {
  node_mut(id).lm_cache = std::move(state);
}

void DecodingTree::prune_lm_cache() {
  for (Node& n : nodes_) {
    if (n.status != NodeStatus::Active) n.lm_cache.reset();
  }
}

void DecodingTree::record_playout(NodeId id, bool win) {
  Node& n = node_mut(id);
  n.playouts += 1;
  if (win) n.wins += 1;
}

void DecodingTree::set_efg(NodeId id, double efg) {
  if (efg < -1e-12 || efg > 1.0 + 1e-12) {
    throw ContractViolation("efg must lie in [0, 1]");
  }
  node_mut(id).efg = std::clamp(efg, 0.0, 1.0);
}

std::size_t DecodingTree::count(NodeStatus status) const {
  return status_counts_[status_index(status)];
}

std::vector<NodeId> DecodingTree::ids_with_status(NodeStatus status) const {
  std::vector<NodeId> out;
  out.reserve(count(status));
  for (const Node& n : nodes_) {
    if (n.status == status) out.push_back(n.id);
  }
  return out;
}

std::vector<NodeId> DecodingTree::lineage(NodeId id) const {
  std::vector<NodeId> path;
  for (std::optional<NodeId> cur = id; cur; cur = node(*cur).parent) {
    path.push_back(*cur);
  }
  std::reverse(path.begin(), path.end());
  return path;
}

nlohmann::json DecodingTree::snapshot(const Vocabulary& vocab) const {
  nlohmann::json out = nlohmann::json::array();
  for (const Node& n : nodes_) {
    nlohmann::json tokens = nlohmann::json::array();
    for (TokenId t : n.tokens) tokens.push_back(vocab.token(t));
    nlohmann::json rec;
    rec["id"] = n.id;
    rec["tokens"] = std::move(tokens);
    rec["probability"] = n.probability;
    rec["score"] = n.score;
    rec["status"] = to_string(n.status);
    if (n.parent) {
      rec["parent"] = *n.parent;
    } else {
      rec["parent"] = nullptr;
    }
    rec["playouts"] = n.playouts;
    rec["wins"] = n.wins;
    rec["efg"] = n.efg;
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace treedec
