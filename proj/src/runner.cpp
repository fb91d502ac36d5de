#include "treedec/runner.hpp"

#include <algorithm>
#include <chrono>

namespace treedec {

TerminationCheck rho(const DecodingTree& tree, const TerminationPolicy& policy,
                     std::int64_t elapsed_ms, std::uint64_t steps_taken) {
  if (tree.count(NodeStatus::Complete) >= policy.min_complete) {
    return {true, "min_complete"};
  }
  if (tree.size() >= policy.max_nodes) {
    return {true, "max_nodes"};
  }
  if (tree.count(NodeStatus::Active) == 0) {
    return {true, "no_active_nodes"};
  }
  if (tree.max_sequence_length() >= policy.max_seq_len) {
    return {true, "max_seq_len"};
  }
  if (policy.time_limit_ms && elapsed_ms >= *policy.time_limit_ms) {
    return {true, "time_limit"};
  }
  if (policy.max_expansions && tree.expansion_count() >= *policy.max_expansions) {
    return {true, "max_expansions"};
  }
  if (policy.max_steps && steps_taken >= *policy.max_steps) {
    return {true, "max_steps"};
  }
  return {false, ""};
}

namespace {

// Lower keys sort first; ranks within a tier follow score, then probability,
// then creation order.
struct RankKey {
  int tier;
  int subtier;
  double score;
  double probability;
  NodeId id;

  bool operator<(const RankKey& other) const {
    if (tier != other.tier) return tier < other.tier;
    if (subtier != other.subtier) return subtier < other.subtier;
    if (score != other.score) return score > other.score;
    if (probability != other.probability) return probability > other.probability;
    return id < other.id;
  }
};

std::optional<RankKey> rank_key(const Node& n, TokenId eos, std::size_t max_seq_len) {
  if (!n.children.empty()) return std::nullopt;  // only leaves are results
  bool ends_with_eos = !n.tokens.empty() && n.tokens.back() == eos;
  bool truncated = n.tokens.size() >= max_seq_len;
  int tier;
  int subtier = 0;
  switch (n.status) {
    case NodeStatus::Complete:
      tier = 1;
      break;
    case NodeStatus::Terminal:
      tier = (ends_with_eos || truncated) ? 2 : 4;
      break;
    case NodeStatus::Active:
    case NodeStatus::Inactive:
      if (truncated) {
        tier = 2;
      } else {
        tier = 3;
        subtier = n.status == NodeStatus::Active ? 0 : 1;
      }
      break;
    default:
      return std::nullopt;
  }
  return RankKey{tier, subtier, n.score, n.probability, n.id};
}

}  // namespace

std::vector<NodeId> aggregate(const DecodingTree& tree,
                              const AggregationPolicy& policy,
                              std::size_t max_seq_len) {
  std::vector<RankKey> keys;
  for (NodeId id = 0; id < tree.size(); ++id) {
    if (auto key = rank_key(tree.node(id), tree.eos(), max_seq_len)) {
      keys.push_back(*key);
    }
  }
  std::sort(keys.begin(), keys.end());
  std::vector<NodeId> out;
  out.reserve(std::min<std::size_t>(policy.top_n, keys.size()));
  for (std::size_t i = 0; i < keys.size() && i < policy.top_n; ++i) {
    out.push_back(keys[i].id);
  }
  return out;
}

nlohmann::json to_json_records(const DecodeResult& result) {
  nlohmann::json records = nlohmann::json::array();
  for (const DecodeEntry& e : result.entries) {
    nlohmann::json rec;
    rec["rank"] = e.rank;
    rec["tokens"] = e.tokens;
    rec["text"] = e.text;
    rec["probability"] = e.probability;
    rec["score"] = e.score;
    rec["status"] = e.status;
    rec["termination_reason"] = result.termination_reason;
    rec["expansions"] = result.expansions;
    rec["elapsed_ms"] = result.elapsed_ms;
    rec["seed"] = result.seed;
    records.push_back(std::move(rec));
  }
  return records;
}

DecodeResult run(const LanguageModel& lm, const ConstraintPtr& phi,
                 const DecoderParams& decoder, const TerminationPolicy& termination,
                 const AggregationPolicy& aggregation, std::uint64_t seed,
                 const std::vector<TokenId>& prompt,
                 std::optional<DecodingTree>* tree_out) {
  const Vocabulary& vocab = lm.vocab();
  for (TokenId t : prompt) {
    if (t >= vocab.size()) {
      throw InputError("prompt token id " + std::to_string(t) +
                       " outside the vocabulary");
    }
  }

  auto start = std::chrono::steady_clock::now();
  auto elapsed_ms = [&]() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
               std::chrono::steady_clock::now() - start)
        .count();
  };

  DecodingTree tree(prompt, vocab.eos());
  Rng rng(seed);

  std::uint64_t steps = 0;
  TerminationCheck check = rho(tree, termination, elapsed_ms(), steps);
  while (!check.stop) {
    decoder_step(tree, lm, phi, decoder, rng);
    ++steps;
    check = rho(tree, termination, elapsed_ms(), steps);
  }

  DecodeResult result;
  result.termination_reason = check.reason;
  result.expansions = tree.expansion_count();
  result.seed = seed;

  std::vector<NodeId> ranked = aggregate(tree, aggregation, termination.max_seq_len);
  result.entries.reserve(ranked.size());
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    const Node& n = tree.node(ranked[i]);
    DecodeEntry entry;
    entry.rank = i + 1;
    entry.tokens.reserve(n.tokens.size());
    for (TokenId t : n.tokens) entry.tokens.push_back(vocab.token(t));
    entry.text = vocab.decode(n.tokens);
    entry.probability = n.probability;
    entry.score = n.score;
    entry.status = to_string(n.status);
    result.entries.push_back(std::move(entry));
  }

  result.elapsed_ms = elapsed_ms();
  if (tree_out) tree_out->emplace(std::move(tree));
  return result;
}

}  // namespace treedec
