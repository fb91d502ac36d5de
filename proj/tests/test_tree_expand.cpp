#include "doctest.h"

#include <memory>
#include <vector>

#include "treedec/expand.hpp"
#include "treedec/lm.hpp"
#include "treedec/tree.hpp"

#include "test_support.hpp"

using namespace treedec;
using doctest::Approx;

namespace {

std::shared_ptr<LookupLm> lm_a() { return LookupLm::load(fixture_path("lm_a.json")); }

std::vector<NodeId> expand_one(DecodingTree& tree, NodeId id,
                               const LanguageModel& lm, const ConstraintPtr& phi,
                               const ExpansionPolicy& policy, Rng& rng,
                               const CacheOptions& cache = {}) {
  std::vector<NodeId> ids{id};
  return expand(tree, ids, lm, phi, policy, rng, cache);
}

}  // namespace

// ============================================================================
// Tree arena
// ============================================================================

TEST_CASE("tree roots at the prompt with neutral measures") {
  DecodingTree tree({2, 0}, 3);
  const Node& root = tree.node(tree.root());
  CHECK(root.id == 0);
  CHECK(root.tokens == std::vector<TokenId>({2, 0}));
  CHECK(root.probability == 1.0);
  CHECK(root.raw_weight == 1.0);
  CHECK(root.score == 1.0);
  CHECK(root.status == NodeStatus::Active);
  CHECK(root.efg == 1.0);
  CHECK_FALSE(root.parent.has_value());
  CHECK(tree.prompt_length() == 2);
  CHECK(tree.eos() == 3);
  CHECK(tree.max_sequence_length() == 2);
  CHECK(tree.count(NodeStatus::Active) == 1);
}

TEST_CASE("children extend the parent sequence and get creation-order ids") {
  DecodingTree tree({}, 2);
  NodeId a = tree.add_child(0, 0, 0.6, 0.6, 0.6, NodeStatus::Inactive, nullptr);
  NodeId b = tree.add_child(0, 1, 0.4, 0.4, 0.4, NodeStatus::Inactive, nullptr);
  CHECK(a == 1);
  CHECK(b == 2);
  CHECK(tree.node(0).children == std::vector<NodeId>({1, 2}));
  CHECK(tree.node(a).tokens == std::vector<TokenId>({0}));
  CHECK(tree.node(a).parent == NodeId{0});
  CHECK(tree.size() == 3);
  CHECK(tree.max_sequence_length() == 1);
  CHECK(tree.lineage(b) == std::vector<NodeId>({0, 2}));

  NodeId deep = tree.add_child(a, 2, 0.3, 0.18, 0.3, NodeStatus::Complete, nullptr);
  CHECK(tree.lineage(deep) == std::vector<NodeId>({0, 1, 3}));
  CHECK(tree.node(deep).tokens == std::vector<TokenId>({0, 2}));
}

TEST_CASE("unknown node ids are structural errors") {
  DecodingTree tree({}, 2);
  CHECK_THROWS_AS(tree.node(5), StructuralError);
  CHECK_THROWS_AS(tree.set_score(5, 0.5), StructuralError);
  CHECK_THROWS_AS(tree.set_status(5, NodeStatus::Inactive), StructuralError);
  CHECK_THROWS_AS(tree.record_playout(5, true), StructuralError);
}

TEST_CASE("status invariants are enforced on every mutation") {
  DecodingTree tree({}, 2);

  // Terminal requires score 0; complete requires eos ending and score > 0.
  CHECK_THROWS_AS(tree.add_child(0, 0, 0.5, 0.5, 0.5, NodeStatus::Terminal, nullptr),
                  ContractViolation);
  CHECK_THROWS_AS(tree.add_child(0, 0, 0.5, 0.5, 0.5, NodeStatus::Complete, nullptr),
                  ContractViolation);
  CHECK_THROWS_AS(tree.add_child(0, 2, 0.5, 0.5, 0.0, NodeStatus::Complete, nullptr),
                  ContractViolation);
  CHECK_THROWS_AS(tree.add_child(0, 0, -0.1, 0.5, 0.5, NodeStatus::Inactive, nullptr),
                  ContractViolation);
  CHECK_THROWS_AS(tree.add_child(0, 0, 0.5, -0.5, 0.5, NodeStatus::Inactive, nullptr),
                  ContractViolation);

  NodeId t = tree.add_child(0, 0, 0.0, 0.0, 0.0, NodeStatus::Terminal, nullptr);
  NodeId c = tree.add_child(0, 2, 0.5, 0.5, 0.5, NodeStatus::Complete, nullptr);
  NodeId live = tree.add_child(0, 1, 0.5, 0.5, 0.5, NodeStatus::Inactive, nullptr);

  // Final states admit no transitions and no children.
  CHECK_THROWS_AS(tree.set_status(t, NodeStatus::Active), ContractViolation);
  CHECK_THROWS_AS(tree.set_status(c, NodeStatus::Inactive), ContractViolation);
  CHECK_THROWS_AS(tree.mark_terminal(c), ContractViolation);
  CHECK_THROWS_AS(tree.add_child(t, 0, 0.1, 0.1, 0.1, NodeStatus::Inactive, nullptr),
                  ContractViolation);
  CHECK_THROWS_AS(tree.add_child(c, 0, 0.1, 0.1, 0.1, NodeStatus::Inactive, nullptr),
                  ContractViolation);
  CHECK_NOTHROW(tree.mark_terminal(t));  // idempotent

  // Score zero cannot appear outside terminal, and vice versa.
  CHECK_THROWS_AS(tree.set_status(live, NodeStatus::Terminal), ContractViolation);
  CHECK_THROWS_AS(tree.set_score(c, 0.0), ContractViolation);
  CHECK_THROWS_AS(tree.set_score(live, -1.0), ContractViolation);

  tree.mark_terminal(live);
  CHECK(tree.node(live).score == 0.0);
  CHECK(tree.node(live).status == NodeStatus::Terminal);
  CHECK(tree.count(NodeStatus::Terminal) == 2);

  CHECK_THROWS_AS(tree.set_efg(c, 1.5), ContractViolation);
  CHECK_THROWS_AS(tree.set_efg(c, -0.5), ContractViolation);
}

TEST_CASE("activation flips are tracked by the status counts") {
  DecodingTree tree({}, 2);
  NodeId n = tree.add_child(0, 0, 0.5, 0.5, 0.5, NodeStatus::Inactive, nullptr);
  tree.set_status(0, NodeStatus::Inactive);
  tree.set_status(n, NodeStatus::Active);
  CHECK(tree.count(NodeStatus::Active) == 1);
  CHECK(tree.count(NodeStatus::Inactive) == 1);
  CHECK(tree.ids_with_status(NodeStatus::Active) == std::vector<NodeId>({n}));
  CHECK(tree.ids_with_status(NodeStatus::Inactive) == std::vector<NodeId>({0}));
}

TEST_CASE("clones are fresh siblings with identical fields") {
  DecodingTree tree({}, 2);
  NodeId n = tree.add_child(0, 0, 0.5, 0.4, 0.3, NodeStatus::Inactive, nullptr);
  tree.add_child(n, 1, 0.2, 0.2, 0.2, NodeStatus::Inactive, nullptr);
  NodeId dup = tree.clone_node(n);

  const Node& src = tree.node(n);
  const Node& copy = tree.node(dup);
  CHECK(dup == 3);
  CHECK(copy.tokens == src.tokens);
  CHECK(copy.probability == src.probability);
  CHECK(copy.raw_weight == src.raw_weight);
  CHECK(copy.score == src.score);
  CHECK(copy.status == src.status);
  CHECK(copy.parent == src.parent);
  CHECK(copy.children.empty());
  CHECK(tree.node(0).children == std::vector<NodeId>({1, 3}));
  CHECK(tree.count(NodeStatus::Inactive) == 3);

  CHECK_THROWS_AS(tree.clone_node(0), ContractViolation);
}

TEST_CASE("playout statistics accumulate per node") {
  DecodingTree tree({}, 2);
  tree.record_playout(0, true);
  tree.record_playout(0, false);
  tree.record_playout(0, true);
  CHECK(tree.node(0).playouts == 3);
  CHECK(tree.node(0).wins == 2);
}

TEST_CASE("cache pruning keeps model state only on active nodes") {
  DecodingTree tree({}, 2);
  NodeId n = tree.add_child(0, 0, 0.5, 0.5, 0.5, NodeStatus::Inactive, nullptr);
  tree.set_lm_cache(0, LmState{{}});
  tree.set_lm_cache(n, LmState{{0}});
  tree.prune_lm_cache();
  CHECK(tree.node(0).lm_cache.has_value());  // root is still active
  CHECK_FALSE(tree.node(n).lm_cache.has_value());
}

TEST_CASE("snapshot carries one record per node in id order") {
  Vocabulary v = Vocabulary::with_eos_token({"a", "b", "</s>"}, "</s>");
  DecodingTree tree({}, v.eos());
  tree.add_child(0, 0, 0.6, 0.6, 0.6, NodeStatus::Inactive, nullptr);
  nlohmann::json snap = tree.snapshot(v);
  REQUIRE(snap.size() == 2);
  CHECK(snap[0]["id"] == 0);
  CHECK(snap[0]["parent"].is_null());
  CHECK(snap[1]["parent"] == 0);
  CHECK(snap[1]["tokens"] == nlohmann::json::array({"a"}));
  CHECK(snap[1]["status"] == "inactive");
  CHECK(snap[1].size() == 9);  // id, tokens, probability, score, status,
                               // parent, playouts, wins, efg
}

// ============================================================================
// Expansion
// ============================================================================

TEST_CASE("exact expansion creates one child per token in ascending order") {
  auto lm = lm_a();
  DecodingTree tree({}, lm->vocab().eos());
  Rng rng(1);
  auto kids = expand_one(tree, 0, *lm, nullptr, {ExpandMode::Greedy, 3, {}}, rng);

  REQUIRE(kids.size() == 3);
  CHECK(tree.node(kids[0]).tokens == std::vector<TokenId>({0}));
  CHECK(tree.node(kids[1]).tokens == std::vector<TokenId>({1}));
  CHECK(tree.node(kids[2]).tokens == std::vector<TokenId>({2}));
  CHECK(tree.node(kids[0]).probability == Approx(0.6));
  CHECK(tree.node(kids[1]).probability == Approx(0.3));
  CHECK(tree.node(kids[2]).probability == Approx(0.1));
  CHECK(tree.node(kids[0]).raw_weight == Approx(0.6));
  CHECK(tree.node(kids[0]).status == NodeStatus::Inactive);
  CHECK(tree.node(kids[1]).status == NodeStatus::Inactive);
  CHECK(tree.node(kids[2]).status == NodeStatus::Complete);  // ends with eos
  CHECK(tree.node(kids[2]).score == Approx(0.1));
  CHECK(tree.node(0).status == NodeStatus::Inactive);  // parent retired
  CHECK(tree.expansion_count() == 1);
}

TEST_CASE("constraint vetoes renormalize the surviving candidates") {
  auto lm = lm_a();
  auto phi = std::make_shared<LexicalForbidConstraint>(
      std::vector<std::string>{"b"}, lm->vocab());
  DecodingTree tree({}, lm->vocab().eos());
  Rng rng(1);
  auto kids = expand_one(tree, 0, *lm, phi, {ExpandMode::Greedy, 3, {}}, rng);

  REQUIRE(kids.size() == 3);
  // Surviving mass is 0.6 + 0.1 = 0.7.
  CHECK(tree.node(kids[0]).probability == Approx(0.6 / 0.7));
  CHECK(tree.node(kids[0]).raw_weight == Approx(0.6));
  CHECK(tree.node(kids[1]).probability == 0.0);
  CHECK(tree.node(kids[1]).raw_weight == 0.0);
  CHECK(tree.node(kids[1]).status == NodeStatus::Terminal);
  CHECK(tree.node(kids[2]).probability == Approx(0.1 / 0.7));
  CHECK(tree.node(kids[2]).status == NodeStatus::Complete);

  // The renormalized children still sum to the parent's probability.
  double total = 0.0;
  for (NodeId k : kids) total += tree.node(k).probability;
  CHECK(total == Approx(tree.node(0).probability));
}

TEST_CASE("children carry chained constraint states") {
  auto lm = lm_a();
  auto phi = std::make_shared<LexicalForbidConstraint>(
      std::vector<std::string>{"ab"}, lm->vocab());
  DecodingTree tree({}, lm->vocab().eos());
  Rng rng(1);
  auto kids = expand_one(tree, 0, *lm, phi, {ExpandMode::Greedy, 3, {}}, rng);
  NodeId a = kids[0];
  CHECK(tree.node(a).constraint_state != nullptr);
  CHECK(tree.node(a).constraint_state->consumed == 1);

  tree.set_status(a, NodeStatus::Active);
  auto grandkids = expand_one(tree, a, *lm, phi, {ExpandMode::Greedy, 3, {}}, rng);
  // "a" then "b" forms the forbidden substring; eos keeps only "a".
  CHECK(tree.node(grandkids[0]).status == NodeStatus::Inactive);  // "a a"
  CHECK(tree.node(grandkids[1]).status == NodeStatus::Terminal);  // "a b"
  CHECK(tree.node(grandkids[2]).status == NodeStatus::Complete);
  // Default row (0.2, 0.2, 0.6) with "b" vetoed renormalizes over 0.8.
  CHECK(tree.node(grandkids[0]).probability ==
        Approx(tree.node(a).probability * 0.2 / 0.8));
  CHECK(tree.node(grandkids[0]).raw_weight == Approx(0.6 * 0.2));
}

TEST_CASE("greedy selection takes the most likely tokens, ties to low ids") {
  auto lm = lm_a();
  DecodingTree tree({}, lm->vocab().eos());
  Rng rng(1);
  auto kids = expand_one(tree, 0, *lm, nullptr, {ExpandMode::Greedy, 2, {}}, rng);
  REQUIRE(kids.size() == 2);
  CHECK(tree.node(kids[0]).tokens.back() == 0);
  CHECK(tree.node(kids[1]).tokens.back() == 1);
  // Renormalized over the evaluated set 0.6 + 0.3.
  CHECK(tree.node(kids[0]).probability == Approx(0.6 / 0.9));
  CHECK(tree.node(kids[1]).probability == Approx(0.3 / 0.9));

  UniformLm uniform(Vocabulary::with_eos_token({"a", "b", "c", "</s>"}, "</s>"));
  DecodingTree flat({}, uniform.vocab().eos());
  auto flat_kids = expand_one(flat, 0, uniform, nullptr, {ExpandMode::Greedy, 2, {}}, rng);
  REQUIRE(flat_kids.size() == 2);
  CHECK(flat.node(flat_kids[0]).tokens.back() == 0);
  CHECK(flat.node(flat_kids[1]).tokens.back() == 1);
}

TEST_CASE("the allow list joins the candidate set") {
  auto lm = lm_a();
  DecodingTree tree({}, lm->vocab().eos());
  Rng rng(1);
  ExpansionPolicy policy{ExpandMode::Greedy, 1, {lm->vocab().eos()}};
  auto kids = expand_one(tree, 0, *lm, nullptr, policy, rng);
  REQUIRE(kids.size() == 2);
  CHECK(tree.node(kids[0]).tokens.back() == 0);
  CHECK(tree.node(kids[1]).tokens.back() == 2);
  CHECK(tree.node(kids[0]).probability == Approx(0.6 / 0.7));
  CHECK(tree.node(kids[1]).probability == Approx(0.1 / 0.7));

  ExpansionPolicy bad{ExpandMode::Greedy, 1, {99}};
  DecodingTree other({}, lm->vocab().eos());
  Rng rng2(1);
  CHECK_THROWS_AS(expand_one(other, 0, *lm, nullptr, bad, rng2), InputError);
}

TEST_CASE("stochastic selection with j = |V| reproduces exact expansion") {
  auto lm = lm_a();
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    DecodingTree sampled({}, lm->vocab().eos());
    Rng rng(seed);
    auto kids = expand_one(sampled, 0, *lm, nullptr,
                           {ExpandMode::Stochastic, 3, {}}, rng);
    REQUIRE(kids.size() == 3);
    CHECK(sampled.node(kids[0]).probability == Approx(0.6));
    CHECK(sampled.node(kids[1]).probability == Approx(0.3));
    CHECK(sampled.node(kids[2]).probability == Approx(0.1));
  }
}

TEST_CASE("expansion order is ascending id regardless of request order") {
  auto lm = lm_a();
  auto run = [&](std::vector<NodeId> order) {
    DecodingTree tree({}, lm->vocab().eos());
    Rng rng(11);
    expand_one(tree, 0, *lm, nullptr, {ExpandMode::Greedy, 3, {}}, rng);
    tree.set_status(1, NodeStatus::Active);
    tree.set_status(2, NodeStatus::Active);
    expand(tree, order, *lm, nullptr, {ExpandMode::Stochastic, 1, {}}, rng);
    return tree.snapshot(lm->vocab()).dump();
  };
  CHECK(run({1, 2}) == run({2, 1}));
}

TEST_CASE("model state is cached on extendable children only") {
  auto lm = lm_a();
  DecodingTree tree({}, lm->vocab().eos());
  Rng rng(1);
  auto kids = expand_one(tree, 0, *lm, nullptr, {ExpandMode::Greedy, 3, {}}, rng);
  CHECK(tree.node(kids[0]).lm_cache.has_value());
  CHECK(tree.node(kids[1]).lm_cache.has_value());
  CHECK_FALSE(tree.node(kids[2]).lm_cache.has_value());  // complete

  DecodingTree cold({}, lm->vocab().eos());
  Rng rng2(1);
  CacheOptions no_cache{false, true};
  auto cold_kids = expand_one(cold, 0, *lm, nullptr, {ExpandMode::Greedy, 3, {}},
                              rng2, no_cache);
  CHECK_FALSE(cold.node(cold_kids[0]).lm_cache.has_value());

  // Cached and uncached expansion agree from a warm node.
  tree.set_status(kids[0], NodeStatus::Active);
  cold.set_status(cold_kids[0], NodeStatus::Active);
  auto warm = expand_one(tree, kids[0], *lm, nullptr, {ExpandMode::Greedy, 3, {}}, rng);
  auto fresh = expand_one(cold, cold_kids[0], *lm, nullptr,
                          {ExpandMode::Greedy, 3, {}}, rng2, no_cache);
  REQUIRE(warm.size() == fresh.size());
  for (std::size_t i = 0; i < warm.size(); ++i) {
    CHECK(tree.node(warm[i]).probability == cold.node(fresh[i]).probability);
    CHECK(tree.node(warm[i]).status == cold.node(fresh[i]).status);
  }
}

TEST_CASE("only active nodes can be expanded") {
  auto lm = lm_a();
  DecodingTree tree({}, lm->vocab().eos());
  tree.set_status(0, NodeStatus::Inactive);
  Rng rng(1);
  CHECK_THROWS_AS(expand_one(tree, 0, *lm, nullptr, {ExpandMode::Greedy, 3, {}}, rng),
                  ContractViolation);
  CHECK_THROWS_AS(expand_one(tree, 0, *lm, nullptr, {ExpandMode::Greedy, 0, {}}, rng),
                  ContractViolation);
}

TEST_CASE("children of a prompt-rooted tree inherit the prompt") {
  auto lm = lm_a();
  DecodingTree tree({0}, lm->vocab().eos());
  Rng rng(1);
  auto kids = expand_one(tree, 0, *lm, nullptr, {ExpandMode::Greedy, 3, {}}, rng);
  // Context "a" is absent from the rows, so the default row applies.
  CHECK(tree.node(kids[0]).tokens == std::vector<TokenId>({0, 0}));
  CHECK(tree.node(kids[0]).probability == Approx(0.2));
  CHECK(tree.node(kids[2]).probability == Approx(0.6));
}
