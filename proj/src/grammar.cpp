#include "treedec/grammar.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace treedec {

namespace {

struct RawProduction {
  std::string lhs;
  std::vector<std::string> rhs;  // empty means epsilon
};

std::vector<RawProduction> parse_lines(const std::string& text) {
  std::vector<RawProduction> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ls(line);
    std::vector<std::string> words;
    std::string w;
    while (ls >> w) words.push_back(w);
    if (words.empty() || words[0][0] == '#') continue;
    if (words.size() < 2 || words[1] != "->") {
      throw LoadError("grammar line " + std::to_string(line_no) +
                      ": expected 'NT -> symbols [| symbols ...]'");
    }
    RawProduction current{words[0], {}};
    bool saw_alternative_symbol = false;
    auto flush = [&]() {
      if (current.rhs.size() == 1 && current.rhs[0] == "\"\"") current.rhs.clear();
      else if (!current.rhs.empty() &&
               std::count(current.rhs.begin(), current.rhs.end(), "\"\"") > 0) {
        throw LoadError("grammar line " + std::to_string(line_no) +
                        ": \"\" cannot be mixed with other symbols");
      }
      out.push_back(current);
      current.rhs.clear();
    };
    for (std::size_t i = 2; i < words.size(); ++i) {
      if (words[i] == "|") {
        if (!saw_alternative_symbol) {
          throw LoadError("grammar line " + std::to_string(line_no) + ": empty alternative");
        }
        flush();
        saw_alternative_symbol = false;
      } else {
        current.rhs.push_back(words[i]);
        saw_alternative_symbol = true;
      }
    }
    if (!saw_alternative_symbol) {
      throw LoadError("grammar line " + std::to_string(line_no) + ": empty alternative");
    }
    flush();
  }
  if (out.empty()) throw LoadError("grammar has no productions");
  return out;
}

}  // namespace

std::shared_ptr<const Grammar> Grammar::parse(const std::string& text) {
  auto raw = parse_lines(text);
  auto g = std::make_shared<Grammar>();

  std::map<std::string, std::uint32_t> nt_index;
  for (const auto& p : raw) {
    if (!nt_index.count(p.lhs)) {
      nt_index[p.lhs] = static_cast<std::uint32_t>(g->nonterminal_names_.size());
      g->nonterminal_names_.push_back(p.lhs);
    }
  }
  g->start_ = nt_index.at(raw.front().lhs);

  std::map<std::string, std::uint32_t> t_index;
  for (const auto& p : raw) {
    Production prod{nt_index.at(p.lhs), {}};
    for (const auto& sym : p.rhs) {
      auto nt = nt_index.find(sym);
      if (nt != nt_index.end()) {
        prod.rhs.push_back({false, nt->second});
      } else {
        auto [it, inserted] = t_index.emplace(
            sym, static_cast<std::uint32_t>(g->terminal_names_.size()));
        if (inserted) g->terminal_names_.push_back(sym);
        prod.rhs.push_back({true, it->second});
      }
    }
    g->productions_.push_back(std::move(prod));
  }

  // Productive nonterminals derive at least one terminal string; rules that
  // reference an unproductive nonterminal can never finish a parse and are
  // dropped so that a nonempty chart row always implies a viable prefix.
  std::vector<bool> productive(g->nonterminal_names_.size(), false);
  bool changed = true;
  while (changed) {
    changed = false;
    for (const auto& p : g->productions_) {
      if (productive[p.lhs]) continue;
      bool ok = true;
      for (const auto& s : p.rhs) {
        if (!s.terminal && !productive[s.index]) { ok = false; break; }
      }
      if (ok) { productive[p.lhs] = true; changed = true; }
    }
  }
  std::vector<Production> kept;
  for (auto& p : g->productions_) {
    bool ok = productive[p.lhs];
    for (const auto& s : p.rhs) {
      if (!s.terminal && !productive[s.index]) ok = false;
    }
    if (ok) kept.push_back(std::move(p));
  }
  g->productions_ = std::move(kept);

  g->by_lhs_.assign(g->nonterminal_names_.size(), {});
  for (std::uint32_t i = 0; i < g->productions_.size(); ++i) {
    g->by_lhs_[g->productions_[i].lhs].push_back(i);
  }

  g->nullable_.assign(g->nonterminal_names_.size(), false);
  changed = true;
  while (changed) {
    changed = false;
    for (const auto& p : g->productions_) {
      if (g->nullable_[p.lhs]) continue;
      bool all_null = true;
      for (const auto& s : p.rhs) {
        if (s.terminal || !g->nullable_[s.index]) { all_null = false; break; }
      }
      if (all_null) { g->nullable_[p.lhs] = true; changed = true; }
    }
  }
  return g;
}

std::shared_ptr<const Grammar> Grammar::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw LoadError("cannot open grammar: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str());
}

std::optional<std::uint32_t> Grammar::terminal_index(const std::string& name) const {
  for (std::uint32_t i = 0; i < terminal_names_.size(); ++i) {
    if (terminal_names_[i] == name) return i;
  }
  return std::nullopt;
}

// ============================================================================
// Earley chart
// ============================================================================

EarleyChart::EarleyChart(std::shared_ptr<const Grammar> grammar)
    : grammar_(std::move(grammar)) {
  rows_.emplace_back();
  for (std::uint32_t p : grammar_->by_lhs_[grammar_->start_]) {
    rows_[0].push_back({p, 0, 0});
  }
  close_row(0);
  dead_ = rows_[0].empty();
}

void EarleyChart::close_row(std::size_t row_index) {
  auto& row = rows_[row_index];
  std::set<EarleyItem> seen(row.begin(), row.end());
  row.assign(seen.begin(), seen.end());
  const auto& prods = grammar_->productions_;

  // Worklist closure. Predicting a nullable nonterminal also advances the
  // predictor immediately, which covers completions with an empty span
  // added after their would-be completer ran.
  for (std::size_t cursor = 0; cursor < row.size(); ++cursor) {
    EarleyItem item = row[cursor];
    const Production& prod = prods[item.production];
    auto add = [&](EarleyItem it) {
      if (seen.insert(it).second) row.push_back(it);
    };
    if (item.dot < prod.rhs.size()) {
      const GrammarSymbol& sym = prod.rhs[item.dot];
      if (!sym.terminal) {
        for (std::uint32_t p : grammar_->by_lhs_[sym.index]) {
          add({p, 0, static_cast<std::uint32_t>(row_index)});
        }
        if (grammar_->nullable_[sym.index]) {
          add({item.production, item.dot + 1, item.origin});
        }
      }
    } else {
      // Completer: advance every item in the origin row waiting on this lhs.
      const std::uint32_t lhs = prod.lhs;
      const auto& origin_row = rows_[item.origin];
      // Items may be appended to origin_row while iterating when origin ==
      // row_index; index-based loop keeps that safe, and the nullable rule
      // above guarantees no advancement is missed for later insertions.
      for (std::size_t i = 0; i < origin_row.size(); ++i) {
        EarleyItem cand = origin_row[i];
        const Production& cp = prods[cand.production];
        if (cand.dot < cp.rhs.size() && !cp.rhs[cand.dot].terminal &&
            cp.rhs[cand.dot].index == lhs) {
          add({cand.production, cand.dot + 1, cand.origin});
        }
      }
    }
  }
}

EarleyChart EarleyChart::advanced(std::uint32_t terminal) const {
  EarleyChart next(*this);
  next.consumed_ = consumed_ + 1;
  if (dead_) return next;
  const auto& prods = grammar_->productions_;
  std::vector<EarleyItem> scanned;
  for (const EarleyItem& item : rows_.back()) {
    const Production& prod = prods[item.production];
    if (item.dot < prod.rhs.size() && prod.rhs[item.dot].terminal &&
        prod.rhs[item.dot].index == terminal) {
      scanned.push_back({item.production, item.dot + 1, item.origin});
    }
  }
  next.rows_.push_back(std::move(scanned));
  next.close_row(next.rows_.size() - 1);
  if (next.rows_.back().empty()) next.dead_ = true;
  return next;
}

PrefixVerdict EarleyChart::verdict() const {
  if (dead_) return PrefixVerdict::Dead;
  bool accepted = false;
  for (const EarleyItem& item : rows_.back()) {
    const Production& prod = grammar_->productions_[item.production];
    if (item.origin == 0 && item.dot == prod.rhs.size() &&
        prod.lhs == grammar_->start_) {
      accepted = true;
      break;
    }
  }
  if (accepted) return PrefixVerdict::Complete;
  return rows_.back().empty() ? PrefixVerdict::Dead : PrefixVerdict::Viable;
}

PrefixVerdict cfg_viable_prefix(const std::shared_ptr<const Grammar>& grammar,
                                std::span<const std::string> terminals) {
  EarleyChart chart(grammar);
  for (const std::string& t : terminals) {
    auto idx = grammar->terminal_index(t);
    if (!idx) throw InputError("unknown terminal: '" + t + "'");
    if (chart.dead()) return PrefixVerdict::Dead;
    chart = chart.advanced(*idx);
  }
  return chart.verdict();
}

}  // namespace treedec
