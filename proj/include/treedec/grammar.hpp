#pragma once

/**
 * Context-free grammars and incremental prefix recognition.
 *
 * Grammar text format, one production per line:
 *
 *     S -> A B | c
 *     A -> a A | ""
 *
 * Symbols are whitespace-separated; `""` denotes the empty alternative; the
 * first left-hand side is the start symbol. Every symbol appearing only on
 * right-hand sides is a terminal. Blank lines and lines starting with `#`
 * are ignored.
 *
 * Recognition uses an Earley chart extended one terminal at a time. With
 * every nonterminal productive (enforced by pruning at construction), a
 * nonempty final row is equivalent to the consumed sequence being a prefix
 * of some sentence in the language, so the chart yields an exact
 * viable/complete/dead verdict per prefix.
 */

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "treedec/errors.hpp"

namespace treedec {

enum class PrefixVerdict { Dead, Viable, Complete };

struct GrammarSymbol {
  bool terminal;
  std::uint32_t index;
  bool operator==(const GrammarSymbol&) const = default;
};

struct Production {
  std::uint32_t lhs;
  std::vector<GrammarSymbol> rhs;
};

class Grammar {
 public:
  static std::shared_ptr<const Grammar> parse(const std::string& text);
  static std::shared_ptr<const Grammar> load(const std::string& path);

  const std::vector<std::string>& terminals() const { return terminal_names_; }
  const std::vector<std::string>& nonterminals() const { return nonterminal_names_; }
  const std::vector<Production>& productions() const { return productions_; }
  std::uint32_t start() const { return start_; }
  bool nullable(std::uint32_t nonterminal) const { return nullable_[nonterminal]; }

  std::optional<std::uint32_t> terminal_index(const std::string& name) const;

 private:
  friend class EarleyChart;
  std::vector<std::string> nonterminal_names_;
  std::vector<std::string> terminal_names_;
  std::vector<Production> productions_;  // unproductive rules pruned
  std::vector<std::vector<std::uint32_t>> by_lhs_;
  std::vector<bool> nullable_;
  std::uint32_t start_ = 0;
};

struct EarleyItem {
  std::uint32_t production;
  std::uint32_t dot;
  std::uint32_t origin;
  auto operator<=>(const EarleyItem&) const = default;
};

/**
 * Immutable chart over a consumed terminal sequence; advanced() returns a
 * new chart extended by one terminal. Rows persist because the completer
 * consults the originating row of each finished item.
 */
class EarleyChart {
 public:
  explicit EarleyChart(std::shared_ptr<const Grammar> grammar);

  EarleyChart advanced(std::uint32_t terminal) const;

  PrefixVerdict verdict() const;
  bool dead() const { return dead_; }
  std::size_t consumed() const { return consumed_; }
  const Grammar& grammar() const { return *grammar_; }

 private:
  std::shared_ptr<const Grammar> grammar_;
  std::vector<std::vector<EarleyItem>> rows_;
  std::size_t consumed_ = 0;
  bool dead_ = false;

  void close_row(std::size_t row_index);
};

/**
 * Classifies a terminal sequence against a grammar. Complete wins when the
 * sequence is both a sentence and extendable. Throws InputError for symbols
 * that are not terminals of the grammar.
 */
PrefixVerdict cfg_viable_prefix(const std::shared_ptr<const Grammar>& grammar,
                                std::span<const std::string> terminals);

}  // namespace treedec
