#pragma once

#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ssvmparse/tree.hpp"

namespace ssvmparse {

enum class ProductionKind { Binary, Unary, Lexical };

/// A rule of the grammar. `lhs`, `rhs1`, `rhs2` index nonterminals, except
/// for Lexical rules where `rhs1` indexes a terminal.
struct Production {
  ProductionKind kind = ProductionKind::Binary;
  int lhs = -1;
  int rhs1 = -1;
  int rhs2 = -1;

  bool operator==(const Production&) const = default;
  auto operator<=>(const Production&) const = default;
};

class GrammarError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Binary/unary/lexical rule set with dense production ids and the indexes
/// the chart algorithms need. Append-only while being built, then shared
/// read-only.
class Grammar {
 public:
  int intern_nonterminal(const Label& label);
  int intern_terminal(const std::string& terminal);
  int add_production(const Production& p);

  std::optional<int> find_nonterminal(const Label& label) const;
  std::optional<int> find_terminal(const std::string& terminal) const;
  std::optional<int> find_production(const Production& p) const;

  const Label& nonterminal(int id) const { return nonterminals_[id]; }
  const std::string& nonterminal_name(int id) const { return nonterminal_names_[id]; }
  const std::string& terminal(int id) const { return terminals_[id]; }
  int num_nonterminals() const { return static_cast<int>(nonterminals_.size()); }
  int num_terminals() const { return static_cast<int>(terminals_.size()); }

  std::span<const Production> productions() const { return productions_; }
  const Production& production(int id) const { return productions_[id]; }
  int num_productions() const { return static_cast<int>(productions_.size()); }
  std::string describe(int production_id) const;

  int start() const { return start_; }
  void set_start(int nonterminal) { start_ = nonterminal; }

  int unk_threshold = 2;

  /// Set when induce() had to wrap trees with differing roots.
  std::optional<std::string> root_wrapper;

  /// Lexical rules applicable to a token: the token's own rules when it is a
  /// known word, otherwise the rules of its unknown-word classes.
  std::span<const int> lexical_rules(const std::string& token) const;

  /// Terminal used for `token` (itself or an unknown-word class), if any.
  std::optional<int> resolve_terminal(const std::string& token) const;

  std::span<const int> binary_by_left(int nonterminal) const;
  std::span<const int> binary_by_lhs(int nonterminal) const;
  std::span<const int> unary_by_child(int nonterminal) const;
  std::span<const int> unary_by_lhs(int nonterminal) const;
  bool has_unary() const { return num_unary_ > 0; }

 private:
  std::vector<Label> nonterminals_;
  std::vector<std::string> nonterminal_names_;
  std::unordered_map<std::string, int> nonterminal_ids_;
  std::vector<std::string> terminals_;
  std::unordered_map<std::string, int> terminal_ids_;
  std::vector<Production> productions_;
  std::map<Production, int> production_ids_;
  int start_ = -1;
  int num_unary_ = 0;

  std::vector<std::vector<int>> lexical_by_terminal_;
  std::vector<char> is_word_;  // terminal is a real word, not an unknown-word class
  std::vector<std::vector<int>> binary_by_left_;
  std::vector<std::vector<int>> binary_by_lhs_;
  std::vector<std::vector<int>> unary_by_child_;
  std::vector<std::vector<int>> unary_by_lhs_;
};

/// Horizontal/vertical markovization settings. `horizontal` < 0 means
/// unbounded sibling context.
struct BinConfig {
  static constexpr int kUnbounded = -1;
  int horizontal = kUnbounded;
  int vertical = 1;
};

/// Parent label used above the root.
inline constexpr const char* kRootParent = "?";

Tree binarize_tree(const Tree& tree, const BinConfig& config = {});
Tree debinarize_tree(const Tree& tree);

/// Unknown-word classes: a detailed signature (capitalization, digits,
/// up to three suffix characters) and a coarse shape fallback.
std::string unk_signature(const std::string& word);
std::string unk_shape(const std::string& word);

Grammar induce(const std::vector<Tree>& binarized_trees, int unk_threshold = 2);

/// Wraps or unwraps the TOP node when the grammar needed one.
Tree wrap_root(const Tree& tree, const Grammar& grammar);
Tree unwrap_root(const Tree& tree, const Grammar& grammar);

/// Grammar file: `#start`, optional `#unk_threshold` / `#root_wrapper`
/// headers, then `B lhs rhs1 rhs2`, `U lhs child`, `L lhs terminal` lines
/// (tab separated), in production-id order. With weights, each rule line
/// carries one more column.
void write_grammar(std::ostream& out, const Grammar& grammar,
                   std::span<const double> weights = {});
Grammar read_grammar(std::istream& in, std::vector<double>* weights = nullptr);

}  // namespace ssvmparse
