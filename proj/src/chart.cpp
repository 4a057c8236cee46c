#include "ssvmparse/chart.hpp"

#include <cmath>
#include <limits>

namespace ssvmparse {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

int child_symbol(const Grammar& grammar, const Tree& child, const Tree& parent) {
  auto id = grammar.find_nonterminal(child.label);
  if (!id)
    throw GrammarError("production not in grammar: " + parent.label.encode() + " -> ... " +
                       child.label.encode());
  return *id;
}

void accumulate(const Tree& tree, const Grammar& grammar, FeatureVector& fv) {
  if (tree.is_leaf()) return;
  if (tree.is_preterminal()) {
    ++fv.counts[lexical_production(grammar, tree.label, tree.children.front().token)];
    return;
  }
  auto lhs = grammar.find_nonterminal(tree.label);
  if (!lhs) throw GrammarError("nonterminal not in grammar: " + tree.label.encode());

  Production p;
  p.lhs = *lhs;
  if (tree.children.size() == 1) {
    p.kind = ProductionKind::Unary;
    p.rhs1 = child_symbol(grammar, tree.children[0], tree);
  } else if (tree.children.size() == 2) {
    p.kind = ProductionKind::Binary;
    p.rhs1 = child_symbol(grammar, tree.children[0], tree);
    p.rhs2 = child_symbol(grammar, tree.children[1], tree);
  } else {
    throw GrammarError("tree is not binarized at " + tree.label.encode());
  }
  auto id = grammar.find_production(p);
  if (!id) {
    std::string rhs;
    for (const Tree& c : tree.children) rhs += " " + c.label.encode();
    throw GrammarError("production not in grammar: " + tree.label.encode() + " ->" + rhs);
  }
  ++fv.counts[*id];
  for (const Tree& c : tree.children) accumulate(c, grammar, fv);
}

// One chart item: best derivation of a symbol over a span within one layer.
// Layer 0 holds lexical (length 1) or binary items, layer 1 unary items on top.
struct Item {
  double score = kNegInf;
  int production = -1;
  int split = -1;
};

struct Cell {
  std::vector<Item> base;
  std::vector<Item> top;
  std::vector<int> active;  // symbols with a finite merged score

  double best(int sym) const { return std::max(base[sym].score, top[sym].score); }
};

// Returns true if (score, split, production) beats the incumbent.
bool improves(const Item& cur, double score, int split, int production) {
  if (score > cur.score) return true;
  if (score < cur.score || cur.production < 0) return false;
  if (split != cur.split) return split > cur.split;
  return production < cur.production;
}

class Viterbi {
 public:
  Viterbi(const Model& model, const std::vector<std::string>& tokens)
      : model_(model), grammar_(*model.grammar), tokens_(tokens), n_(static_cast<int>(tokens.size())) {
    const int symbols = grammar_.num_nonterminals();
    cells_.resize(static_cast<std::size_t>(n_) * (n_ + 1));
    for (Cell& c : cells_) {
      c.base.assign(symbols, Item{});
      c.top.assign(symbols, Item{});
    }
  }

  std::optional<ParseResult> run() {
    if (n_ == 0) return std::nullopt;
    for (int i = 0; i < n_; ++i) fill_lexical(i);
    for (int len = 2; len <= n_; ++len)
      for (int i = 0; i + len <= n_; ++i) fill_binary(i, i + len);

    const Cell& root = cell(0, n_);
    const int start = grammar_.start();
    if (start < 0) return std::nullopt;

    // A start unary may also sit on a unary node spanning the sentence.
    double best = root.best(start);
    int stacked = -1;
    for (int pid : grammar_.unary_by_lhs(start)) {
      const Item& under = root.top[grammar_.production(pid).rhs1];
      if (under.score == kNegInf) continue;
      double total = model_.weight(pid) + under.score;
      if (total > best) {
        best = total;
        stacked = pid;
      }
    }
    if (best == kNegInf) return std::nullopt;
    if (stacked < 0) return ParseResult{build(0, n_, start), best};
    const int child = grammar_.production(stacked).rhs1;
    return ParseResult{Tree::node(grammar_.nonterminal(start), {build_top(0, n_, child)}), best};
  }

 private:
  Cell& cell(int i, int j) { return cells_[static_cast<std::size_t>(i) * (n_ + 1) + j]; }

  void fill_lexical(int i) {
    Cell& c = cell(i, i + 1);
    for (int pid : grammar_.lexical_rules(tokens_[i])) {
      const Production& p = grammar_.production(pid);
      double s = model_.weight(pid);
      if (improves(c.base[p.lhs], s, -1, pid)) c.base[p.lhs] = {s, pid, -1};
    }
    finish(c);
  }

  void fill_binary(int i, int j) {
    Cell& c = cell(i, j);
    for (int s = i + 1; s < j; ++s) {
      const Cell& left = cell(i, s);
      const Cell& right = cell(s, j);
      for (int b : left.active) {
        double lscore = left.best(b);
        for (int pid : grammar_.binary_by_left(b)) {
          const Production& p = grammar_.production(pid);
          double rscore = right.best(p.rhs2);
          if (rscore == kNegInf) continue;
          double total = model_.weight(pid) + lscore + rscore;
          if (improves(c.base[p.lhs], total, s, pid)) c.base[p.lhs] = {total, pid, s};
        }
      }
    }
    finish(c);
  }

  // Applies unary rules once over the base layer and records active symbols.
  void finish(Cell& c) {
    const int symbols = grammar_.num_nonterminals();
    if (grammar_.has_unary()) {
      for (int b = 0; b < symbols; ++b) {
        if (c.base[b].score == kNegInf) continue;
        for (int pid : grammar_.unary_by_child(b)) {
          const Production& p = grammar_.production(pid);
          double total = model_.weight(pid) + c.base[b].score;
          if (improves(c.top[p.lhs], total, -1, pid)) c.top[p.lhs] = {total, pid, -1};
        }
      }
    }
    for (int a = 0; a < symbols; ++a)
      if (c.best(a) != kNegInf) c.active.push_back(a);
  }

  Tree build(int i, int j, int sym) {
    Cell& c = cell(i, j);
    // Base wins ties against the unary layer.
    bool use_top = c.top[sym].score > c.base[sym].score;
    return use_top ? build_top(i, j, sym) : build_base(i, j, sym);
  }

  Tree build_top(int i, int j, int sym) {
    const Item& item = cell(i, j).top[sym];
    const Production& p = grammar_.production(item.production);
    return Tree::node(grammar_.nonterminal(sym), {build_base(i, j, p.rhs1)});
  }

  Tree build_base(int i, int j, int sym) {
    const Item& item = cell(i, j).base[sym];
    const Production& p = grammar_.production(item.production);
    if (p.kind == ProductionKind::Lexical)
      return Tree::node(grammar_.nonterminal(sym), {Tree::leaf(tokens_[i])});
    return Tree::node(grammar_.nonterminal(sym),
                      {build(i, item.split, p.rhs1), build(item.split, j, p.rhs2)});
  }

  const Model& model_;
  const Grammar& grammar_;
  const std::vector<std::string>& tokens_;
  int n_;
  std::vector<Cell> cells_;
};

}  // namespace

Model Model::zeros(std::shared_ptr<const Grammar> grammar) {
  Model m;
  m.weights = Weights::Zero(grammar->num_productions());
  m.grammar = std::move(grammar);
  return m;
}

int FeatureVector::total() const {
  int t = 0;
  for (const auto& [id, count] : counts) t += count;
  return t;
}

SparseFeatures FeatureVector::to_sparse(int dimension) const {
  SparseFeatures v(dimension);
  v.reserve(static_cast<Eigen::Index>(counts.size()));
  for (const auto& [id, count] : counts) v.insertBack(id) = count;
  return v;
}

SparseFeatures difference(const FeatureVector& lhs, const FeatureVector& rhs, int dimension) {
  std::map<int, int> diff = lhs.counts;
  for (const auto& [id, count] : rhs.counts) diff[id] -= count;
  SparseFeatures v(dimension);
  for (const auto& [id, count] : diff)
    if (count != 0) v.insertBack(id) = count;
  return v;
}

int lexical_production(const Grammar& grammar, const Label& tag, const std::string& token) {
  auto lhs = grammar.find_nonterminal(tag);
  if (!lhs) throw GrammarError("preterminal not in grammar: " + tag.encode());
  if (auto terminal = grammar.resolve_terminal(token)) {
    if (auto id = grammar.find_production({ProductionKind::Lexical, *lhs, *terminal})) return *id;
  }
  throw GrammarError("production not in grammar: " + tag.encode() + " -> '" + token + "'");
}

FeatureVector feature_vector(const Tree& tree, const Grammar& grammar) {
  FeatureVector fv;
  accumulate(tree, grammar, fv);
  return fv;
}

double score(const Model& model, const Tree& tree) {
  return dot(model.weights, feature_vector(tree, *model.grammar));
}

std::optional<ParseResult> cky_parse_scored(const Model& model,
                                            const std::vector<std::string>& tokens) {
  return Viterbi(model, tokens).run();
}

std::optional<Tree> cky_parse(const Model& model, const std::vector<std::string>& tokens) {
  auto result = cky_parse_scored(model, tokens);
  if (!result) return std::nullopt;
  return std::move(result->tree);
}

void write_model(std::ostream& out, const Model& model) {
  std::vector<double> w(model.weights.data(), model.weights.data() + model.weights.size());
  write_grammar(out, *model.grammar, w);
}

Model read_model(std::istream& in) {
  std::vector<double> w;
  auto grammar = std::make_shared<Grammar>(read_grammar(in, &w));
  Model m;
  m.weights = Eigen::Map<const Weights>(w.data(), static_cast<Eigen::Index>(w.size()));
  for (double x : w)
    if (!std::isfinite(x)) throw GrammarError("model weights must be finite");
  m.grammar = std::move(grammar);
  return m;
}

}  // namespace ssvmparse
