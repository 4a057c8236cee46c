#include "ssvmparse/grammar.hpp"

#include <cctype>
#include <charconv>
#include <cstdio>
#include <sstream>

namespace ssvmparse {

namespace {

constexpr std::string_view kUnkPrefix = "<UNK";

bool is_unk_class(const std::string& terminal) { return terminal.starts_with(kUnkPrefix); }

template <typename T>
std::span<const T> index_span(const std::vector<std::vector<T>>& index, int key) {
  if (key < 0 || key >= static_cast<int>(index.size())) return {};
  return index[key];
}

template <typename T>
void index_push(std::vector<std::vector<T>>& index, int key, T value) {
  if (static_cast<int>(index.size()) <= key) index.resize(key + 1);
  index[key].push_back(value);
}

std::vector<std::string> parent_context(const std::vector<std::string>& ancestors, int vertical) {
  std::vector<std::string> context;
  for (int k = 0; k + 1 < vertical; ++k)
    context.push_back(k < static_cast<int>(ancestors.size()) ? ancestors[k] : kRootParent);
  return context;
}

Tree binarize_node(const Tree& tree, const BinConfig& config,
                   const std::vector<std::string>& ancestors) {
  if (tree.is_leaf()) return tree;

  Label label(tree.label.base);
  label.parents = parent_context(ancestors, config.vertical);
  if (tree.is_preterminal()) return Tree::node(std::move(label), {tree.children.front()});

  std::vector<std::string> below;
  below.push_back(tree.label.base);
  below.insert(below.end(), ancestors.begin(), ancestors.end());
  if (static_cast<int>(below.size()) > config.vertical) below.resize(config.vertical);

  const std::size_t k = tree.children.size();
  if (k == 1) {
    if (!tree.children.front().is_preterminal())
      throw TreeError("unary chain above the preterminal level under '" + tree.label.base +
                      "'; collapse unaries before binarizing");
    return Tree::node(std::move(label), {binarize_node(tree.children.front(), config, below)});
  }

  std::vector<Tree> children;
  children.reserve(k);
  for (const Tree& child : tree.children) {
    if (child.is_leaf())
      throw TreeError("node '" + tree.label.base + "' has token children next to other children");
    children.push_back(binarize_node(child, config, below));
  }
  if (k == 2) return Tree::node(std::move(label), std::move(children));

  auto artificial = [&](std::size_t from) {
    Label a(tree.label.base);
    a.artificial = true;
    a.parents = label.parents;
    for (std::size_t c = from; c < k; ++c) a.siblings.push_back(tree.children[c].label.base);
    if (config.horizontal >= 0 && static_cast<int>(a.siblings.size()) > config.horizontal)
      a.siblings.erase(a.siblings.begin(), a.siblings.end() - config.horizontal);
    return a;
  };

  Tree right = Tree::node(artificial(k - 2), {std::move(children[k - 2]), std::move(children[k - 1])});
  for (std::size_t c = k - 2; c-- > 1;)
    right = Tree::node(artificial(c), {std::move(children[c]), std::move(right)});
  return Tree::node(std::move(label), {std::move(children[0]), std::move(right)});
}

void splice_children(const Tree& tree, std::vector<Tree>& out);

Tree debinarize_node(const Tree& tree) {
  if (tree.is_leaf()) return tree;
  std::vector<Tree> children;
  splice_children(tree, children);
  return Tree::node(Label(tree.label.base), std::move(children));
}

void splice_children(const Tree& tree, std::vector<Tree>& out) {
  for (const Tree& child : tree.children) {
    if (!child.is_leaf() && child.label.artificial)
      splice_children(child, out);
    else
      out.push_back(debinarize_node(child));
  }
}

struct LexicalOccurrence {
  int lhs;
  std::string word;
};

void collect_rules(const Tree& tree, Grammar& grammar, std::vector<LexicalOccurrence>& lexical) {
  if (tree.is_leaf()) return;
  int lhs = grammar.intern_nonterminal(tree.label);
  if (tree.is_preterminal()) {
    const std::string& word = tree.children.front().token;
    grammar.add_production({ProductionKind::Lexical, lhs, grammar.intern_terminal(word)});
    lexical.push_back({lhs, word});
    return;
  }
  for (const Tree& child : tree.children) {
    if (child.is_leaf()) throw GrammarError("tree mixes tokens and constituents under " + tree.label.encode());
  }
  if (tree.children.size() == 1) {
    grammar.add_production(
        {ProductionKind::Unary, lhs, grammar.intern_nonterminal(tree.children[0].label)});
  } else if (tree.children.size() == 2) {
    grammar.add_production({ProductionKind::Binary, lhs,
                            grammar.intern_nonterminal(tree.children[0].label),
                            grammar.intern_nonterminal(tree.children[1].label)});
  } else {
    throw GrammarError("tree is not binarized at " + tree.label.encode());
  }
  for (const Tree& child : tree.children) collect_rules(child, grammar, lexical);
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  for (;;) {
    std::size_t tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

std::string format_weight(double w) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", w);
  return buf;
}

}  // namespace

int Grammar::intern_nonterminal(const Label& label) {
  std::string name = label.encode();
  auto it = nonterminal_ids_.find(name);
  if (it != nonterminal_ids_.end()) return it->second;
  int id = num_nonterminals();
  nonterminals_.push_back(label);
  nonterminal_names_.push_back(name);
  nonterminal_ids_.emplace(std::move(name), id);
  return id;
}

int Grammar::intern_terminal(const std::string& terminal) {
  auto it = terminal_ids_.find(terminal);
  if (it != terminal_ids_.end()) return it->second;
  int id = num_terminals();
  terminals_.push_back(terminal);
  terminal_ids_.emplace(terminal, id);
  return id;
}

int Grammar::add_production(const Production& p) {
  if (auto found = find_production(p)) return *found;
  int id = num_productions();
  productions_.push_back(p);
  production_ids_.emplace(p, id);
  switch (p.kind) {
    case ProductionKind::Binary:
      index_push(binary_by_left_, p.rhs1, id);
      index_push(binary_by_lhs_, p.lhs, id);
      break;
    case ProductionKind::Unary:
      index_push(unary_by_child_, p.rhs1, id);
      index_push(unary_by_lhs_, p.lhs, id);
      ++num_unary_;
      break;
    case ProductionKind::Lexical:
      index_push(lexical_by_terminal_, p.rhs1, id);
      break;
  }
  return id;
}

std::optional<int> Grammar::find_nonterminal(const Label& label) const {
  auto it = nonterminal_ids_.find(label.encode());
  if (it == nonterminal_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<int> Grammar::find_terminal(const std::string& terminal) const {
  auto it = terminal_ids_.find(terminal);
  if (it == terminal_ids_.end()) return std::nullopt;
  return it->second;
}

std::optional<int> Grammar::find_production(const Production& p) const {
  auto it = production_ids_.find(p);
  if (it == production_ids_.end()) return std::nullopt;
  return it->second;
}

std::string Grammar::describe(int production_id) const {
  const Production& p = productions_[production_id];
  std::string out = nonterminal_names_[p.lhs] + " ->";
  switch (p.kind) {
    case ProductionKind::Binary:
      out += " " + nonterminal_names_[p.rhs1] + " " + nonterminal_names_[p.rhs2];
      break;
    case ProductionKind::Unary:
      out += " " + nonterminal_names_[p.rhs1];
      break;
    case ProductionKind::Lexical:
      out += " '" + terminals_[p.rhs1] + "'";
      break;
  }
  return out;
}

std::optional<int> Grammar::resolve_terminal(const std::string& token) const {
  if (auto id = find_terminal(token); id && !is_unk_class(token)) return id;
  for (const std::string& cls : {unk_signature(token), unk_shape(token)}) {
    if (auto id = find_terminal(cls); id && !index_span(lexical_by_terminal_, *id).empty())
      return id;
  }
  return std::nullopt;
}

std::span<const int> Grammar::lexical_rules(const std::string& token) const {
  auto id = resolve_terminal(token);
  if (!id) return {};
  return index_span(lexical_by_terminal_, *id);
}

std::span<const int> Grammar::binary_by_left(int nt) const { return index_span(binary_by_left_, nt); }
std::span<const int> Grammar::binary_by_lhs(int nt) const { return index_span(binary_by_lhs_, nt); }
std::span<const int> Grammar::unary_by_child(int nt) const { return index_span(unary_by_child_, nt); }
std::span<const int> Grammar::unary_by_lhs(int nt) const { return index_span(unary_by_lhs_, nt); }

Tree binarize_tree(const Tree& tree, const BinConfig& config) {
  if (config.vertical < 1) throw TreeError("vertical markovization order must be >= 1");
  if (tree.is_leaf()) throw TreeError("cannot binarize a bare token");
  return binarize_node(tree, config, {});
}

Tree debinarize_tree(const Tree& tree) {
  if (!tree.is_leaf() && tree.label.artificial)
    throw TreeError("artificial node at the root cannot be spliced");
  return debinarize_node(tree);
}

std::string unk_shape(const std::string& word) {
  bool all_digits = !word.empty();
  for (char c : word) all_digits = all_digits && std::isdigit(static_cast<unsigned char>(c));
  if (all_digits) return "<UNK-NUM>";
  if (!word.empty() && std::isupper(static_cast<unsigned char>(word.front()))) return "<UNK-CAP>";
  return "<UNK>";
}

std::string unk_signature(const std::string& word) {
  std::string shape = unk_shape(word);
  if (shape == "<UNK-NUM>") return shape;
  std::string suffix = word.size() > 3 ? word.substr(word.size() - 3) : word;
  for (char& c : suffix) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  shape.pop_back();
  return shape + ":" + suffix + ">";
}

Grammar induce(const std::vector<Tree>& trees, int unk_threshold) {
  if (trees.empty()) throw GrammarError("cannot induce a grammar from an empty treebank");

  bool consistent = true;
  for (const Tree& t : trees) {
    if (t.is_leaf()) throw GrammarError("treebank contains a bare token");
    consistent = consistent && t.label == trees.front().label;
  }

  Grammar grammar;
  grammar.unk_threshold = unk_threshold;
  if (!consistent) {
    std::string wrapper = "TOP";
    for (bool clash = true; clash;) {
      clash = false;
      for (const Tree& t : trees) clash = clash || t.label.base == wrapper;
      if (clash) wrapper += "'";
    }
    grammar.root_wrapper = wrapper;
    grammar.set_start(grammar.intern_nonterminal(Label(wrapper)));
  } else {
    grammar.set_start(grammar.intern_nonterminal(trees.front().label));
  }

  std::vector<LexicalOccurrence> lexical;
  std::unordered_map<std::string, int> frequency;
  for (const Tree& t : trees) {
    collect_rules(wrap_root(t, grammar), grammar, lexical);
    for (const std::string& w : t.tokens()) ++frequency[w];
  }
  for (const LexicalOccurrence& occ : lexical) {
    if (frequency[occ.word] >= unk_threshold) continue;
    grammar.add_production(
        {ProductionKind::Lexical, occ.lhs, grammar.intern_terminal(unk_signature(occ.word))});
    grammar.add_production(
        {ProductionKind::Lexical, occ.lhs, grammar.intern_terminal(unk_shape(occ.word))});
  }
  return grammar;
}

Tree wrap_root(const Tree& tree, const Grammar& grammar) {
  if (!grammar.root_wrapper) return tree;
  return Tree::node(Label(*grammar.root_wrapper), {tree});
}

Tree unwrap_root(const Tree& tree, const Grammar& grammar) {
  if (grammar.root_wrapper && !tree.is_leaf() && tree.label.base == *grammar.root_wrapper &&
      tree.children.size() == 1)
    return tree.children.front();
  return tree;
}

void write_grammar(std::ostream& out, const Grammar& grammar, std::span<const double> weights) {
  if (!weights.empty() && static_cast<int>(weights.size()) != grammar.num_productions())
    throw GrammarError("weight vector length does not match the production count");
  out << "#start\t" << grammar.nonterminal_name(grammar.start()) << '\n';
  out << "#unk_threshold\t" << grammar.unk_threshold << '\n';
  if (grammar.root_wrapper) out << "#root_wrapper\t" << *grammar.root_wrapper << '\n';
  for (int id = 0; id < grammar.num_productions(); ++id) {
    const Production& p = grammar.production(id);
    switch (p.kind) {
      case ProductionKind::Binary:
        out << "B\t" << grammar.nonterminal_name(p.lhs) << '\t' << grammar.nonterminal_name(p.rhs1)
            << '\t' << grammar.nonterminal_name(p.rhs2);
        break;
      case ProductionKind::Unary:
        out << "U\t" << grammar.nonterminal_name(p.lhs) << '\t' << grammar.nonterminal_name(p.rhs1);
        break;
      case ProductionKind::Lexical:
        out << "L\t" << grammar.nonterminal_name(p.lhs) << '\t' << grammar.terminal(p.rhs1);
        break;
    }
    if (!weights.empty()) out << '\t' << format_weight(weights[id]);
    out << '\n';
  }
}

Grammar read_grammar(std::istream& in, std::vector<double>* weights) {
  Grammar grammar;
  std::optional<std::string> start;
  std::string line;
  int line_no = 0;
  if (weights) weights->clear();

  auto fail = [&](const std::string& msg) {
    throw GrammarError("grammar line " + std::to_string(line_no) + ": " + msg);
  };
  auto parse_weight = [&](const std::string& field) {
    double w = 0.0;
    auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), w);
    if (ec != std::errc() || ptr != field.data() + field.size()) fail("bad weight '" + field + "'");
    return w;
  };

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> f = split_tabs(line);
    if (f[0] == "#start") {
      if (f.size() != 2) fail("malformed #start header");
      start = f[1];
      continue;
    }
    if (f[0] == "#unk_threshold") {
      if (f.size() != 2) fail("malformed #unk_threshold header");
      grammar.unk_threshold = std::stoi(f[1]);
      continue;
    }
    if (f[0] == "#root_wrapper") {
      if (f.size() != 2) fail("malformed #root_wrapper header");
      grammar.root_wrapper = f[1];
      continue;
    }
    if (f[0].starts_with("#")) continue;

    std::size_t arity = f[0] == "B" ? 4 : (f[0] == "U" || f[0] == "L") ? 3 : 0;
    if (arity == 0) fail("unknown rule kind '" + f[0] + "'");
    std::size_t expected = arity + (weights ? 1 : 0);
    if (f.size() != expected) fail("expected " + std::to_string(expected) + " fields");

    Production p;
    p.lhs = grammar.intern_nonterminal(Label::decode(f[1]));
    if (f[0] == "B") {
      p.kind = ProductionKind::Binary;
      p.rhs1 = grammar.intern_nonterminal(Label::decode(f[2]));
      p.rhs2 = grammar.intern_nonterminal(Label::decode(f[3]));
    } else if (f[0] == "U") {
      p.kind = ProductionKind::Unary;
      p.rhs1 = grammar.intern_nonterminal(Label::decode(f[2]));
    } else {
      p.kind = ProductionKind::Lexical;
      p.rhs1 = grammar.intern_terminal(f[2]);
    }
    if (grammar.find_production(p)) fail("duplicate production");
    grammar.add_production(p);
    if (weights) weights->push_back(parse_weight(f[arity]));
  }
  if (!start) throw GrammarError("grammar file lacks a #start header");
  grammar.set_start(grammar.intern_nonterminal(Label::decode(*start)));
  return grammar;
}

}  // namespace ssvmparse
