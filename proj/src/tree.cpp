#include "ssvmparse/tree.hpp"

#include <cctype>
#include <optional>
#include <sstream>

namespace ssvmparse {

namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }

void append_escaped(std::string& out, std::string_view text, std::string_view reserved) {
  for (char c : text) {
    if (c == '\\' || reserved.find(c) != std::string_view::npos) out.push_back('\\');
    out.push_back(c);
  }
}

class BracketReader {
 public:
  explicit BracketReader(std::string_view text) : text_(text) {}

  Tree read_root() {
    skip_space();
    if (pos_ >= text_.size()) throw ParseError("empty input", pos_);
    if (text_[pos_] != '(') throw ParseError("expected '('", pos_);
    std::optional<Tree> root = read_node(true);
    skip_space();
    if (pos_ != text_.size()) throw ParseError("trailing characters after tree", pos_);
    return std::move(*root);
  }

 private:
  void skip_space() {
    while (pos_ < text_.size() && is_space(text_[pos_])) ++pos_;
  }

  std::string read_symbol() {
    std::size_t start = pos_;
    while (pos_ < text_.size() && !is_space(text_[pos_]) && text_[pos_] != '(' &&
           text_[pos_] != ')')
      ++pos_;
    return std::string(text_.substr(start, pos_ - start));
  }

  // Positioned on '('.
  std::optional<Tree> read_node(bool is_root) {
    std::size_t open = pos_;
    ++pos_;
    skip_space();
    if (pos_ >= text_.size()) throw ParseError("unbalanced parentheses", pos_);
    if (text_[pos_] == ')') throw ParseError("empty node", open);

    std::string label;
    if (text_[pos_] != '(') label = read_symbol();

    std::vector<Tree> children;
    for (;;) {
      skip_space();
      if (pos_ >= text_.size()) throw ParseError("unbalanced parentheses", pos_);
      char c = text_[pos_];
      if (c == ')') {
        ++pos_;
        break;
      }
      if (c == '(') {
        children.push_back(std::move(*read_node(false)));
      } else {
        children.push_back(Tree::leaf(read_symbol()));
      }
    }

    if (label.empty()) {
      // PTB files wrap each sentence in an unlabeled bracket.
      if (is_root && children.size() == 1 && !children.front().is_leaf())
        return std::move(children.front());
      throw ParseError("empty node", open);
    }
    if (children.empty()) throw ParseError("internal node with zero children", open);
    return Tree::node(Label(std::move(label)), std::move(children));
  }

  std::string_view text_;
  std::size_t pos_ = 0;
};

void write_node(const Tree& tree, std::string& out) {
  if (tree.is_leaf()) {
    for (char c : tree.token) {
      if (c == '(')
        out += "-LRB-";
      else if (c == ')')
        out += "-RRB-";
      else
        out.push_back(c);
    }
    return;
  }
  out.push_back('(');
  out += tree.label.display();
  for (const Tree& child : tree.children) {
    out.push_back(' ');
    write_node(child, out);
  }
  out.push_back(')');
}

void collect_tokens(const Tree& tree, std::vector<std::string>& out) {
  if (tree.is_leaf()) {
    out.push_back(tree.token);
    return;
  }
  for (const Tree& c : tree.children) collect_tokens(c, out);
}

std::optional<Tree> preprocess_node(const Tree& tree, const PreprocessOptions& options) {
  if (tree.is_leaf()) return tree;
  if (options.remove_nulls && tree.label.base == "-NONE-") return std::nullopt;

  Tree out;
  out.label = tree.label;
  if (options.strip_functional) out.label.base = strip_functional_tag(out.label.base);
  for (const Tree& child : tree.children) {
    if (auto kept = preprocess_node(child, options)) out.children.push_back(std::move(*kept));
  }
  if (out.children.empty()) return std::nullopt;

  if (options.collapse_unaries) {
    while (out.children.size() == 1 && !out.children.front().is_leaf() &&
           !out.children.front().is_preterminal()) {
      Tree child = std::move(out.children.front());
      out.label.base += "+" + child.label.base;
      out.children = std::move(child.children);
    }
  }
  return out;
}

int collect_constituents(const Tree& tree, int start, const CountingConfig& config,
                         GoldReference& gold) {
  if (tree.is_leaf()) return start + 1;
  int end = start;
  for (const Tree& child : tree.children) end = collect_constituents(child, end, config, gold);

  bool skip = (config.exclude_preterminals && tree.is_preterminal()) ||
              (config.mode == CountingMode::Unbinarized && tree.label.artificial);
  if (!skip) gold.constituents.insert({counted_label(tree.label, config.mode), start, end});
  return end;
}

}  // namespace

std::string Label::encode() const {
  std::string out;
  append_escaped(out, base, "^|");
  for (const std::string& p : parents) {
    out.push_back('^');
    append_escaped(out, p, "^|");
  }
  if (artificial) {
    out.push_back('|');
    for (std::size_t k = 0; k < siblings.size(); ++k) {
      if (k > 0) out.push_back('-');
      append_escaped(out, siblings[k], "^|-");
    }
  }
  return out;
}

Label Label::decode(std::string_view text) {
  enum class Part { Base, Parent, Sibling };
  Label label;
  Part part = Part::Base;
  std::string current;
  bool sibling_open = false;

  auto flush = [&] {
    switch (part) {
      case Part::Base:
        label.base = std::move(current);
        break;
      case Part::Parent:
        label.parents.push_back(std::move(current));
        break;
      case Part::Sibling:
        if (sibling_open || !current.empty()) label.siblings.push_back(std::move(current));
        break;
    }
    current.clear();
  };

  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c == '\\' && i + 1 < text.size()) {
      current.push_back(text[++i]);
      continue;
    }
    if (c == '^' && part != Part::Sibling) {
      flush();
      part = Part::Parent;
    } else if (c == '|' && part != Part::Sibling) {
      flush();
      part = Part::Sibling;
      label.artificial = true;
    } else if (c == '-' && part == Part::Sibling) {
      sibling_open = true;
      flush();
    } else {
      current.push_back(c);
    }
  }
  flush();
  return label;
}

Tree Tree::leaf(std::string token) {
  Tree t;
  t.token = std::move(token);
  return t;
}

Tree Tree::node(Label label, std::vector<Tree> children) {
  Tree t;
  t.label = std::move(label);
  t.children = std::move(children);
  return t;
}

std::size_t Tree::num_tokens() const {
  if (is_leaf()) return 1;
  std::size_t n = 0;
  for (const Tree& c : children) n += c.num_tokens();
  return n;
}

std::vector<std::string> Tree::tokens() const {
  std::vector<std::string> out;
  collect_tokens(*this, out);
  return out;
}

ParseError::ParseError(const std::string& what, std::size_t index)
    : std::runtime_error("parse error at offset " + std::to_string(index + 1) + ": " + what),
      offset_(index + 1) {}

Tree parse_bracketed(std::string_view text) { return BracketReader(text).read_root(); }

std::string write_bracketed(const Tree& tree) {
  std::string out;
  write_node(tree, out);
  return out;
}

std::vector<Tree> read_treebank(std::istream& in) {
  std::vector<Tree> trees;
  std::string line;
  std::string pending;
  int depth = 0;
  while (std::getline(in, line)) {
    bool blank = true;
    for (char c : line) {
      if (c == '(') ++depth;
      if (c == ')') --depth;
      if (!is_space(c)) blank = false;
    }
    if (blank && pending.empty()) continue;
    if (!pending.empty()) pending.push_back(' ');
    pending += line;
    if (depth <= 0) {
      trees.push_back(parse_bracketed(pending));
      pending.clear();
      depth = 0;
    }
  }
  if (!pending.empty()) trees.push_back(parse_bracketed(pending));
  return trees;
}

void write_treebank(std::ostream& out, const std::vector<Tree>& trees) {
  for (const Tree& t : trees) out << write_bracketed(t) << '\n';
}

std::string strip_functional_tag(const std::string& label) {
  std::size_t cut = label.find_first_of("-=");
  if (cut == std::string::npos || cut == 0) return label;
  return label.substr(0, cut);
}

Tree preprocess(const Tree& tree, const PreprocessOptions& options) {
  std::optional<Tree> out = preprocess_node(tree, options);
  if (!out || out->is_leaf()) throw TreeError("empty tree after preprocessing");
  return std::move(*out);
}

std::string counted_label(const Label& label, CountingMode mode) {
  return mode == CountingMode::Unbinarized ? label.base : label.encode();
}

GoldReference constituents(const Tree& tree, const CountingConfig& config) {
  GoldReference gold;
  collect_constituents(tree, 0, config, gold);
  return gold;
}

}  // namespace ssvmparse
