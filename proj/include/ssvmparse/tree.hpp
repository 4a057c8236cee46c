#pragma once

#include <cstddef>
#include <istream>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace ssvmparse {

/// A node label. Binarization metadata is stored structurally rather than
/// folded into the string, so "is this node artificial" never needs parsing.
struct Label {
  std::string base;
  bool artificial = false;
  std::vector<std::string> siblings;  // artificial nodes: spanned sibling labels
  std::vector<std::string> parents;   // nearest ancestor first

  Label() = default;
  Label(std::string b) : base(std::move(b)) {}  // NOLINT(google-explicit-constructor)
  Label(const char* b) : base(b) {}             // NOLINT(google-explicit-constructor)

  bool plain() const { return !artificial && parents.empty(); }

  /// Injective serialization `base^P1^P2|S1-S2`. Plain labels without
  /// reserved characters encode to themselves.
  std::string encode() const;
  static Label decode(std::string_view text);

  /// Form used when printing trees: plain labels verbatim.
  std::string display() const { return plain() ? base : encode(); }

  bool operator==(const Label&) const = default;
  auto operator<=>(const Label&) const = default;
};

/// Ordered labeled tree. Leaves carry a token and no children; internal
/// nodes carry a label and at least one child.
struct Tree {
  Label label;
  std::string token;
  std::vector<Tree> children;

  static Tree leaf(std::string token);
  static Tree node(Label label, std::vector<Tree> children);

  bool is_leaf() const { return children.empty(); }
  bool is_preterminal() const { return children.size() == 1 && children.front().is_leaf(); }

  std::size_t num_tokens() const;
  std::vector<std::string> tokens() const;

  bool operator==(const Tree&) const = default;
};

struct Constituent {
  std::string label;
  int start = 0;
  int end = 0;  // exclusive

  auto operator<=>(const Constituent&) const = default;
};

enum class CountingMode { Binarized, Unbinarized };

struct CountingConfig {
  CountingMode mode = CountingMode::Unbinarized;
  bool exclude_preterminals = true;
};

struct GoldReference {
  std::set<Constituent> constituents;

  std::size_t size() const { return constituents.size(); }
  bool contains(const Constituent& c) const { return constituents.count(c) > 0; }
};

class ParseError : public std::runtime_error {
 public:
  /// `index` is 0-based; the reported offset is the 1-based character
  /// position, with end of input at size + 1.
  ParseError(const std::string& what, std::size_t index);
  std::size_t offset() const { return offset_; }

 private:
  std::size_t offset_;
};

class TreeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

Tree parse_bracketed(std::string_view text);
std::string write_bracketed(const Tree& tree);

/// Reads a treebank stream. Trees spanning several lines are joined until
/// their brackets balance; blank lines are skipped.
std::vector<Tree> read_treebank(std::istream& in);
void write_treebank(std::ostream& out, const std::vector<Tree>& trees);

struct PreprocessOptions {
  bool strip_functional = true;
  bool remove_nulls = true;
  bool collapse_unaries = true;
};

Tree preprocess(const Tree& tree, const PreprocessOptions& options = {});

/// Label with functional-tag suffix removed (`NP-SBJ-1` -> `NP`). Labels
/// starting with `-` or `=` (e.g. `-LRB-`) are returned unchanged.
std::string strip_functional_tag(const std::string& label);

/// Counted label of an internal node under the given counting mode.
std::string counted_label(const Label& label, CountingMode mode);

GoldReference constituents(const Tree& tree, const CountingConfig& config);

}  // namespace ssvmparse
