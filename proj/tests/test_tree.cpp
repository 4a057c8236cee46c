#include "doctest.h"

#include <functional>
#include <random>
#include <sstream>

#include "ssvmparse/grammar.hpp"
#include "ssvmparse/tree.hpp"

using namespace ssvmparse;

namespace {

Tree T(std::string_view s) { return parse_bracketed(s); }

std::set<Constituent> spans(std::initializer_list<Constituent> list) { return {list}; }

}  // namespace

TEST_CASE("parse_bracketed reads structure") {
  Tree t = T("(X (X a) (X a))");
  CHECK(t.label.base == "X");
  REQUIRE(t.children.size() == 2);
  CHECK(t.children[0].is_preterminal());
  CHECK(t.children[1].is_preterminal());
  CHECK(t.num_tokens() == 2);

  Tree s = T("(S (NP (D the) (N dog)) (VP (V barked)))");
  CHECK(s.label.base == "S");
  CHECK(s.tokens() == std::vector<std::string>{"the", "dog", "barked"});
}

TEST_CASE("parse_bracketed reports error offsets") {
  try {
    T("(S (NP");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 7);
    CHECK(std::string(e.what()).find("offset 7") != std::string::npos);
  }
  CHECK_THROWS_AS(T("(S (NP a)))"), ParseError);
  CHECK_THROWS_AS(T("()"), ParseError);
  CHECK_THROWS_AS(T("(S)"), ParseError);
  CHECK_THROWS_AS(T(""), ParseError);
}

TEST_CASE("write_bracketed round-trips") {
  for (const char* s : {"(X (X a) (X a))", "(S (NP (D the) (N dog)) (VP (V barked)))", "(X a)"}) {
    CHECK(write_bracketed(T(s)) == s);
    CHECK(T(write_bracketed(T(s))) == T(s));
  }
  CHECK(write_bracketed(T("(X a)")) == "(X a)");

  Label art("T");
  art.artificial = true;
  art.siblings = {"A", "A"};
  Tree b = Tree::node("T", {T("(A a)"), Tree::node(art, {T("(A a)"), T("(A a)")})});
  const std::string text = write_bracketed(b);
  CHECK(text == "(T (A a) (T|A-A (A a) (A a)))");
  CHECK(write_bracketed(parse_bracketed(text)) == text);

  Label annotated("NP");
  annotated.parents = {"S"};
  Tree p = Tree::node(annotated, {T("(D the)")});
  CHECK(write_bracketed(p) == "(NP^S (D the))");
  CHECK(parse_bracketed(write_bracketed(p)).label.base == "NP^S");
}

TEST_CASE("write_bracketed escapes bracket tokens") {
  Tree t = Tree::node("X", {Tree::node("P", {Tree::leaf("(")}), Tree::node("P", {Tree::leaf(")")})});
  CHECK(write_bracketed(t) == "(X (P -LRB-) (P -RRB-))");
}

TEST_CASE("label encoding is injective on awkward strings") {
  Label a("A|B");
  Label b("A");
  b.artificial = true;
  b.siblings = {"B"};
  CHECK(a.encode() != b.encode());
  CHECK(Label::decode(a.encode()) == a);
  CHECK(Label::decode(b.encode()) == b);

  Label c("X^Y");
  c.artificial = true;
  c.siblings = {"P-Q", "R"};
  c.parents = {"S\\"};
  CHECK(Label::decode(c.encode()) == c);

  Label empty("T");
  empty.artificial = true;
  CHECK(Label::decode(empty.encode()) == empty);
}

TEST_CASE("read_treebank joins multi-line trees") {
  std::istringstream in("(S\n  (NP (D the) (N dog))\n  (VP (V barked)))\n\n(X (X a) (X a))\n");
  auto trees = read_treebank(in);
  REQUIRE(trees.size() == 2);
  CHECK(trees[0] == T("(S (NP (D the) (N dog)) (VP (V barked)))"));
  std::ostringstream out;
  write_treebank(out, trees);
  CHECK(out.str() == "(S (NP (D the) (N dog)) (VP (V barked)))\n(X (X a) (X a))\n");
}

TEST_CASE("read_treebank accepts the unlabeled PTB wrapper") {
  std::istringstream in("( (S (NP (N it)) (VP (V works))) )\n");
  auto trees = read_treebank(in);
  REQUIRE(trees.size() == 1);
  CHECK(trees[0].label.base == "S");
}

TEST_CASE("preprocess") {
  CHECK(preprocess(T("(NP-SBJ (D the) (N dog))")) == T("(NP (D the) (N dog))"));
  CHECK(preprocess(T("(S (NP (-NONE- *)) (VP (V barked)))")) == T("(S+VP (V barked))"));
  Tree clean = T("(S (NP (D the) (N dog)) (VP (V barked) (N home)))");
  CHECK(preprocess(clean) == clean);

  CHECK_THROWS_WITH(preprocess(T("(S (-NONE- *))")), "empty tree after preprocessing");

  PreprocessOptions keep;
  keep.strip_functional = false;
  keep.remove_nulls = false;
  keep.collapse_unaries = false;
  Tree raw = T("(S (NP-SBJ (-NONE- *)) (VP (V barked)))");
  CHECK(preprocess(raw, keep) == raw);

  CHECK(strip_functional_tag("NP-SBJ-1") == "NP");
  CHECK(strip_functional_tag("NP=2") == "NP");
  CHECK(strip_functional_tag("-LRB-") == "-LRB-");
  CHECK(strip_functional_tag("-NONE-") == "-NONE-");
}

TEST_CASE("constituents") {
  Tree gold = T("(S (NP (D the) (N dog)) (VP (V saw) (NP (D the) (N cat))))");
  GoldReference ref = constituents(gold, {});
  CHECK(ref.size() == 4);
  CHECK(ref.constituents == spans({{"S", 0, 5}, {"NP", 0, 2}, {"VP", 2, 5}, {"NP", 3, 5}}));

  CountingConfig with_pre;
  with_pre.exclude_preterminals = false;
  CHECK(constituents(gold, with_pre).size() == 9);

  Tree bin = binarize_tree(T("(T (A a) (A a) (A a))"));
  REQUIRE(write_bracketed(bin) == "(T (A a) (T|A-A (A a) (A a)))");
  CountingConfig unbin{CountingMode::Unbinarized, true};
  CountingConfig binned{CountingMode::Binarized, true};
  CHECK(constituents(bin, unbin).constituents == spans({{"T", 0, 3}}));
  CHECK(constituents(bin, binned).constituents == spans({{"T", 0, 3}, {"T|A-A", 1, 3}}));
}

TEST_CASE("counted_label strips parent annotation only when unbinarized") {
  Label l("NP");
  l.parents = {"S"};
  CHECK(counted_label(l, CountingMode::Unbinarized) == "NP");
  CHECK(counted_label(l, CountingMode::Binarized) == "NP^S");
}

namespace {

std::string random_label(std::mt19937_64& rng) {
  static const char* labels[] = {"S", "NP", "VP", "PP", "NP-SBJ", "ADJP=1", "SBAR"};
  return labels[rng() % 7];
}

Tree random_raw(std::mt19937_64& rng, int depth) {
  std::uniform_int_distribution<int> kids(1, 3);
  if (depth == 0 || rng() % 4 == 0) {
    if (rng() % 6 == 0) return Tree::node("-NONE-", {Tree::leaf("*T*")});
    return Tree::node("N", {Tree::leaf(rng() % 2 ? "w" : "v")});
  }
  std::vector<Tree> children;
  int k = kids(rng);
  for (int c = 0; c < k; ++c) children.push_back(random_raw(rng, depth - 1));
  return Tree::node(random_label(rng), std::move(children));
}

}  // namespace

TEST_CASE("property: preprocess is idempotent and round-trips through text") {
  std::mt19937_64 rng(7);
  int checked = 0;
  for (int k = 0; k < 400; ++k) {
    Tree raw = random_raw(rng, 4);
    Tree once;
    try {
      once = preprocess(raw);
    } catch (const TreeError&) {
      continue;
    }
    ++checked;
    CHECK(preprocess(once) == once);
    CHECK(parse_bracketed(write_bracketed(raw)) == raw);
    CHECK(parse_bracketed(write_bracketed(once)) == once);
  }
  CHECK(checked > 200);
}

TEST_CASE("property: constituent count bound") {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 300; ++k) {
    Tree t;
    try {
      t = preprocess(random_raw(rng, 4));
    } catch (const TreeError&) {
      continue;
    }
    const std::size_t n = t.num_tokens();
    for (bool exclude : {true, false}) {
      CountingConfig config{CountingMode::Unbinarized, exclude};
      std::size_t bound = exclude ? n - 1 : 2 * n - 1;
      // Collapsed unaries over a single token add one constituent each.
      std::function<void(const Tree&)> walk = [&](const Tree& node) {
        if (node.is_leaf()) return;
        if (!node.is_preterminal() && node.num_tokens() == 1) ++bound;
        for (const Tree& c : node.children) walk(c);
      };
      walk(t);
      CHECK(constituents(t, config).size() <= bound);
    }
  }
}
