#include "doctest.h"

#include <random>
#include <sstream>

#include "ssvmparse/metrics.hpp"
#include "ssvmparse/oracle.hpp"
#include "ssvmparse/ssvm.hpp"

using namespace ssvmparse;

namespace {

Tree random_tree(std::mt19937_64& rng, int depth) {
  static const char* labels[] = {"S", "NP", "VP", "PP"};
  static const char* tags[] = {"D", "N", "V", "P"};
  if (depth == 0 || rng() % 3 == 0)
    return Tree::node(tags[rng() % 4], {Tree::leaf("w" + std::to_string(rng() % 4))});
  std::uniform_int_distribution<int> kids(2, 4);
  std::vector<Tree> children;
  for (int c = kids(rng); c > 0; --c) children.push_back(random_tree(rng, depth - 1));
  return Tree::node(labels[rng() % 4], std::move(children));
}

Tree random_phrase(std::mt19937_64& rng, int depth) {
  Tree t = random_tree(rng, depth);
  while (t.is_preterminal()) t = random_tree(rng, depth);
  return t;
}

}  // namespace

TEST_CASE("property: cky finds the best enumerated parse") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 150; ++trial) {
    OracleInstance inst = random_instance(rng);
    auto parses = enumerate_parses(*inst.model.grammar, inst.tokens);
    REQUIRE_FALSE(parses.empty());
    double best = -1e300;
    for (const Tree& y : parses) best = std::max(best, score(inst.model, y));
    auto r = cky_parse_scored(inst.model, inst.tokens);
    REQUIRE(r);
    CHECK(r->score == doctest::Approx(best).epsilon(1e-12));
    CHECK(score(inst.model, r->tree) == doctest::Approx(r->score).epsilon(1e-12));
    CHECK(r->tree.tokens() == inst.tokens);
  }
}

TEST_CASE("property: loss-augmented objective dominates the gold and the cky parse") {
  std::mt19937_64 rng(37);
  for (int trial = 0; trial < 100; ++trial) {
    OracleInstance inst = random_instance(rng);
    Tree best = *cky_parse(inst.model, inst.tokens);
    for (LossKind kind : kAllLossKinds) {
      LossMode mode = LossMode::make(kind, trial % 2 == 0);
      GoldReference ref = constituents(inst.gold, mode.counting);
      const double constant = 1.0 - score(inst.model, inst.gold);
      auto r = loss_augmented_infer(inst.model, inst.tokens, ref, mode, constant);
      REQUIRE(r);
      CHECK(r->objective >= -1e-12);
      CHECK(r->objective + 1e-9 >= delta(mode, ref, best) * (constant + score(inst.model, best)));
      CHECK(r->loss >= 0.0);
    }
  }
}

TEST_CASE("property: induced grammars cover their own treebank") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<Tree> bank;
    for (int k = 0; k < 4; ++k) bank.push_back(random_phrase(rng, 3));
    BinConfig bin{static_cast<int>(rng() % 3), 1 + static_cast<int>(rng() % 2)};
    std::vector<Tree> binarized;
    for (const Tree& t : bank) binarized.push_back(binarize_tree(t, bin));
    auto g = std::make_shared<const Grammar>(induce(binarized, 1));
    Model m = Model::zeros(g);
    std::uniform_real_distribution<double> w(-1.0, 1.0);
    for (int i = 0; i < m.weights.size(); ++i) m.weights[i] = w(rng);
    for (const Tree& b : binarized) {
      Tree wrapped = wrap_root(b, *g);
      CHECK_NOTHROW(feature_vector(wrapped, *g));
      auto r = cky_parse_scored(m, b.tokens());
      REQUIRE(r);
      CHECK(r->score + 1e-9 >= score(m, wrapped));
      Tree plain = debinarize_tree(unwrap_root(r->tree, *g));
      CHECK(plain.tokens() == b.tokens());
    }
  }
}

TEST_CASE("property: unbinarized constituents survive debinarization") {
  std::mt19937_64 rng(43);
  for (int trial = 0; trial < 200; ++trial) {
    Tree t = random_phrase(rng, 4);
    for (int h : {0, 1, BinConfig::kUnbounded}) {
      Tree b = binarize_tree(t, {h, 2});
      for (bool pre : {false, true}) {
        CountingConfig unbin{CountingMode::Unbinarized, pre};
        CountingConfig binc{CountingMode::Binarized, pre};
        CHECK(constituents(b, unbin).constituents == constituents(debinarize_tree(b), unbin).constituents);
        CHECK(constituents(b, binc).size() >= constituents(b, unbin).size());
        CHECK(count_against(constituents(b, binc), b, binc) ==
              Counts{static_cast<int>(constituents(b, binc).size()), 0});
      }
    }
  }
}

TEST_CASE("property: evaluating a treebank against itself is perfect") {
  std::mt19937_64 rng(47);
  std::vector<Tree> bank;
  for (int k = 0; k < 50; ++k) bank.push_back(random_phrase(rng, 4));
  EvalResult r = evaluate(bank, bank);
  CHECK(r.f1 == 1.0);
  CHECK(r.exact_match == 1.0);
  std::vector<double> d;
  for (const auto& row : loss_difference_export(bank, bank, bank)) d.push_back(row.difference);
  CHECK(wilcoxon_signed_rank(d).p_value == 1.0);
}

TEST_CASE("property: saved models parse identically") {
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 40; ++trial) {
    OracleInstance inst = random_instance(rng);
    std::stringstream io;
    write_model(io, inst.model);
    Model back = read_model(io);
    CHECK(back.weights == inst.model.weights);
    CHECK(cky_parse(back, inst.tokens) == cky_parse(inst.model, inst.tokens));
  }
}

TEST_CASE("property: training objective never decreases and ends within epsilon") {
  std::mt19937_64 rng(59);
  for (int trial = 0; trial < 8; ++trial) {
    std::vector<Tree> bank;
    for (int k = 0; k < 5; ++k) bank.push_back(random_phrase(rng, 3));
    std::vector<Tree> binarized;
    for (const Tree& t : bank) binarized.push_back(binarize_tree(t));
    auto g = std::make_shared<const Grammar>(induce(binarized, 1));
    TrainConfig config;
    config.loss_mode = LossMode::make(kAllLossKinds[trial % 4]);
    config.C = 10.0;
    TrainResult r = train(make_examples(binarized, *g, config.loss_mode.counting), g, config);
    double last = -1.0;
    for (const auto& pass : r.report.per_pass) {
      CHECK(pass.objective >= last - 1e-9);
      last = pass.objective;
    }
    if (r.report.converged) CHECK(r.report.violations_remaining == 0);
  }
}
