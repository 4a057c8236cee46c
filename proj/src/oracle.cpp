#include "ssvmparse/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ssvmparse {

namespace {

Label annotated(std::string base, std::vector<std::string> parents) {
  Label l(std::move(base));
  l.parents = std::move(parents);
  return l;
}

Label artificial(std::string base, std::vector<std::string> siblings) {
  Label l(std::move(base));
  l.artificial = true;
  l.siblings = std::move(siblings);
  return l;
}

template <typename T>
const T& pick(std::mt19937_64& rng, const std::vector<T>& pool) {
  std::uniform_int_distribution<std::size_t> d(0, pool.size() - 1);
  return pool[d(rng)];
}

std::shared_ptr<Grammar> random_grammar(std::mt19937_64& rng, int max_productions) {
  const std::vector<Label> phrase_lhs = {"S", "A", "B", annotated("A", {"S"}),
                                         artificial("S", {"A", "B"}), artificial("A", {"P"})};
  const std::vector<Label> children = {"A", "B", annotated("A", {"S"}), artificial("S", {"A", "B"}),
                                       artificial("A", {"P"}), "P", "Q", annotated("P", {"A"})};
  const std::vector<Label> preterminals = {"P", "Q", annotated("P", {"A"})};
  const std::vector<Label> unary_lhs = {"S", "A", "B", annotated("A", {"S"})};
  const std::vector<std::string> words = {"a", "b"};
  std::uniform_int_distribution<int> coin(0, 99);

  auto g = std::make_shared<Grammar>();
  g->set_start(g->intern_nonterminal(Label("S")));

  std::uniform_int_distribution<int> n_lex(2, 3);
  int lexical = n_lex(rng);
  int unary = coin(rng) < 60 ? (coin(rng) < 50 ? 2 : 1) : 0;
  std::uniform_int_distribution<int> n_bin(3, std::max(3, max_productions - lexical - unary));
  int binary = n_bin(rng);

  // Guarantee a rule for the start symbol.
  g->add_production({ProductionKind::Binary, g->start(), g->intern_nonterminal(pick(rng, children)),
                     g->intern_nonterminal(pick(rng, children))});
  for (int k = 1; k < binary; ++k)
    g->add_production({ProductionKind::Binary, g->intern_nonterminal(pick(rng, phrase_lhs)),
                       g->intern_nonterminal(pick(rng, children)),
                       g->intern_nonterminal(pick(rng, children))});
  for (int k = 0; k < unary; ++k) {
    // Over a preterminal, over a phrase, or a root-level wrapper.
    const int kind = coin(rng);
    if (kind < 45)
      g->add_production({ProductionKind::Unary, g->intern_nonterminal(pick(rng, unary_lhs)),
                         g->intern_nonterminal(pick(rng, preterminals))});
    else if (kind < 75)
      g->add_production({ProductionKind::Unary, g->intern_nonterminal(pick(rng, unary_lhs)),
                         g->intern_nonterminal(pick(rng, unary_lhs))});
    else
      g->add_production({ProductionKind::Unary, g->start(), g->intern_nonterminal(Label("A"))});
  }
  for (int k = 0; k < lexical; ++k)
    g->add_production({ProductionKind::Lexical, g->intern_nonterminal(pick(rng, preterminals)),
                       g->intern_terminal(pick(rng, words))});
  return g;
}

}  // namespace

OracleInstance random_instance(std::mt19937_64& rng, const InstanceOptions& options) {
  const std::vector<std::string> words = {"a", "b"};
  std::uniform_int_distribution<int> len_dist(1, std::max(1, options.max_len));
  std::uniform_real_distribution<double> weight_dist(-options.weight_range, options.weight_range);

  for (;;) {
    auto grammar = random_grammar(rng, options.max_productions);

    for (int attempt = 0; attempt < 8; ++attempt) {
      std::vector<std::string> tokens(len_dist(rng));
      for (std::string& t : tokens) t = pick(rng, words);
      std::vector<Tree> parses = enumerate_parses(*grammar, tokens, 8);
      if (parses.empty() || parses.size() > options.max_parses) continue;

      OracleInstance inst;
      inst.model = Model::zeros(grammar);
      for (Eigen::Index k = 0; k < inst.model.weights.size(); ++k)
        inst.model.weights[k] = weight_dist(rng);
      inst.tokens = std::move(tokens);
      inst.gold = pick(rng, parses);
      inst.num_parses = parses.size();
      return inst;
    }
  }
}

double brute_force_objective(const Model& model, const GoldReference& gold, const LossMode& mode,
                             double constant, const std::vector<Tree>& parses) {
  double best = -std::numeric_limits<double>::infinity();
  for (const Tree& y : parses) best = std::max(best, delta(mode, gold, y) * (constant + score(model, y)));
  return best;
}

std::vector<OracleTrial> run_oracle_check(int trials, int max_len, std::uint64_t seed,
                                          double tolerance) {
  std::mt19937_64 rng(seed);
  InstanceOptions options;
  options.max_len = max_len;
  std::vector<OracleTrial> out;

  for (int trial = 0; trial < trials; ++trial) {
    OracleInstance inst = random_instance(rng, options);
    const bool exclude_preterminals = trial % 2 == 0;
    std::vector<Tree> parses = enumerate_parses(*inst.model.grammar, inst.tokens, 8);

    double best_score = -std::numeric_limits<double>::infinity();
    for (const Tree& y : parses) best_score = std::max(best_score, score(inst.model, y));
    auto viterbi = cky_parse_scored(inst.model, inst.tokens);
    double cky = viterbi ? score(inst.model, viterbi->tree) : -std::numeric_limits<double>::infinity();
    bool cky_match = viterbi && std::abs(cky - best_score) <= tolerance &&
                     std::abs(viterbi->score - cky) <= tolerance;

    const double constant = 1.0 - score(inst.model, inst.gold);
    for (LossKind kind : kAllLossKinds) {
      LossMode mode = LossMode::make(kind, exclude_preterminals);
      GoldReference gold = constituents(inst.gold, mode.counting);

      OracleTrial t;
      t.trial = trial;
      t.mode = mode;
      t.cky_score = cky;
      t.brute_best_score = best_score;
      t.cky_match = cky_match;
      t.brute_objective = brute_force_objective(inst.model, gold, mode, constant, parses);

      auto dp = loss_augmented_infer(inst.model, inst.tokens, gold, mode, constant);
      if (dp) {
        t.dp_objective = dp->objective;
        // The returned tree must attain the objective with the reported counts.
        Counts c = count_against(gold, dp->tree, mode.counting);
        double attained = delta(mode, gold, dp->tree) * (constant + score(inst.model, dp->tree));
        t.match = std::abs(dp->objective - t.brute_objective) <= tolerance &&
                  std::abs(attained - t.brute_objective) <= tolerance && c.tp == dp->tp &&
                  c.fp == dp->fp;
      } else {
        t.dp_objective = std::numeric_limits<double>::quiet_NaN();
      }
      out.push_back(std::move(t));
    }
  }
  return out;
}

}  // namespace ssvmparse
