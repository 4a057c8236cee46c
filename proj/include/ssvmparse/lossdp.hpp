#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ssvmparse/chart.hpp"

namespace ssvmparse {

enum class LossKind { F1Unbinarized, F1Binarized, FPBinarized, ZeroOneBinarized };

/// Training loss together with the counting regime it is defined over.
struct LossMode {
  LossKind kind = LossKind::F1Unbinarized;
  CountingConfig counting;

  static LossMode make(LossKind kind, bool exclude_preterminals = true);
  static LossMode parse(const std::string& name);  // f1 | f1-bin | fp-bin | zeroone-bin
  std::string name() const;

  /// Loss as a function of true/false positive counts.
  double delta(int tp, int fp, int gold_size) const;
};

inline const LossKind kAllLossKinds[] = {LossKind::F1Unbinarized, LossKind::F1Binarized,
                                         LossKind::FPBinarized, LossKind::ZeroOneBinarized};

/// 2tp / (|gold| + tp + fp); 1 for the empty-vs-empty case.
double f1(int tp, int fp, int gold_size);

struct Counts {
  int tp = 0;
  int fp = 0;
  bool operator==(const Counts&) const = default;
};

Counts count_against(const GoldReference& gold, const Tree& tree, const CountingConfig& config);

double delta(const LossMode& mode, const GoldReference& gold, const Tree& tree);

struct LAIResult {
  Tree tree;
  double objective = 0.0;
  int tp = 0;
  int fp = 0;
  double loss = 0.0;
};

class SlotIndex;

/// The (start, end, symbol) chart of loss-augmented inference, with every
/// cell subdivided by the exact (tp, fp) counts of the subtrees it holds.
class LossChart {
 public:
  struct Stratum {
    std::uint16_t tp = 0;
    std::uint16_t fp = 0;
    double score = 0.0;
    int production = -1;
    int inner = -1;  // second unary of a stacked root chain
    std::int16_t split = -1;
    std::uint16_t left_tp = 0, left_fp = 0, right_tp = 0, right_fp = 0;
    bool from_unary = false;
  };

  LossChart(const Model& model, const std::vector<std::string>& tokens, const GoldReference& gold,
            const CountingConfig& counting);

  int length() const { return n_; }

  /// Reachable strata of `symbol` over [i, j), merged across the binary and
  /// unary layers.
  const std::vector<Stratum>& strata(int i, int j, int symbol) const;

  /// Rebuilds the subtree behind one stratum.
  Tree backtrack(int i, int j, int symbol, int tp, int fp) const;

  /// Strata of the start symbol over the whole sentence, including a start
  /// unary stacked on a unary node there.
  std::vector<Stratum> root_strata() const;
  Tree backtrack_root(const Stratum& stratum) const;

 private:
  struct Cell {
    std::vector<std::vector<Stratum>> base;    // lexical or binary derivations
    std::vector<std::vector<Stratum>> top;     // one unary over the base layer
    std::vector<std::vector<Stratum>> merged;  // base and top
    std::vector<int> active;
  };

  const Cell& cell(int i, int j) const { return cells_[static_cast<std::size_t>(i) * (n_ + 1) + j]; }
  Cell& cell(int i, int j) { return cells_[static_cast<std::size_t>(i) * (n_ + 1) + j]; }

  void fill_lexical(int i);
  void fill_binary(int i, int j);
  void finish(int i, int j);
  Counts increment(int symbol, int i, int j) const;
  Counts unary_increment(int parent, int child, int i, int j, bool child_counted) const;
  void extend(const std::vector<Stratum>& below, int pid, Counts inc, SlotIndex& slots,
              std::vector<Stratum>& out) const;
  static constexpr std::int16_t kStacked = -2;
  int counted_id(int symbol) const { return counted_id_[symbol]; }
  bool in_gold(int counted, int i, int j) const;
  Tree build_base(int i, int j, int symbol, int tp, int fp) const;
  static const Stratum* find(const std::vector<Stratum>& strata, int tp, int fp);

  const Model& model_;
  const Grammar& grammar_;
  const std::vector<std::string>& tokens_;
  CountingConfig counting_;
  int n_;
  int gold_size_;
  std::vector<int> counted_id_;          // per symbol; -1 when never counted
  std::vector<int> counted_gold_label_;  // per counted id; index into gold labels or -1
  std::vector<std::vector<char>> gold_spans_;  // per gold label, (i, j) membership
  std::vector<Cell> cells_;
};

/// Exact maximizer of Delta(gold, y) * (constant + w.Psi(x, y)) over all
/// derivations. `constant` is 1 - w.Psi(x, gold). Returns nullopt when the
/// sentence has no parse.
std::optional<LAIResult> loss_augmented_infer(const Model& model,
                                              const std::vector<std::string>& tokens,
                                              const GoldReference& gold, const LossMode& mode,
                                              double constant);

/// Same, computing the constant from the binarized gold tree.
std::optional<LAIResult> loss_augmented_infer(const Model& model,
                                              const std::vector<std::string>& tokens,
                                              const GoldReference& gold, const LossMode& mode,
                                              const Tree& gold_tree);

/// Every derivation rooted at the start symbol. Brute force; refuses
/// sentences longer than `max_tokens`.
std::vector<Tree> enumerate_parses(const Grammar& grammar, const std::vector<std::string>& tokens,
                                   std::size_t max_tokens = 8);

}  // namespace ssvmparse
