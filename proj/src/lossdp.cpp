#include "ssvmparse/lossdp.hpp"

#include <algorithm>
#include <map>
#include <stdexcept>
#include <tuple>
#include <unordered_map>

namespace ssvmparse {

namespace {

bool improves(const LossChart::Stratum& cur, double score, int split, int production) {
  if (score > cur.score) return true;
  if (score < cur.score) return false;
  if (split != cur.split) return split > cur.split;
  return production < cur.production;
}

// Upper bound on the counted nodes of any derivation over `len` tokens.
int count_bound(int len, bool unary, bool preterminals) {
  int u = unary ? 1 : 0;
  int p = preterminals ? 1 : 0;
  return (len - 1) * (1 + u) + len * (p + u);
}

}  // namespace

// Dense (tp, fp) -> slot index used while one symbol's strata are built.
class SlotIndex {
 public:
  void reset(int tp_dim, int fp_dim) {
    for (int key : touched_) slots_[key] = -1;
    touched_.clear();
    fp_dim_ = fp_dim;
    std::size_t need = static_cast<std::size_t>(tp_dim) * fp_dim;
    if (slots_.size() < need) slots_.resize(need, -1);
  }
  int& at(int tp, int fp) {
    int key = tp * fp_dim_ + fp;
    if (slots_[key] < 0) touched_.push_back(key);
    return slots_[key];
  }

 private:
  std::vector<int> slots_;
  std::vector<int> touched_;
  int fp_dim_ = 1;
};

LossMode LossMode::make(LossKind kind, bool exclude_preterminals) {
  LossMode mode;
  mode.kind = kind;
  mode.counting.mode =
      kind == LossKind::F1Unbinarized ? CountingMode::Unbinarized : CountingMode::Binarized;
  mode.counting.exclude_preterminals = exclude_preterminals;
  return mode;
}

LossMode LossMode::parse(const std::string& name) {
  if (name == "f1") return make(LossKind::F1Unbinarized);
  if (name == "f1-bin") return make(LossKind::F1Binarized);
  if (name == "fp-bin") return make(LossKind::FPBinarized);
  if (name == "zeroone-bin") return make(LossKind::ZeroOneBinarized);
  throw std::invalid_argument("unknown loss '" + name + "'");
}

std::string LossMode::name() const {
  switch (kind) {
    case LossKind::F1Unbinarized:
      return "f1";
    case LossKind::F1Binarized:
      return "f1-bin";
    case LossKind::FPBinarized:
      return "fp-bin";
    case LossKind::ZeroOneBinarized:
      return "zeroone-bin";
  }
  return "?";
}

double LossMode::delta(int tp, int fp, int gold_size) const {
  switch (kind) {
    case LossKind::F1Unbinarized:
    case LossKind::F1Binarized:
      return 1.0 - f1(tp, fp, gold_size);
    case LossKind::FPBinarized:
      return fp;
    case LossKind::ZeroOneBinarized:
      return (tp == gold_size && fp == 0) ? 0.0 : 1.0;
  }
  return 0.0;
}

double f1(int tp, int fp, int gold_size) {
  if (tp < 0 || fp < 0 || gold_size < 0) throw std::invalid_argument("f1: negative count");
  if (tp > gold_size) throw std::invalid_argument("f1: tp exceeds gold size");
  if (gold_size + tp + fp == 0) return 1.0;
  return 2.0 * tp / (gold_size + tp + fp);
}

Counts count_against(const GoldReference& gold, const Tree& tree, const CountingConfig& config) {
  GoldReference pred = constituents(tree, config);
  Counts c;
  for (const Constituent& x : pred.constituents) {
    if (gold.contains(x))
      ++c.tp;
    else
      ++c.fp;
  }
  return c;
}

double delta(const LossMode& mode, const GoldReference& gold, const Tree& tree) {
  Counts c = count_against(gold, tree, mode.counting);
  return mode.delta(c.tp, c.fp, static_cast<int>(gold.size()));
}

LossChart::LossChart(const Model& model, const std::vector<std::string>& tokens,
                     const GoldReference& gold, const CountingConfig& counting)
    : model_(model),
      grammar_(*model.grammar),
      tokens_(tokens),
      counting_(counting),
      n_(static_cast<int>(tokens.size())),
      gold_size_(static_cast<int>(gold.size())) {
  if (n_ == 0) throw std::invalid_argument("loss-augmented inference needs a non-empty sentence");
  if (n_ > 255) throw std::invalid_argument("sentence too long for count stratification");

  std::unordered_map<std::string, int> gold_label_ids;
  for (const Constituent& c : gold.constituents) {
    if (c.start < 0 || c.end > n_ || c.end <= c.start)
      throw std::invalid_argument("gold constituent " + c.label + " lies outside the sentence");
    auto [it, fresh] = gold_label_ids.emplace(c.label, static_cast<int>(gold_spans_.size()));
    if (fresh) gold_spans_.emplace_back(static_cast<std::size_t>(n_) * (n_ + 1), 0);
    gold_spans_[it->second][static_cast<std::size_t>(c.start) * (n_ + 1) + c.end] = 1;
  }

  std::unordered_map<std::string, int> counted_ids;
  counted_id_.assign(grammar_.num_nonterminals(), -1);
  for (int sym = 0; sym < grammar_.num_nonterminals(); ++sym) {
    const Label& label = grammar_.nonterminal(sym);
    if (counting_.mode == CountingMode::Unbinarized && label.artificial) continue;
    std::string name = counted_label(label, counting_.mode);
    auto [it, fresh] = counted_ids.emplace(name, static_cast<int>(counted_gold_label_.size()));
    if (fresh) {
      auto g = gold_label_ids.find(name);
      counted_gold_label_.push_back(g == gold_label_ids.end() ? -1 : g->second);
    }
    counted_id_[sym] = it->second;
  }

  cells_.resize(static_cast<std::size_t>(n_) * (n_ + 1));
  for (int i = 0; i < n_; ++i) fill_lexical(i);
  for (int len = 2; len <= n_; ++len)
    for (int i = 0; i + len <= n_; ++i) fill_binary(i, i + len);
}

bool LossChart::in_gold(int counted, int i, int j) const {
  int g = counted_gold_label_[counted];
  return g >= 0 && gold_spans_[g][static_cast<std::size_t>(i) * (n_ + 1) + j];
}

Counts LossChart::increment(int symbol, int i, int j) const {
  int counted = counted_id(symbol);
  if (counted < 0) return {0, 0};
  return in_gold(counted, i, j) ? Counts{1, 0} : Counts{0, 1};
}

const std::vector<LossChart::Stratum>& LossChart::strata(int i, int j, int symbol) const {
  return cell(i, j).merged[symbol];
}

const LossChart::Stratum* LossChart::find(const std::vector<Stratum>& strata, int tp, int fp) {
  for (const Stratum& s : strata)
    if (s.tp == tp && s.fp == fp) return &s;
  return nullptr;
}

void LossChart::fill_lexical(int i) {
  Cell& c = cell(i, i + 1);
  c.base.assign(grammar_.num_nonterminals(), {});
  for (int pid : grammar_.lexical_rules(tokens_[i])) {
    const Production& p = grammar_.production(pid);
    Counts inc = counting_.exclude_preterminals ? Counts{} : increment(p.lhs, i, i + 1);
    Stratum st;
    st.tp = static_cast<std::uint16_t>(inc.tp);
    st.fp = static_cast<std::uint16_t>(inc.fp);
    st.score = model_.weight(pid);
    st.production = pid;
    auto& strata = c.base[p.lhs];
    if (strata.empty())
      strata.push_back(st);
    else if (improves(strata.front(), st.score, -1, pid))
      strata.front() = st;
  }
  finish(i, i + 1);
}

void LossChart::fill_binary(int i, int j) {
  Cell& c = cell(i, j);
  const int symbols = grammar_.num_nonterminals();
  c.base.assign(symbols, {});

  const int bound = count_bound(j - i, grammar_.has_unary(), !counting_.exclude_preterminals);
  const int tp_dim = std::min(bound, gold_size_) + 1;
  const int fp_dim = bound + 1;
  SlotIndex slots;

  for (int a = 0; a < symbols; ++a) {
    auto rules = grammar_.binary_by_lhs(a);
    if (rules.empty()) continue;
    const Counts inc = increment(a, i, j);
    std::vector<Stratum>& out = c.base[a];
    slots.reset(tp_dim, fp_dim);

    for (int s = i + 1; s < j; ++s) {
      const Cell& left_cell = cell(i, s);
      const Cell& right_cell = cell(s, j);
      for (int pid : rules) {
        const Production& p = grammar_.production(pid);
        const auto& left = left_cell.merged[p.rhs1];
        const auto& right = right_cell.merged[p.rhs2];
        if (left.empty() || right.empty()) continue;
        const double w = model_.weight(pid);
        for (const Stratum& l : left) {
          for (const Stratum& r : right) {
            const int tp = l.tp + r.tp + inc.tp;
            const int fp = l.fp + r.fp + inc.fp;
            const double total = w + l.score + r.score;
            int& slot = slots.at(tp, fp);
            if (slot >= 0 && !improves(out[slot], total, s, pid)) continue;
            Stratum st;
            st.tp = static_cast<std::uint16_t>(tp);
            st.fp = static_cast<std::uint16_t>(fp);
            st.score = total;
            st.production = pid;
            st.split = static_cast<std::int16_t>(s);
            st.left_tp = l.tp;
            st.left_fp = l.fp;
            st.right_tp = r.tp;
            st.right_fp = r.fp;
            if (slot < 0) {
              slot = static_cast<int>(out.size());
              out.push_back(st);
            } else {
              out[slot] = st;
            }
          }
        }
      }
    }
  }
  finish(i, j);
}

// Builds the unary layer over the base strata and merges the two.
void LossChart::finish(int i, int j) {
  Cell& c = cell(i, j);
  const int symbols = grammar_.num_nonterminals();
  c.top.assign(symbols, {});

  if (grammar_.has_unary()) {
    const bool lexical_layer = j - i == 1;
    const int bound = count_bound(j - i, true, !counting_.exclude_preterminals);
    SlotIndex slots;
    for (int a = 0; a < symbols; ++a) {
      auto rules = grammar_.unary_by_lhs(a);
      if (rules.empty()) continue;
      std::vector<Stratum>& out = c.top[a];
      slots.reset(std::min(bound, gold_size_) + 1, bound + 1);
      for (int pid : rules) {
        const int b = grammar_.production(pid).rhs1;
        const bool child_counted =
            counted_id(b) >= 0 && !(lexical_layer && counting_.exclude_preterminals);
        const Counts inc = unary_increment(a, b, i, j, child_counted);
        extend(c.base[b], pid, inc, slots, out);
      }
    }
  }

  c.merged = c.base;
  const int bound = count_bound(j - i, true, !counting_.exclude_preterminals);
  SlotIndex slots;
  for (int a = 0; a < symbols; ++a) {
    if (c.top[a].empty()) continue;
    std::vector<Stratum>& out = c.merged[a];
    slots.reset(std::min(bound, gold_size_) + 1, bound + 1);
    for (std::size_t k = 0; k < out.size(); ++k) slots.at(out[k].tp, out[k].fp) = static_cast<int>(k);
    for (const Stratum& st : c.top[a]) {
      int& slot = slots.at(st.tp, st.fp);
      if (slot < 0) {
        slot = static_cast<int>(out.size());
        out.push_back(st);
      } else if (st.score > out[slot].score) {  // the base layer keeps ties
        out[slot] = st;
      }
    }
  }

  for (int a = 0; a < symbols; ++a)
    if (!c.merged[a].empty()) c.active.push_back(a);
}

Counts LossChart::unary_increment(int parent, int child, int i, int j, bool child_counted) const {
  // A counted child with the same counted label is the same set element.
  if (child_counted && counted_id(child) == counted_id(parent)) return {};
  return increment(parent, i, j);
}

// Adds `pid` over each stratum of `below` into `out`, keeping the best
// derivation per (tp, fp); ties go to the lower production id.
void LossChart::extend(const std::vector<Stratum>& below, int pid, Counts inc, SlotIndex& slots,
                       std::vector<Stratum>& out) const {
  const double w = model_.weight(pid);
  for (const Stratum& under : below) {
    const int tp = under.tp + inc.tp;
    const int fp = under.fp + inc.fp;
    const double total = w + under.score;
    int& slot = slots.at(tp, fp);
    if (slot >= 0) {
      const Stratum& cur = out[slot];
      if (!(total > cur.score || (total == cur.score && pid < cur.production))) continue;
    }
    Stratum st;
    st.tp = static_cast<std::uint16_t>(tp);
    st.fp = static_cast<std::uint16_t>(fp);
    st.score = total;
    st.production = pid;
    st.left_tp = under.tp;
    st.left_fp = under.fp;
    st.from_unary = true;
    if (slot < 0) {
      slot = static_cast<int>(out.size());
      out.push_back(st);
    } else {
      out[slot] = st;
    }
  }
}

std::vector<LossChart::Stratum> LossChart::root_strata() const {
  const int start = grammar_.start();
  const Cell& c = cell(0, n_);
  std::vector<Stratum> out = c.merged[start];
  const int bound = count_bound(n_, true, !counting_.exclude_preterminals) + 1;
  SlotIndex slots;
  slots.reset(std::min(bound, gold_size_) + 1, bound + 1);
  std::vector<Stratum> stacked;
  const bool lexical_layer = n_ == 1;
  auto counted_here = [&](int sym) {
    return counted_id(sym) >= 0 && !(lexical_layer && counting_.exclude_preterminals);
  };
  for (int pid : grammar_.unary_by_lhs(start)) {
    const int b = grammar_.production(pid).rhs1;
    for (int inner : grammar_.unary_by_lhs(b)) {
      const int y = grammar_.production(inner).rhs1;
      const Counts mid = unary_increment(b, y, 0, n_, counted_here(y));
      // start counts once if b or y already carries its label.
      Counts top = unary_increment(start, b, 0, n_, counted_id(b) >= 0);
      if (counted_here(y) && counted_id(y) == counted_id(start)) top = {};
      const double w = model_.weight(pid) + model_.weight(inner);
      for (const Stratum& under : c.base[y]) {
        const int tp = under.tp + mid.tp + top.tp;
        const int fp = under.fp + mid.fp + top.fp;
        const double total = w + under.score;
        int& slot = slots.at(tp, fp);
        if (slot >= 0) {
          const Stratum& cur = stacked[slot];
          bool better = total > cur.score ||
                        (total == cur.score &&
                         (pid < cur.production || (pid == cur.production && inner < cur.inner)));
          if (!better) continue;
        }
        Stratum st;
        st.tp = static_cast<std::uint16_t>(tp);
        st.fp = static_cast<std::uint16_t>(fp);
        st.score = total;
        st.production = pid;
        st.inner = inner;
        st.left_tp = under.tp;
        st.left_fp = under.fp;
        if (slot < 0) {
          slot = static_cast<int>(stacked.size());
          stacked.push_back(st);
        } else {
          stacked[slot] = st;
        }
      }
    }
  }
  for (Stratum& st : stacked) {
    st.from_unary = false;
    st.split = kStacked;
    bool dominated = false;
    for (const Stratum& m : out)
      dominated = dominated || (m.tp == st.tp && m.fp == st.fp && m.score >= st.score);
    if (!dominated) out.push_back(st);
  }
  return out;
}

Tree LossChart::backtrack_root(const Stratum& st) const {
  const int start = grammar_.start();
  if (st.split != kStacked) return backtrack(0, n_, start, st.tp, st.fp);
  const Production& inner = grammar_.production(st.inner);
  return Tree::node(grammar_.nonterminal(start),
                    {Tree::node(grammar_.nonterminal(inner.lhs),
                                {build_base(0, n_, inner.rhs1, st.left_tp, st.left_fp)})});
}

Tree LossChart::backtrack(int i, int j, int symbol, int tp, int fp) const {
  const Stratum* st = find(cell(i, j).merged[symbol], tp, fp);
  if (!st) throw std::logic_error("backtrack: no such stratum");
  if (!st->from_unary) return build_base(i, j, symbol, tp, fp);
  const Production& p = grammar_.production(st->production);
  return Tree::node(grammar_.nonterminal(symbol),
                    {build_base(i, j, p.rhs1, st->left_tp, st->left_fp)});
}

Tree LossChart::build_base(int i, int j, int symbol, int tp, int fp) const {
  const Stratum* st = find(cell(i, j).base[symbol], tp, fp);
  if (!st) throw std::logic_error("backtrack: no such base stratum");
  const Production& p = grammar_.production(st->production);
  if (p.kind == ProductionKind::Lexical)
    return Tree::node(grammar_.nonterminal(symbol), {Tree::leaf(tokens_[i])});
  return Tree::node(grammar_.nonterminal(symbol),
                    {backtrack(i, st->split, p.rhs1, st->left_tp, st->left_fp),
                     backtrack(st->split, j, p.rhs2, st->right_tp, st->right_fp)});
}

std::optional<LAIResult> loss_augmented_infer(const Model& model,
                                              const std::vector<std::string>& tokens,
                                              const GoldReference& gold, const LossMode& mode,
                                              double constant) {
  const Grammar& grammar = *model.grammar;
  if (tokens.empty() || grammar.start() < 0) return std::nullopt;
  LossChart chart(model, tokens, gold, mode.counting);
  const int gold_size = static_cast<int>(gold.size());

  const LossChart::Stratum* best = nullptr;
  double best_objective = 0.0;
  const std::vector<LossChart::Stratum> roots = chart.root_strata();
  for (const LossChart::Stratum& st : roots) {
    double objective = mode.delta(st.tp, st.fp, gold_size) * (constant + st.score);
    bool take = best == nullptr || objective > best_objective ||
                (objective == best_objective &&
                 (st.fp < best->fp || (st.fp == best->fp && st.tp > best->tp)));
    if (take) {
      best = &st;
      best_objective = objective;
    }
  }
  if (!best) return std::nullopt;

  LAIResult result;
  result.tree = chart.backtrack_root(*best);
  result.objective = best_objective;
  result.tp = best->tp;
  result.fp = best->fp;
  result.loss = mode.delta(best->tp, best->fp, gold_size);
  return result;
}

std::optional<LAIResult> loss_augmented_infer(const Model& model,
                                              const std::vector<std::string>& tokens,
                                              const GoldReference& gold, const LossMode& mode,
                                              const Tree& gold_tree) {
  return loss_augmented_infer(model, tokens, gold, mode, 1.0 - score(model, gold_tree));
}

namespace {

class Enumerator {
 public:
  Enumerator(const Grammar& grammar, const std::vector<std::string>& tokens)
      : grammar_(grammar), tokens_(tokens) {}

  // Start-symbol unaries may also sit on a unary node spanning the sentence.
  std::vector<Tree> root(int n) {
    const int start = grammar_.start();
    std::vector<Tree> out = merged(0, n, start);
    for (int pid : grammar_.unary_by_lhs(start)) {
      const int b = grammar_.production(pid).rhs1;
      const std::vector<Tree>& below = merged(0, n, b);
      const std::size_t plain = base(0, n, b).size();
      for (std::size_t k = plain; k < below.size(); ++k)
        out.push_back(Tree::node(grammar_.nonterminal(start), {below[k]}));
    }
    return out;
  }

  const std::vector<Tree>& merged(int i, int j, int sym) {
    auto key = std::make_tuple(i, j, sym, 1);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    std::vector<Tree> out = base(i, j, sym);
    for (int pid : grammar_.unary_by_lhs(sym)) {
      const Production& p = grammar_.production(pid);
      for (const Tree& under : base(i, j, p.rhs1))
        out.push_back(Tree::node(grammar_.nonterminal(sym), {under}));
    }
    return memo_.emplace(key, std::move(out)).first->second;
  }

 private:
  const std::vector<Tree>& base(int i, int j, int sym) {
    auto key = std::make_tuple(i, j, sym, 0);
    if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    std::vector<Tree> out;
    if (j - i == 1) {
      for (int pid : grammar_.lexical_rules(tokens_[i])) {
        if (grammar_.production(pid).lhs == sym)
          out.push_back(Tree::node(grammar_.nonterminal(sym), {Tree::leaf(tokens_[i])}));
      }
    } else {
      for (int s = i + 1; s < j; ++s) {
        for (int pid : grammar_.binary_by_lhs(sym)) {
          const Production& p = grammar_.production(pid);
          const std::vector<Tree>& left = merged(i, s, p.rhs1);
          const std::vector<Tree>& right = merged(s, j, p.rhs2);
          for (const Tree& l : left)
            for (const Tree& r : right) out.push_back(Tree::node(grammar_.nonterminal(sym), {l, r}));
        }
      }
    }
    return memo_.emplace(key, std::move(out)).first->second;
  }

  const Grammar& grammar_;
  const std::vector<std::string>& tokens_;
  std::map<std::tuple<int, int, int, int>, std::vector<Tree>> memo_;
};

}  // namespace

std::vector<Tree> enumerate_parses(const Grammar& grammar, const std::vector<std::string>& tokens,
                                   std::size_t max_tokens) {
  if (tokens.size() > max_tokens)
    throw std::invalid_argument("enumerate_parses: sentence of " + std::to_string(tokens.size()) +
                                " tokens exceeds the bound of " + std::to_string(max_tokens));
  if (tokens.empty() || grammar.start() < 0) return {};
  Enumerator e(grammar, tokens);
  return e.root(static_cast<int>(tokens.size()));
}

}  // namespace ssvmparse
