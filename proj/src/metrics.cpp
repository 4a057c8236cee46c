#include "ssvmparse/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "ssvmparse/lossdp.hpp"

namespace ssvmparse {

namespace {

constexpr int kExactCutoff = 20;

struct SignedRanks {
  std::vector<double> ranks;  // average ranks of |d|, zeros removed
  std::vector<char> positive;
  std::vector<int> tie_sizes;
};

SignedRanks rank(const std::vector<double>& diffs) {
  std::vector<double> nonzero;
  for (double d : diffs)
    if (d != 0.0) nonzero.push_back(d);
  std::vector<std::size_t> order(nonzero.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(nonzero[a]) < std::abs(nonzero[b]);
  });

  SignedRanks out;
  out.ranks.resize(nonzero.size());
  out.positive.resize(nonzero.size());
  for (std::size_t k = 0; k < nonzero.size(); ++k) out.positive[k] = nonzero[k] > 0.0;
  for (std::size_t lo = 0; lo < order.size();) {
    std::size_t hi = lo + 1;
    const double v = std::abs(nonzero[order[lo]]);
    while (hi < order.size() && std::abs(nonzero[order[hi]]) - v <= 1e-12 * std::max(1.0, v)) ++hi;
    const double avg = 0.5 * static_cast<double>(lo + 1 + hi);  // mean of ranks lo+1 .. hi
    for (std::size_t k = lo; k < hi; ++k) out.ranks[order[k]] = avg;
    out.tie_sizes.push_back(static_cast<int>(hi - lo));
    lo = hi;
  }
  return out;
}

double positive_rank_sum(const SignedRanks& r) {
  double s = 0.0;
  for (std::size_t k = 0; k < r.ranks.size(); ++k)
    if (r.positive[k]) s += r.ranks[k];
  return s;
}

double exact_p(const SignedRanks& r) {
  const std::size_t n = r.ranks.size();
  if (n == 0) return 1.0;
  // Average ranks are multiples of 1/2; count sign assignments by doubled sum.
  std::vector<int> doubled(n);
  int total = 0;
  for (std::size_t k = 0; k < n; ++k) {
    doubled[k] = static_cast<int>(std::lround(2.0 * r.ranks[k]));
    total += doubled[k];
  }
  std::vector<double> ways(total + 1, 0.0);
  ways[0] = 1.0;
  for (int d : doubled)
    for (int s = total; s >= d; --s) ways[s] += ways[s - d];

  const int plus = static_cast<int>(std::lround(2.0 * positive_rank_sum(r)));
  const int observed = std::min(plus, total - plus);
  double hits = 0.0;
  for (int s = 0; s <= total; ++s)
    if (s <= observed || s >= total - observed) hits += ways[s];
  return std::min(1.0, hits / std::ldexp(1.0, static_cast<int>(n)));
}

double normal_p(const SignedRanks& r) {
  const double n = static_cast<double>(r.ranks.size());
  if (n == 0) return 1.0;
  const double mean = n * (n + 1.0) / 4.0;
  double variance = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0;
  for (int t : r.tie_sizes) variance -= (static_cast<double>(t) * t * t - t) / 48.0;
  if (variance <= 0.0) return 1.0;
  const double z = std::max(0.0, std::abs(positive_rank_sum(r) - mean) - 0.5) / std::sqrt(variance);
  return std::min(1.0, std::erfc(z / std::sqrt(2.0)));
}

void check_aligned(const std::vector<Tree>& a, const std::vector<Tree>& b) {
  if (a.size() != b.size())
    throw EvalError("tree lists differ in length: " + std::to_string(a.size()) + " vs " +
                    std::to_string(b.size()));
  for (std::size_t k = 0; k < a.size(); ++k)
    if (a[k].tokens() != b[k].tokens())
      throw EvalError("token yield mismatch at sentence " + std::to_string(k));
}

SentenceScore score_sentence(const Tree& pred, const Tree& gold, const CountingConfig& config) {
  GoldReference ref = constituents(gold, config);
  Counts c = count_against(ref, pred, config);
  SentenceScore s;
  s.tp = c.tp;
  s.fp = c.fp;
  s.gold_size = static_cast<int>(ref.size());
  s.delta_f1 = 1.0 - f1(c.tp, c.fp, s.gold_size);
  return s;
}

}  // namespace

nlohmann::json EvalResult::to_json() const {
  return {{"precision", precision},
          {"recall", recall},
          {"f1", f1},
          {"exact_match", exact_match},
          {"n_sentences", per_sentence.size()}};
}

EvalResult aggregate(std::vector<SentenceScore> sentences) {
  EvalResult r;
  long tp = 0, predicted = 0, gold = 0, exact = 0;
  for (const SentenceScore& s : sentences) {
    tp += s.tp;
    predicted += s.tp + s.fp;
    gold += s.gold_size;
    exact += (s.tp == s.gold_size && s.fp == 0) ? 1 : 0;
  }
  r.precision = predicted > 0 ? static_cast<double>(tp) / predicted : (gold == 0 ? 1.0 : 0.0);
  r.recall = gold > 0 ? static_cast<double>(tp) / gold : 1.0;
  r.f1 = r.precision + r.recall > 0.0 ? 2.0 * r.precision * r.recall / (r.precision + r.recall) : 0.0;
  r.exact_match = sentences.empty() ? 0.0 : static_cast<double>(exact) / sentences.size();
  r.per_sentence = std::move(sentences);
  return r;
}

EvalResult evaluate(const std::vector<Tree>& pred, const std::vector<Tree>& gold,
                    const CountingConfig& config) {
  check_aligned(pred, gold);
  std::vector<SentenceScore> sentences;
  sentences.reserve(pred.size());
  for (std::size_t k = 0; k < pred.size(); ++k)
    sentences.push_back(score_sentence(pred[k], gold[k], config));
  return aggregate(std::move(sentences));
}

nlohmann::json WilcoxonResult::to_json() const {
  return {{"n_nonzero", n_nonzero},
          {"w", w_statistic},
          {"p_value", p_value},
          {"method", method == WilcoxonMethod::Exact ? "exact" : "normal"}};
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& diffs) {
  if (diffs.empty()) throw std::invalid_argument("wilcoxon: empty sample");
  SignedRanks r = rank(diffs);
  WilcoxonResult out;
  out.n_nonzero = static_cast<int>(r.ranks.size());
  if (out.n_nonzero == 0) return out;
  const double total = 0.5 * out.n_nonzero * (out.n_nonzero + 1.0);
  const double plus = positive_rank_sum(r);
  out.w_statistic = std::min(plus, total - plus);
  if (out.n_nonzero <= kExactCutoff) {
    out.method = WilcoxonMethod::Exact;
    out.p_value = exact_p(r);
  } else {
    out.method = WilcoxonMethod::NormalApprox;
    out.p_value = normal_p(r);
  }
  return out;
}

double wilcoxon_exact_p(const std::vector<double>& diffs) { return exact_p(rank(diffs)); }
double wilcoxon_normal_p(const std::vector<double>& diffs) { return normal_p(rank(diffs)); }

std::vector<LossDifferenceRow> loss_difference_export(const std::vector<Tree>& pred_a,
                                                      const std::vector<Tree>& pred_b,
                                                      const std::vector<Tree>& gold,
                                                      const CountingConfig& config) {
  check_aligned(pred_a, gold);
  check_aligned(pred_b, gold);
  std::vector<LossDifferenceRow> rows;
  for (std::size_t k = 0; k < gold.size(); ++k) {
    LossDifferenceRow row;
    row.index = k;
    row.delta_a = score_sentence(pred_a[k], gold[k], config).delta_f1;
    row.delta_b = score_sentence(pred_b[k], gold[k], config).delta_f1;
    row.difference = row.delta_a - row.delta_b;
    row.zero = row.difference == 0.0;
    rows.push_back(row);
  }
  return rows;
}

void write_loss_difference_tsv(std::ostream& out, const std::vector<LossDifferenceRow>& rows) {
  out << "index\tdelta_f1_a\tdelta_f1_b\tdifference\tzero\n";
  for (const LossDifferenceRow& r : rows)
    out << r.index << '\t' << r.delta_a << '\t' << r.delta_b << '\t' << r.difference << '\t'
        << (r.zero ? 1 : 0) << '\n';
}

Tree noparse_placeholder(const std::vector<std::string>& tokens) {
  std::vector<Tree> leaves;
  for (const std::string& t : tokens) leaves.push_back(Tree::leaf(t));
  return Tree::node(Label("NOPARSE"), std::move(leaves));
}

}  // namespace ssvmparse
