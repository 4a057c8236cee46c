#pragma once

#include <ostream>
#include <vector>

#include "json.hpp"

#include "ssvmparse/tree.hpp"

namespace ssvmparse {

struct SentenceScore {
  int tp = 0;
  int fp = 0;
  int gold_size = 0;
  double delta_f1 = 0.0;
};

/// Micro-averaged corpus scores.
struct EvalResult {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double exact_match = 0.0;
  std::vector<SentenceScore> per_sentence;

  nlohmann::json to_json() const;
};

class EvalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

EvalResult evaluate(const std::vector<Tree>& pred, const std::vector<Tree>& gold,
                    const CountingConfig& config = {});

/// Corpus aggregation of already-counted sentences.
EvalResult aggregate(std::vector<SentenceScore> sentences);

enum class WilcoxonMethod { Exact, NormalApprox };

struct WilcoxonResult {
  int n_nonzero = 0;
  double w_statistic = 0.0;
  double p_value = 1.0;
  WilcoxonMethod method = WilcoxonMethod::Exact;

  nlohmann::json to_json() const;
};

/// Two-sided signed-rank test; zero differences are dropped, ties get
/// average ranks. Exact null distribution for n <= 20, otherwise the
/// tie-corrected normal approximation with continuity correction.
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& diffs);

/// Both p-value routes, exposed for cross-checking.
double wilcoxon_exact_p(const std::vector<double>& diffs);
double wilcoxon_normal_p(const std::vector<double>& diffs);

struct LossDifferenceRow {
  std::size_t index = 0;
  double delta_a = 0.0;
  double delta_b = 0.0;
  double difference = 0.0;  // delta_a - delta_b
  bool zero = false;
};

std::vector<LossDifferenceRow> loss_difference_export(const std::vector<Tree>& pred_a,
                                                      const std::vector<Tree>& pred_b,
                                                      const std::vector<Tree>& gold,
                                                      const CountingConfig& config = {});

void write_loss_difference_tsv(std::ostream& out, const std::vector<LossDifferenceRow>& rows);

/// Flat `(NOPARSE tok ...)` stand-in for sentences without a parse.
Tree noparse_placeholder(const std::vector<std::string>& tokens);

}  // namespace ssvmparse
