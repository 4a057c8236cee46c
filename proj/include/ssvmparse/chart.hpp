#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "ssvmparse/grammar.hpp"

namespace ssvmparse {

using Weights = Eigen::VectorXd;
using SparseFeatures = Eigen::SparseVector<double>;

/// A grammar plus one weight per production id.
struct Model {
  std::shared_ptr<const Grammar> grammar;
  Weights weights;

  static Model zeros(std::shared_ptr<const Grammar> grammar);
  double weight(int production_id) const { return weights[production_id]; }
};

/// Production-count map Psi(x, y).
struct FeatureVector {
  std::map<int, int> counts;

  int total() const;
  SparseFeatures to_sparse(int dimension) const;
};

SparseFeatures difference(const FeatureVector& lhs, const FeatureVector& rhs, int dimension);

/// Production id used by a preterminal node, resolving unknown words.
/// Throws GrammarError when the rule does not exist.
int lexical_production(const Grammar& grammar, const Label& tag, const std::string& token);

FeatureVector feature_vector(const Tree& tree, const Grammar& grammar);

template <typename Derived>
double dot(const Eigen::MatrixBase<Derived>& weights, const FeatureVector& features) {
  double s = 0.0;
  for (const auto& [id, count] : features.counts) s += weights[id] * count;
  return s;
}

double score(const Model& model, const Tree& tree);

/// Viterbi CKY over the binarized grammar. Returns nullopt when no
/// derivation rooted at the start symbol exists. Ties go to the larger
/// split point (left-branching), then the smaller production id.
std::optional<Tree> cky_parse(const Model& model, const std::vector<std::string>& tokens);

/// Like cky_parse but also reports the chart's best score.
struct ParseResult {
  Tree tree;
  double score = 0.0;
};
std::optional<ParseResult> cky_parse_scored(const Model& model,
                                            const std::vector<std::string>& tokens);

void write_model(std::ostream& out, const Model& model);
Model read_model(std::istream& in);

}  // namespace ssvmparse
