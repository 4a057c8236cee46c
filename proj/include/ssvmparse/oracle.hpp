#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "ssvmparse/lossdp.hpp"

namespace ssvmparse {

/// A random small binarized grammar (with artificial and parent-annotated
/// symbols), random weights, a sentence and a gold parse drawn from its
/// derivations.
struct OracleInstance {
  Model model;
  std::vector<std::string> tokens;
  Tree gold;  // binarized
  std::size_t num_parses = 0;
};

struct InstanceOptions {
  int max_len = 7;
  int max_productions = 10;
  double weight_range = 2.0;
  std::size_t max_parses = 20000;
};

OracleInstance random_instance(std::mt19937_64& rng, const InstanceOptions& options = {});

/// max over `parses` of Delta(gold, y) * (constant + score(y)), evaluated
/// tree by tree through constituent extraction.
double brute_force_objective(const Model& model, const GoldReference& gold, const LossMode& mode,
                             double constant, const std::vector<Tree>& parses);

struct OracleTrial {
  int trial = 0;
  LossMode mode;
  double dp_objective = 0.0;
  double brute_objective = 0.0;
  bool match = false;
  double cky_score = 0.0;
  double brute_best_score = 0.0;
  bool cky_match = false;
};

/// Runs `trials` random instances through every loss mode. Odd trials count
/// preterminals so both counting settings are covered.
std::vector<OracleTrial> run_oracle_check(int trials, int max_len, std::uint64_t seed,
                                          double tolerance = 1e-9);

}  // namespace ssvmparse
