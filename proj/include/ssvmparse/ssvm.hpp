#pragma once

#include <cstddef>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "ssvmparse/lossdp.hpp"

namespace ssvmparse {

struct TrainConfig {
  double C = 1.0;
  double epsilon = 0.01;
  int max_outer_iters = 100;
  LossMode loss_mode = LossMode::make(LossKind::F1Unbinarized);
  double qp_tolerance = 1e-8;
  int qp_max_passes = 10000;
  int batch_size = 1;  // violations committed per QP re-solve
  int threads = 1;

  void validate() const;
};

/// Slack-rescaled cutting plane: w.dpsi >= 1 - xi / loss.
struct Constraint {
  std::size_t example = 0;
  SparseFeatures dpsi;
  double loss = 0.0;
};

struct WorkingSet {
  std::vector<std::vector<Constraint>> constraints;  // per example
  std::vector<std::vector<double>> duals;            // parallel to constraints
  std::vector<double> slacks;

  explicit WorkingSet(std::size_t examples = 0)
      : constraints(examples), duals(examples), slacks(examples, 0.0) {}

  std::size_t num_examples() const { return constraints.size(); }
  std::size_t size() const;
  void add(Constraint c);
};

struct QPResult {
  Weights weights;
  std::vector<double> slacks;
  double primal = 0.0;  // 1/2 |w|^2 + C/n sum xi
  double dual = 0.0;
  int passes = 0;
};

/// Restricted n-slack QP solved in the dual by coordinate ascent, one dual
/// variable per constraint, each example's duals sharing the budget C/n.
/// Warm-starts from and updates `working_set.duals` and `.slacks`.
QPResult solve_restricted_qp(WorkingSet& working_set, double C, std::size_t n, int dimension,
                             double qp_tolerance, int qp_max_passes);

/// loss * (1 - w.dpsi) - slack.
double violation(const Model& model, const Constraint& constraint, double slack);

struct TrainingExample {
  std::vector<std::string> tokens;
  Tree gold;  // binarized, wrapped like the grammar's roots
  GoldReference reference;
};

/// Builds training examples: gold constituents under `counting` plus the
/// (root-wrapped) binarized tree.
std::vector<TrainingExample> make_examples(const std::vector<Tree>& binarized,
                                           const Grammar& grammar, const CountingConfig& counting);

struct TrainReport {
  struct Pass {
    int violations_found = 0;
    double objective = 0.0;
  };
  int passes = 0;
  std::size_t constraints = 0;
  double objective = 0.0;
  int skipped_noparse = 0;
  int violations_remaining = 0;
  bool converged = false;
  double wall_time_seconds = 0.0;
  std::vector<Pass> per_pass;

  struct Added {
    std::size_t example = 0;
    int pass = 0;
    int tp = 0;
    int fp = 0;
    double loss = 0.0;
  };
  std::vector<Added> constraint_log;

  nlohmann::json to_json() const;
};

struct TrainResult {
  Model model;
  TrainReport report;
  WorkingSet working_set;
};

TrainResult train(const std::vector<TrainingExample>& examples,
                  std::shared_ptr<const Grammar> grammar, const TrainConfig& config);

}  // namespace ssvmparse
