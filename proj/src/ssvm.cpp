#include "ssvmparse/ssvm.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace ssvmparse {

namespace {

std::string constraint_key(const Constraint& c) {
  std::ostringstream key;
  key.precision(17);
  key << c.example << '|' << c.loss;
  for (SparseFeatures::InnerIterator it(c.dpsi); it; ++it) key << '|' << it.index() << ':' << it.value();
  return key.str();
}

// Per-constraint data of the scaled form  w.a >= b - xi  with a = loss * dpsi.
struct ScaledConstraint {
  SparseFeatures a;
  double b = 0.0;
  double norm2 = 0.0;
};

}  // namespace

void TrainConfig::validate() const {
  if (!(C > 0.0)) throw std::invalid_argument("C must be positive");
  if (!(epsilon > 0.0)) throw std::invalid_argument("epsilon must be positive");
  if (max_outer_iters < 1) throw std::invalid_argument("max_outer_iters must be >= 1");
  if (!(qp_tolerance > 0.0)) throw std::invalid_argument("qp_tolerance must be positive");
  if (qp_max_passes < 1) throw std::invalid_argument("qp_max_passes must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (threads < 1) throw std::invalid_argument("threads must be >= 1");
}

std::size_t WorkingSet::size() const {
  std::size_t total = 0;
  for (const auto& block : constraints) total += block.size();
  return total;
}

void WorkingSet::add(Constraint c) {
  if (!(c.loss > 0.0)) throw std::invalid_argument("constraints need a strictly positive loss");
  std::size_t i = c.example;
  if (i >= constraints.size()) throw std::out_of_range("constraint example index out of range");
  constraints[i].push_back(std::move(c));
  duals[i].push_back(0.0);
}

QPResult solve_restricted_qp(WorkingSet& ws, double C, std::size_t n, int dimension,
                             double qp_tolerance, int qp_max_passes) {
  const double cap = C / static_cast<double>(n);
  std::vector<std::vector<ScaledConstraint>> scaled(ws.num_examples());
  Weights w = Weights::Zero(dimension);

  for (std::size_t i = 0; i < ws.num_examples(); ++i) {
    for (std::size_t k = 0; k < ws.constraints[i].size(); ++k) {
      const Constraint& c = ws.constraints[i][k];
      ScaledConstraint s;
      s.a = c.loss * c.dpsi;
      s.b = c.loss;
      s.norm2 = s.a.squaredNorm();
      w += ws.duals[i][k] * s.a;
      scaled[i].push_back(std::move(s));
    }
  }

  // Within an example the budget constraint is an equality once the unused
  // budget is treated as one more variable with zero gradient, so every step
  // moves mass from a low-gradient variable to a high-gradient one.
  std::vector<Eigen::MatrixXd> gram(scaled.size());
  for (std::size_t i = 0; i < scaled.size(); ++i) {
    const std::size_t m = scaled[i].size();
    gram[i].resize(m, m);
    for (std::size_t k = 0; k < m; ++k) {
      gram[i](k, k) = scaled[i][k].norm2;
      for (std::size_t l = 0; l < k; ++l) gram[i](k, l) = gram[i](l, k) = scaled[i][k].a.dot(scaled[i][l].a);
    }
  }

  QPResult result;
  for (result.passes = 0; result.passes < qp_max_passes;) {
    ++result.passes;
    double max_gain = 0.0;

    for (std::size_t i = 0; i < scaled.size(); ++i) {
      auto& block = scaled[i];
      auto& alpha = ws.duals[i];
      const std::size_t m = block.size();
      if (m == 0) continue;
      const std::size_t slack = m;
      const Eigen::MatrixXd& K = gram[i];
      std::vector<double> grad(m + 1, 0.0);
      for (std::size_t k = 0; k < m; ++k) grad[k] = block[k].b - block[k].a.dot(w);

      for (std::size_t round = 0; round < 4 * (m + 1); ++round) {
        double used = 0.0;
        for (double x : alpha) used += x;
        double spare = cap - used;
        if (spare <= 1e-12 * cap) spare = 0.0;

        std::size_t up = 0;
        for (std::size_t k = 1; k <= m; ++k)
          if (grad[k] > grad[up]) up = k;
        std::size_t down = m + 1;
        for (std::size_t k = 0; k <= m; ++k) {
          if (k == up) continue;
          const double mass = k == slack ? spare : alpha[k];
          if (mass > 0.0 && (down > m || grad[k] < grad[down])) down = k;
        }
        if (down > m || grad[up] <= grad[down]) break;

        double curvature = 0.0;
        if (up != slack) curvature += K(up, up);
        if (down != slack) curvature += K(down, down);
        if (up != slack && down != slack) curvature -= 2.0 * K(up, down);
        const double mass = down == slack ? spare : alpha[down];
        const double gap = grad[up] - grad[down];
        const bool clipped = curvature <= 0.0 || gap / curvature >= mass;
        const double t = clipped ? mass : gap / curvature;
        if (t <= 0.0) break;
        const double gain = t * gap - 0.5 * t * t * curvature;
        if (up != slack) {
          alpha[up] += t;
          w += t * block[up].a;
          for (std::size_t k = 0; k < m; ++k) grad[k] -= t * K(k, up);
        }
        if (down != slack) {
          alpha[down] = clipped ? 0.0 : std::max(0.0, alpha[down] - t);
          w -= t * block[down].a;
          for (std::size_t k = 0; k < m; ++k) grad[k] += t * K(k, down);
        }
        max_gain = std::max(max_gain, gain);
        if (!clipped && gain < qp_tolerance) break;
      }
    }
    if (max_gain < qp_tolerance) break;
  }

  double linear = 0.0;
  double slack_sum = 0.0;
  ws.slacks.assign(ws.num_examples(), 0.0);
  for (std::size_t i = 0; i < scaled.size(); ++i) {
    for (std::size_t k = 0; k < scaled[i].size(); ++k) {
      linear += ws.duals[i][k] * scaled[i][k].b;
      ws.slacks[i] = std::max(ws.slacks[i], scaled[i][k].b - scaled[i][k].a.dot(w));
    }
    slack_sum += ws.slacks[i];
  }
  const double half_norm = 0.5 * w.squaredNorm();
  result.primal = half_norm + cap * slack_sum;
  result.dual = linear - half_norm;
  result.slacks = ws.slacks;
  result.weights = std::move(w);
  return result;
}

double violation(const Model& model, const Constraint& constraint, double slack) {
  return constraint.loss * (1.0 - constraint.dpsi.dot(model.weights)) - slack;
}

std::vector<TrainingExample> make_examples(const std::vector<Tree>& binarized,
                                           const Grammar& grammar, const CountingConfig& counting) {
  std::vector<TrainingExample> out;
  out.reserve(binarized.size());
  for (const Tree& t : binarized) {
    TrainingExample ex;
    ex.gold = wrap_root(t, grammar);
    ex.tokens = ex.gold.tokens();
    ex.reference = constituents(ex.gold, counting);
    out.push_back(std::move(ex));
  }
  return out;
}

nlohmann::json TrainReport::to_json() const {
  nlohmann::json j;
  j["passes"] = passes;
  j["constraints"] = constraints;
  j["objective"] = objective;
  j["skipped_noparse"] = skipped_noparse;
  j["violations_remaining"] = violations_remaining;
  j["converged"] = converged;
  j["wall_time_seconds"] = wall_time_seconds;
  j["per_pass"] = nlohmann::json::array();
  for (const Pass& p : per_pass)
    j["per_pass"].push_back({{"violations_found", p.violations_found}, {"objective", p.objective}});
  j["constraint_log"] = nlohmann::json::array();
  for (const Added& a : constraint_log)
    j["constraint_log"].push_back(
        {{"example", a.example}, {"pass", a.pass}, {"tp", a.tp}, {"fp", a.fp}, {"loss", a.loss}});
  return j;
}

TrainResult train(const std::vector<TrainingExample>& examples,
                  std::shared_ptr<const Grammar> grammar, const TrainConfig& config) {
  config.validate();
  const std::size_t n = examples.size();
  if (n == 0) throw std::invalid_argument("no training examples");
  const auto started = std::chrono::steady_clock::now();
  const int dimension = grammar->num_productions();

  TrainResult result{Model::zeros(grammar), {}, WorkingSet(n)};
  Model& model = result.model;
  WorkingSet& ws = result.working_set;
  TrainReport& report = result.report;

  std::vector<FeatureVector> gold_features;
  gold_features.reserve(n);
  for (const TrainingExample& ex : examples) gold_features.push_back(feature_vector(ex.gold, *grammar));

  std::set<std::string> seen;
  std::vector<char> noparse(n, 0);
  const std::size_t batch = static_cast<std::size_t>(config.batch_size);

  auto separate = [&](std::size_t begin, std::size_t end) {
    std::vector<std::optional<LAIResult>> found(end - begin);
    auto work = [&](std::size_t k) {
      const TrainingExample& ex = examples[begin + k];
      found[k] = loss_augmented_infer(model, ex.tokens, ex.reference, config.loss_mode, ex.gold);
    };
    std::size_t workers = std::min<std::size_t>(config.threads, found.size());
    if (workers <= 1) {
      for (std::size_t k = 0; k < found.size(); ++k) work(k);
    } else {
      std::vector<std::thread> pool;
      for (std::size_t t = 0; t < workers; ++t)
        pool.emplace_back([&, t] {
          for (std::size_t k = t; k < found.size(); k += workers) work(k);
        });
      for (std::thread& th : pool) th.join();
    }
    return found;
  };

  auto candidate = [&](std::size_t i, const LAIResult& y) {
    return Constraint{i, difference(gold_features[i], feature_vector(y.tree, *grammar), dimension),
                      y.loss};
  };

  for (int pass = 1; pass <= config.max_outer_iters; ++pass) {
    int added = 0;
    for (std::size_t begin = 0; begin < n; begin += batch) {
      const std::size_t end = std::min(n, begin + batch);
      auto found = separate(begin, end);
      bool changed = false;
      for (std::size_t k = 0; k < found.size(); ++k) {
        const std::size_t i = begin + k;
        if (!found[k]) {
          noparse[i] = 1;
          continue;
        }
        if (!(found[k]->loss > 0.0)) continue;
        Constraint c = candidate(i, *found[k]);
        if (violation(model, c, ws.slacks[i]) <= config.epsilon) continue;
        if (!seen.insert(constraint_key(c)).second) continue;
        report.constraint_log.push_back({i, pass, found[k]->tp, found[k]->fp, found[k]->loss});
        ws.add(std::move(c));
        ++added;
        changed = true;
      }
      if (changed) {
        QPResult qp = solve_restricted_qp(ws, config.C, n, dimension, config.qp_tolerance,
                                          config.qp_max_passes);
        model.weights = std::move(qp.weights);
        report.objective = qp.dual;
      }
    }
    report.passes = pass;
    report.per_pass.push_back({added, report.objective});
    if (added == 0) {
      report.converged = true;
      break;
    }
  }

  report.skipped_noparse = static_cast<int>(std::count(noparse.begin(), noparse.end(), 1));
  if (static_cast<std::size_t>(report.skipped_noparse) == n)
    throw std::runtime_error("no training example could be parsed");

  if (!report.converged) {
    auto found = separate(0, n);
    for (std::size_t i = 0; i < n; ++i) {
      if (!found[i] || !(found[i]->loss > 0.0)) continue;
      if (violation(model, candidate(i, *found[i]), ws.slacks[i]) > config.epsilon)
        ++report.violations_remaining;
    }
  }
  report.constraints = ws.size();
  report.wall_time_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace ssvmparse
