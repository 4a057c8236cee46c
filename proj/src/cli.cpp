#include "ssvmparse/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>

#include "CLI11.hpp"
#include "json.hpp"

#include "ssvmparse/metrics.hpp"
#include "ssvmparse/oracle.hpp"
#include "ssvmparse/ssvm.hpp"

namespace ssvmparse::cli {

namespace {

namespace fs = std::filesystem;

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// JSON config files: top-level keys are option names, nested objects are
/// subcommands, e.g. {"threads": 2, "train": {"C": 100}}.
class ConfigJSON : public CLI::Config {
 public:
  std::string to_config(const CLI::App*, bool, bool, std::string) const override { return "{}"; }

  std::vector<CLI::ConfigItem> from_config(std::istream& input) const override {
    nlohmann::json j;
    try {
      input >> j;
    } catch (const nlohmann::json::exception& e) {
      throw CLI::ConversionError(std::string("invalid JSON config: ") + e.what());
    }
    return items(j, "", {});
  }

 private:
  std::vector<CLI::ConfigItem> items(const nlohmann::json& j, const std::string& name,
                                     std::vector<std::string> prefix) const {
    std::vector<CLI::ConfigItem> out;
    if (j.is_object()) {
      if (!name.empty()) prefix.push_back(name);
      for (auto it = j.begin(); it != j.end(); ++it) {
        auto sub = items(*it, it.key(), prefix);
        out.insert(out.end(), sub.begin(), sub.end());
      }
      return out;
    }
    if (name.empty()) throw CLI::ConversionError("JSON config must be an object");
    CLI::ConfigItem item;
    item.name = name;
    item.parents = prefix;
    if (j.is_boolean()) {
      item.inputs = {j.get<bool>() ? "true" : "false"};
    } else if (j.is_number_integer()) {
      item.inputs = {std::to_string(j.get<long long>())};
    } else if (j.is_number()) {
      std::ostringstream s;
      s << std::setprecision(17) << j.get<double>();
      item.inputs = {s.str()};
    } else if (j.is_string()) {
      item.inputs = {j.get<std::string>()};
    } else if (j.is_array()) {
      for (const auto& v : j) item.inputs.push_back(v.is_string() ? v.get<std::string>() : v.dump());
    } else {
      throw CLI::ConversionError("unsupported JSON value for " + name);
    }
    out.push_back(std::move(item));
    return out;
  }
};

std::vector<Tree> load_trees(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  return read_treebank(in);
}

void save_trees(const std::string& path, const std::vector<Tree>& trees) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  write_treebank(out, trees);
}

std::vector<std::vector<std::string>> load_sentences(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  std::vector<std::vector<std::string>> out;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream words(line);
    std::vector<std::string> tokens;
    for (std::string w; words >> w;) tokens.push_back(w);
    if (!tokens.empty()) out.push_back(std::move(tokens));
  }
  return out;
}

void save_json(const std::string& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump(2) << '\n';
}

void ensure_parent(const std::string& path) {
  fs::path parent = fs::path(path).parent_path();
  if (!parent.empty()) fs::create_directories(parent);
}

int parse_horizontal(const std::string& text) {
  if (text == "inf" || text == "-1") return BinConfig::kUnbounded;
  int h = std::stoi(text);
  if (h < 0) throw CLI::ValidationError("--h", "must be >= 0 or inf");
  return h;
}

template <typename Fn>
void parallel_for(std::size_t count, int threads, Fn fn) {
  std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(1, threads)), count);
  if (workers <= 1) {
    for (std::size_t k = 0; k < count; ++k) fn(k);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < workers; ++t)
    pool.emplace_back([&, t] {
      for (std::size_t k = t; k < count; k += workers) fn(k);
    });
  for (std::thread& th : pool) th.join();
}

/// Parses each sentence, debinarizes and unwraps; NoParse becomes a flat
/// placeholder.
std::vector<Tree> parse_all(const Model& model, const std::vector<std::vector<std::string>>& sentences,
                            int threads, int& noparse) {
  std::vector<Tree> out(sentences.size());
  std::vector<char> failed(sentences.size(), 0);
  parallel_for(sentences.size(), threads, [&](std::size_t k) {
    auto tree = cky_parse(model, sentences[k]);
    if (tree) {
      out[k] = debinarize_tree(unwrap_root(*tree, *model.grammar));
    } else {
      out[k] = noparse_placeholder(sentences[k]);
      failed[k] = 1;
    }
  });
  noparse = static_cast<int>(std::count(failed.begin(), failed.end(), 1));
  return out;
}

struct TrainOptions {
  std::string loss = "f1";
  double C = 1.0;
  double eps = 0.01;
  std::string h = "inf";
  int v = 1;
  int max_iters = 100;
  int unk_threshold = 2;
  int batch = 1;
  int max_len = 0;
  bool include_preterminals = false;
};

void add_train_flags(CLI::App* cmd, TrainOptions& o) {
  cmd->add_option("--loss", o.loss, "Training loss")
      ->check(CLI::IsMember({"f1", "f1-bin", "fp-bin", "zeroone-bin"}))
      ->capture_default_str();
  cmd->add_option("--C", o.C, "Regularization constant")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--eps", o.eps, "Violation tolerance")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--h", o.h, "Horizontal markovization (integer or inf)")->capture_default_str();
  cmd->add_option("--v", o.v, "Vertical markovization order")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--max-iters", o.max_iters, "Cutting-plane pass limit")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--unk-threshold", o.unk_threshold, "Words rarer than this get UNK rules")->capture_default_str();
  cmd->add_option("--batch", o.batch, "Violations per QP re-solve")->check(CLI::PositiveNumber)->capture_default_str();
  cmd->add_option("--max-len", o.max_len, "Skip training sentences longer than this (0 = no cap)")->capture_default_str();
  cmd->add_flag("--include-preterminals", o.include_preterminals, "Count preterminals as constituents");
}

struct Trained {
  std::shared_ptr<const Grammar> grammar;
  TrainResult result;
};

Trained train_model(const std::vector<Tree>& trees, const TrainOptions& o, int threads,
                    std::ostream& err) {
  BinConfig bin;
  bin.horizontal = parse_horizontal(o.h);
  bin.vertical = o.v;

  std::vector<Tree> binarized;
  int too_long = 0;
  for (const Tree& t : trees) {
    if (o.max_len > 0 && static_cast<int>(t.num_tokens()) > o.max_len) {
      ++too_long;
      continue;
    }
    binarized.push_back(binarize_tree(t, bin));
  }
  if (binarized.empty()) throw DataError("no training trees");
  if (too_long > 0) err << "skipped " << too_long << " trees longer than " << o.max_len << " tokens\n";

  auto grammar = std::make_shared<const Grammar>(induce(binarized, o.unk_threshold));
  TrainConfig config;
  config.C = o.C;
  config.epsilon = o.eps;
  config.max_outer_iters = o.max_iters;
  config.loss_mode = LossMode::parse(o.loss);
  config.loss_mode.counting.exclude_preterminals = !o.include_preterminals;
  config.batch_size = o.batch;
  config.threads = std::max(1, threads);

  auto examples = make_examples(binarized, *grammar, config.loss_mode.counting);
  err << "training " << o.loss << " on " << examples.size() << " trees, "
      << grammar->num_productions() << " productions\n";
  TrainResult result = train(examples, grammar, config);
  err << "finished after " << result.report.passes << " passes, " << result.report.constraints
      << " constraints, objective " << result.report.objective << "\n";
  return {grammar, std::move(result)};
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Max-margin constituency parser trained for F1 with a structural SVM", "ssvmparse"};
  app.set_help_flag("--help", "Print this help message and exit");
  app.require_subcommand(1);
  app.config_formatter(std::make_shared<ConfigJSON>());
  app.set_config("--config", "", "Optional JSON config file (flags override it)");

  int threads = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  std::uint64_t seed = 42;
  app.add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--seed", seed, "Seed for randomized harnesses");

  // preprocess
  auto* pre = app.add_subcommand("preprocess", "Strip functional tags, nulls and unary chains");
  std::string pre_in, pre_out;
  int pre_max_len = 0;
  bool keep_functional = false, keep_nulls = false, keep_unaries = false;
  pre->add_option("--in", pre_in, "Raw treebank")->required()->check(CLI::ExistingFile);
  pre->add_option("--out", pre_out, "Output treebank")->required();
  pre->add_option("--max-len", pre_max_len, "Drop trees with more tokens (0 = keep all)");
  pre->add_flag("--keep-functional", keep_functional);
  pre->add_flag("--keep-nulls", keep_nulls);
  pre->add_flag("--keep-unaries", keep_unaries);

  // train
  auto* tr = app.add_subcommand("train", "Binarize, induce a grammar and train the SSVM");
  std::string tr_trees, tr_grammar, tr_model, tr_report;
  TrainOptions tr_opts;
  tr->add_option("--trees", tr_trees, "Preprocessed training treebank")->required()->check(CLI::ExistingFile);
  tr->add_option("--grammar-out", tr_grammar, "Grammar file to write")->required();
  tr->add_option("--model-out", tr_model, "Model file to write")->required();
  tr->add_option("--report", tr_report, "Training report JSON (default: <model-out>.report.json)");
  add_train_flags(tr, tr_opts);

  // parse
  auto* pa = app.add_subcommand("parse", "Parse sentences with a trained model");
  std::string pa_model, pa_in, pa_trees, pa_out;
  pa->add_option("--model", pa_model, "Model file")->required()->check(CLI::ExistingFile);
  auto* pa_in_opt = pa->add_option("--in", pa_in, "Tokenized sentences, one per line")->check(CLI::ExistingFile);
  auto* pa_trees_opt = pa->add_option("--trees", pa_trees, "Treebank whose yields are parsed")->check(CLI::ExistingFile);
  pa_in_opt->excludes(pa_trees_opt);
  pa->add_option("--out", pa_out, "Output treebank")->required();

  // eval
  auto* ev = app.add_subcommand("eval", "Precision, recall, F1 and exact match");
  std::string ev_pred, ev_gold, ev_out;
  bool ev_preterminals = false;
  ev->add_option("--pred", ev_pred)->required()->check(CLI::ExistingFile);
  ev->add_option("--gold", ev_gold)->required()->check(CLI::ExistingFile);
  ev->add_option("--out", ev_out, "Also write the metrics JSON here");
  ev->add_flag("--include-preterminals", ev_preterminals);

  // compare
  auto* cmp = app.add_subcommand("compare", "Paired loss comparison with a Wilcoxon test");
  std::string cmp_a, cmp_b, cmp_gold, cmp_tsv;
  cmp->add_option("--pred-a", cmp_a)->required()->check(CLI::ExistingFile);
  cmp->add_option("--pred-b", cmp_b)->required()->check(CLI::ExistingFile);
  cmp->add_option("--gold", cmp_gold)->required()->check(CLI::ExistingFile);
  cmp->add_option("--tsv", cmp_tsv, "Per-sentence loss-difference table");

  // oracle-check
  auto* oc = app.add_subcommand("oracle-check", "Compare loss-augmented inference with brute force");
  int oc_trials = 200, oc_max_len = 7;
  std::string oc_out;
  oc->add_option("--trials", oc_trials)->check(CLI::PositiveNumber)->capture_default_str();
  oc->add_option("--max-len", oc_max_len)->check(CLI::Range(2, 8))->capture_default_str();
  oc->add_option("--out", oc_out, "Write the TSV here instead of stdout");

  // protocol
  auto* pr = app.add_subcommand("protocol", "Train all four losses, evaluate, compare F1 vs F1 (bin.)");
  std::string pr_train, pr_test, pr_dir;
  TrainOptions pr_opts;
  pr->add_option("--train", pr_train)->required()->check(CLI::ExistingFile);
  pr->add_option("--test", pr_test)->required()->check(CLI::ExistingFile);
  pr->add_option("--out-dir", pr_dir)->required();
  add_train_flags(pr, pr_opts);

  std::vector<std::string> argv_storage;
  argv_storage.push_back("ssvmparse");
  argv_storage.insert(argv_storage.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (std::string& s : argv_storage) argv.push_back(s.data());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*pre) {
      PreprocessOptions options;
      options.strip_functional = !keep_functional;
      options.remove_nulls = !keep_nulls;
      options.collapse_unaries = !keep_unaries;
      std::vector<Tree> trees = load_trees(pre_in);
      if (trees.empty()) throw DataError("input treebank " + pre_in + " is empty");
      std::vector<Tree> kept;
      int dropped = 0;
      for (const Tree& t : trees) {
        Tree p = preprocess(t, options);
        if (pre_max_len > 0 && static_cast<int>(p.num_tokens()) > pre_max_len) {
          ++dropped;
          continue;
        }
        kept.push_back(std::move(p));
      }
      ensure_parent(pre_out);
      save_trees(pre_out, kept);
      err << "wrote " << kept.size() << " trees (" << dropped << " over length limit)\n";
      return kOk;
    }

    if (*tr) {
      std::vector<Tree> trees = load_trees(tr_trees);
      Trained t = train_model(trees, tr_opts, threads, err);
      ensure_parent(tr_grammar);
      ensure_parent(tr_model);
      {
        std::ofstream g(tr_grammar);
        if (!g) throw DataError("cannot write " + tr_grammar);
        write_grammar(g, *t.grammar);
        std::ofstream m(tr_model);
        if (!m) throw DataError("cannot write " + tr_model);
        write_model(m, t.result.model);
      }
      nlohmann::json report = t.result.report.to_json();
      report["loss"] = tr_opts.loss;
      report["C"] = tr_opts.C;
      report["epsilon"] = tr_opts.eps;
      save_json(tr_report.empty() ? tr_model + ".report.json" : tr_report, report);
      return kOk;
    }

    if (*pa) {
      std::ifstream m(pa_model);
      Model model = read_model(m);
      std::vector<std::vector<std::string>> sentences;
      if (!pa_trees.empty()) {
        for (const Tree& t : load_trees(pa_trees)) sentences.push_back(t.tokens());
      } else if (!pa_in.empty()) {
        sentences = load_sentences(pa_in);
      } else {
        err << "parse: one of --in or --trees is required\n";
        return kUsage;
      }
      int noparse = 0;
      std::vector<Tree> parsed = parse_all(model, sentences, threads, noparse);
      ensure_parent(pa_out);
      save_trees(pa_out, parsed);
      err << "parsed " << parsed.size() << " sentences, " << noparse << " without a parse\n";
      return kOk;
    }

    if (*ev) {
      std::vector<Tree> pred = load_trees(ev_pred);
      std::vector<Tree> gold = load_trees(ev_gold);
      CountingConfig config;
      config.exclude_preterminals = !ev_preterminals;
      EvalResult result = evaluate(pred, gold, config);
      nlohmann::json j = result.to_json();
      int noparse = 0;
      for (const Tree& t : pred) noparse += (!t.is_leaf() && t.label.base == "NOPARSE") ? 1 : 0;
      j["noparse"] = noparse;
      out << j.dump(2) << '\n';
      if (!ev_out.empty()) {
        ensure_parent(ev_out);
        save_json(ev_out, j);
      }
      return kOk;
    }

    if (*cmp) {
      std::vector<Tree> a = load_trees(cmp_a);
      std::vector<Tree> b = load_trees(cmp_b);
      std::vector<Tree> gold = load_trees(cmp_gold);
      auto rows = loss_difference_export(a, b, gold);
      if (!cmp_tsv.empty()) {
        ensure_parent(cmp_tsv);
        std::ofstream tsv(cmp_tsv);
        if (!tsv) throw DataError("cannot write " + cmp_tsv);
        write_loss_difference_tsv(tsv, rows);
      }
      std::vector<double> diffs;
      for (const auto& r : rows) diffs.push_back(r.difference);
      if (diffs.empty()) throw DataError("nothing to compare");
      out << wilcoxon_signed_rank(diffs).to_json().dump(2) << '\n';
      return kOk;
    }

    if (*oc) {
      std::vector<OracleTrial> trials = run_oracle_check(oc_trials, oc_max_len, seed);
      std::ofstream file;
      if (!oc_out.empty()) {
        ensure_parent(oc_out);
        file.open(oc_out);
        if (!file) throw DataError("cannot write " + oc_out);
      }
      std::ostream& tsv = oc_out.empty() ? out : file;
      tsv << "trial\tmode\tdp_objective\tbrute_objective\tmatch_flag\n";
      tsv << std::setprecision(17);
      int mismatches = 0, cky_mismatches = 0, last_trial = -1;
      for (const OracleTrial& t : trials) {
        tsv << t.trial << '\t' << t.mode.name() << '\t' << t.dp_objective << '\t' << t.brute_objective
            << '\t' << (t.match ? 1 : 0) << '\n';
        mismatches += t.match ? 0 : 1;
        if (t.trial != last_trial) cky_mismatches += t.cky_match ? 0 : 1;
        last_trial = t.trial;
      }
      err << "oracle-check: " << trials.size() << " rows, " << mismatches
          << " objective mismatches, " << cky_mismatches << " CKY mismatches\n";
      return (mismatches == 0 && cky_mismatches == 0) ? kOk : kOracleMismatch;
    }

    if (*pr) {
      std::vector<Tree> train_trees = load_trees(pr_train);
      std::vector<Tree> test_trees = load_trees(pr_test);
      if (train_trees.empty() || test_trees.empty()) throw DataError("empty train or test treebank");
      fs::create_directories(pr_dir);
      std::vector<std::vector<std::string>> sentences;
      for (const Tree& t : test_trees) sentences.push_back(t.tokens());

      struct Row {
        std::string measure, loss;
        EvalResult eval;
        std::vector<Tree> pred;
      };
      std::vector<Row> rows = {{"0/1 (bin.)", "zeroone-bin", {}, {}},
                               {"#FP (bin.)", "fp-bin", {}, {}},
                               {"F1 (bin.)", "f1-bin", {}, {}},
                               {"F1", "f1", {}, {}}};
      nlohmann::json metrics = nlohmann::json::object();
      for (Row& row : rows) {
        TrainOptions o = pr_opts;
        o.loss = row.loss;
        Trained t = train_model(train_trees, o, threads, err);
        {
          std::ofstream m(fs::path(pr_dir) / (row.loss + ".model"));
          write_model(m, t.result.model);
        }
        save_json((fs::path(pr_dir) / (row.loss + ".report.json")).string(), t.result.report.to_json());
        int noparse = 0;
        row.pred = parse_all(t.result.model, sentences, threads, noparse);
        save_trees((fs::path(pr_dir) / (row.loss + ".pred")).string(), row.pred);
        row.eval = evaluate(row.pred, test_trees);
        metrics[row.loss] = row.eval.to_json();
        metrics[row.loss]["noparse"] = noparse;
      }
      save_json((fs::path(pr_dir) / "metrics.json").string(), metrics);

      std::ostringstream table;
      table << "Measure\tP\tR\tF1\t0/1 Acc\n" << std::fixed << std::setprecision(2);
      for (const Row& row : rows)
        table << row.measure << '\t' << 100 * row.eval.precision << '\t' << 100 * row.eval.recall
              << '\t' << 100 * row.eval.f1 << '\t' << 100 * row.eval.exact_match << '\n';
      {
        std::ofstream f(fs::path(pr_dir) / "table.tsv");
        f << table.str();
      }

      auto diffs_rows = loss_difference_export(rows[3].pred, rows[2].pred, test_trees);
      {
        std::ofstream f(fs::path(pr_dir) / "comparison.tsv");
        write_loss_difference_tsv(f, diffs_rows);
      }
      std::vector<double> diffs;
      for (const auto& r : diffs_rows) diffs.push_back(r.difference);
      nlohmann::json wilcoxon = wilcoxon_signed_rank(diffs).to_json();
      wilcoxon["comparison"] = "f1 vs f1-bin";
      save_json((fs::path(pr_dir) / "wilcoxon.json").string(), wilcoxon);

      out << table.str() << wilcoxon.dump(2) << '\n';
      return kOk;
    }
  } catch (const CLI::Error& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kUsage;
}

}  // namespace ssvmparse::cli
