#include "dce/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>

#include "CLI11.hpp"
#include "dce/data.hpp"
#include "dce/engine.hpp"
#include "dce/eval.hpp"
#include "json.hpp"

namespace dce {

namespace {

enum class LogLevel { quiet = 0, info = 1, debug = 2 };

LogLevel log_level() {
  const char* v = std::getenv("DIL_LOG");
  if (!v || std::string(v) == "info") return LogLevel::info;
  if (std::string(v) == "quiet") return LogLevel::quiet;
  if (std::string(v) == "debug") return LogLevel::debug;
  throw ConfigError("DIL_LOG must be one of quiet|info|debug");
}

// Config-file merge: values apply only where no flag was given, so the
// precedence is flags, then file, then defaults. Unknown keys are errors.
struct ConfigSchema {
  std::map<std::string, std::pair<bool, std::function<void(const nlohmann::json&)>>> keys;

  void add(const std::string& key, bool overridden,
           std::function<void(const nlohmann::json&)> apply) {
    keys[key] = {overridden, std::move(apply)};
  }

  void merge_file(const std::string& path) const {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config file: " + path);
    nlohmann::json j;
    try {
      is >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("invalid config json: " + std::string(e.what()));
    }
    if (!j.is_object()) throw ConfigError("config file must hold a json object");
    for (const auto& [key, value] : j.items()) {
      const auto it = keys.find(key);
      if (it == keys.end()) throw ConfigError("unknown config key: " + key);
      if (it->second.first) continue;  // flag wins
      try {
        it->second.second(value);
      } catch (const nlohmann::json::exception&) {
        throw ConfigError("invalid value for config key: " + key);
      }
    }
  }
};

void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream os(path);
  if (!os) throw Error("cannot open for write: " + path);
  os << text;
  if (!os) throw Error("write failed: " + path);
}

struct GenArgs {
  GenConfig cfg;
  std::string out_dir;
  std::string config_path;
};

int cmd_gen(const GenArgs& args, const CLI::App& sub, std::ostream& out, std::ostream& err) {
  GenConfig cfg = args.cfg;
  if (!args.config_path.empty()) {
    ConfigSchema schema;
    schema.add("domains", sub.count("--domains") > 0,
               [&](const nlohmann::json& v) { cfg.num_domains = v.get<int>(); });
    schema.add("classes", sub.count("--classes") > 0,
               [&](const nlohmann::json& v) { cfg.num_classes = v.get<int>(); });
    schema.add("dim", sub.count("--dim") > 0,
               [&](const nlohmann::json& v) { cfg.d = v.get<int>(); });
    schema.add("rho", sub.count("--rho") > 0,
               [&](const nlohmann::json& v) { cfg.rho = v.get<double>(); });
    schema.add("n_max", sub.count("--n-max") > 0,
               [&](const nlohmann::json& v) { cfg.n_max = v.get<int64_t>(); });
    schema.add("test_per_class", sub.count("--test-per-class") > 0,
               [&](const nlohmann::json& v) { cfg.test_per_class = v.get<int>(); });
    schema.add("noise_sigma", sub.count("--noise-sigma") > 0,
               [&](const nlohmann::json& v) { cfg.noise_sigma = v.get<double>(); });
    schema.add("drift_strength", sub.count("--drift-strength") > 0,
               [&](const nlohmann::json& v) { cfg.drift_strength = v.get<double>(); });
    schema.add("permute_frequencies", sub.count("--permute-frequencies") > 0,
               [&](const nlohmann::json& v) { cfg.permute_frequencies = v.get<bool>(); });
    schema.add("thresholds",
               sub.count("--t-low") > 0 || sub.count("--t-high") > 0,
               [&](const nlohmann::json& v) {
                 cfg.t_low = v.at(0).get<int64_t>();
                 cfg.t_high = v.at(1).get<int64_t>();
               });
    schema.add("seed", sub.count("--seed") > 0,
               [&](const nlohmann::json& v) { cfg.seed = v.get<uint64_t>(); });
    schema.merge_file(args.config_path);
  }
  validate(cfg);
  if (args.out_dir.empty()) throw ConfigError("gen requires --out");

  const TaskStream stream = generate_synthetic(cfg, args.out_dir);

  std::vector<int64_t> counts = stream.tasks.front().class_counts;
  std::sort(counts.begin(), counts.end(), std::greater<>());
  const double achieved =
      static_cast<double>(counts.front()) / static_cast<double>(counts.back());
  out << "wrote " << args.out_dir << ": domains=" << cfg.num_domains
      << " classes=" << cfg.num_classes << " dim=" << cfg.d << " counts=[";
  for (size_t i = 0; i < counts.size(); ++i) out << (i ? "," : "") << counts[i];
  out << "] achieved_rho=" << achieved << "\n";
  if (log_level() >= LogLevel::debug)
    err << "gen: " << stream.num_tasks() << " tasks, seed " << cfg.seed << "\n";
  return 0;
}

struct TrainArgs {
  std::string data;
  std::string method = "dce";
  uint64_t seed = 0;
  std::string out_path;
  std::string checkpoint;
  std::string csv_acc;
  std::string csv_cpd;
  std::string config_path;
  RunConfig run;
};

int cmd_train(TrainArgs& args, const CLI::App& sub, std::ostream& out, std::ostream& err) {
  if (!args.config_path.empty()) {
    ConfigSchema schema;
    schema.add("data", sub.count("--data") > 0,
               [&](const nlohmann::json& v) { args.data = v.get<std::string>(); });
    schema.add("method", sub.count("--method") > 0,
               [&](const nlohmann::json& v) { args.method = v.get<std::string>(); });
    schema.add("seed", sub.count("--seed") > 0,
               [&](const nlohmann::json& v) { args.seed = v.get<uint64_t>(); });
    schema.add("out", sub.count("--out") > 0,
               [&](const nlohmann::json& v) { args.out_path = v.get<std::string>(); });
    schema.add("checkpoint", sub.count("--checkpoint") > 0,
               [&](const nlohmann::json& v) { args.checkpoint = v.get<std::string>(); });
    schema.add("csv_acc", sub.count("--csv-acc") > 0,
               [&](const nlohmann::json& v) { args.csv_acc = v.get<std::string>(); });
    schema.add("csv_cpd", sub.count("--csv-cpd") > 0,
               [&](const nlohmann::json& v) { args.csv_cpd = v.get<std::string>(); });
    schema.add("alphas", sub.count("--alphas") > 0, [&](const nlohmann::json& v) {
      args.run.alphas = v.get<std::vector<int>>();
    });
    schema.add("k_per_pair", sub.count("--k-per-pair") > 0,
               [&](const nlohmann::json& v) { args.run.k_per_pair = v.get<int>(); });
    schema.add("cov_min_samples", sub.count("--cov-min-samples") > 0,
               [&](const nlohmann::json& v) { args.run.cov_min_samples = v.get<int64_t>(); });
    schema.add("selector_softmax", sub.count("--raw-fusion") > 0,
               [&](const nlohmann::json& v) { args.run.selector_softmax = v.get<bool>(); });
    schema.add("lr0", sub.count("--lr0") > 0,
               [&](const nlohmann::json& v) { args.run.train.lr0 = v.get<double>(); });
    schema.add("momentum", sub.count("--momentum") > 0,
               [&](const nlohmann::json& v) { args.run.train.momentum = v.get<double>(); });
    schema.add("batch_size", sub.count("--batch-size") > 0,
               [&](const nlohmann::json& v) { args.run.train.batch_size = v.get<int>(); });
    schema.add("epochs_stage1", sub.count("--epochs-stage1") > 0,
               [&](const nlohmann::json& v) { args.run.train.epochs_stage1 = v.get<int>(); });
    schema.add("epochs_stage2", sub.count("--epochs-stage2") > 0,
               [&](const nlohmann::json& v) { args.run.train.epochs_stage2 = v.get<int>(); });
    schema.merge_file(args.config_path);
  }

  if (args.data.empty()) throw ConfigError("train requires --data");
  if (args.method != "dce" && args.method != "shared" && args.method != "domain" &&
      args.method != "prototype")
    throw ConfigError("method must be one of dce|shared|domain|prototype");
  if (!args.checkpoint.empty() && args.method != "dce")
    throw ConfigError("checkpoint requires method dce");
  args.run.train.seed = args.seed;
  validate(args.run);

  const TaskStream stream = load_benchmark(args.data);
  RngState rng(args.seed);

  const LogLevel lvl = log_level();
  StageObserver observer = nullptr;
  if (lvl >= LogLevel::debug)
    observer = [&](const DceModel& m, int stage) {
      err << "task " << stage << ": pool=" << m.expert_pool.size() << "\n";
    };

  RunResult result;
  DceModel model;
  if (args.method == "dce") {
    result = run_dce(stream, args.run, rng, observer, &model);
  } else if (args.method == "shared") {
    result = run_shared_baseline(stream, args.run, rng);
  } else if (args.method == "domain") {
    result = run_domain_specific_baseline(stream, args.run, rng);
  } else {
    result = run_prototype_baseline(stream, args.run);
  }

  nlohmann::ordered_json cfg_echo;
  cfg_echo["data"] = args.data;
  cfg_echo["method"] = args.method;
  cfg_echo["alphas"] = args.run.alphas;
  cfg_echo["k_per_pair"] = args.run.k_per_pair;
  cfg_echo["cov_min_samples"] = args.run.cov_min_samples;
  cfg_echo["selector_softmax"] = args.run.selector_softmax;
  cfg_echo["lr0"] = args.run.train.lr0;
  cfg_echo["momentum"] = args.run.train.momentum;
  cfg_echo["batch_size"] = args.run.train.batch_size;
  cfg_echo["epochs_stage1"] = args.run.train.epochs_stage1;
  cfg_echo["epochs_stage2"] = args.run.train.epochs_stage2;
  cfg_echo["thresholds"] = {stream.t_low, stream.t_high};

  const nlohmann::ordered_json report =
      report_json(args.method, args.seed, cfg_echo, result.ledger);
  const std::string text = report.dump(2) + "\n";
  if (args.out_path.empty()) out << text;
  else write_text_file(args.out_path, text);

  if (!args.checkpoint.empty()) save_model(model, args.checkpoint);
  if (!args.csv_acc.empty()) write_text_file(args.csv_acc, csv_accuracy_matrix(result.ledger));
  if (!args.csv_cpd.empty()) write_text_file(args.csv_cpd, csv_cpd_table(result.ledger));

  if (lvl >= LogLevel::info) {
    err << args.method << " seed=" << args.seed << " A_B=" << final_accuracy(result.ledger)
        << " A_bar=" << mean_accuracy(result.ledger) << "\n";
  }
  return 0;
}

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string format = "text";
  std::string out_path;
  std::string config_path;
};

struct MethodAgg {
  std::string method;
  std::vector<double> a_bar, a_b;
  std::vector<double> a_many, a_med, a_few;  // nulls skipped
};

std::pair<double, double> mean_std(const std::vector<double>& v) {
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - mean) * (x - mean);
  var /= static_cast<double>(v.size());
  return {mean, std::sqrt(var)};
}

int cmd_report(ReportArgs& args, const CLI::App& sub, std::ostream& out, std::ostream&) {
  if (!args.config_path.empty()) {
    ConfigSchema schema;
    schema.add("inputs", sub.count("inputs") > 0, [&](const nlohmann::json& v) {
      args.inputs = v.get<std::vector<std::string>>();
    });
    schema.add("format", sub.count("--format") > 0,
               [&](const nlohmann::json& v) { args.format = v.get<std::string>(); });
    schema.add("out", sub.count("--out") > 0,
               [&](const nlohmann::json& v) { args.out_path = v.get<std::string>(); });
    schema.merge_file(args.config_path);
  }
  if (args.inputs.empty()) throw ConfigError("report requires at least one input report");
  if (args.format != "text" && args.format != "csv")
    throw ConfigError("format must be text or csv");

  std::vector<MethodAgg> rows;
  for (const auto& path : args.inputs) {
    std::ifstream is(path);
    if (!is) throw Error("cannot open report: " + path);
    nlohmann::json j;
    try {
      is >> j;
    } catch (const nlohmann::json::exception&) {
      throw ConfigError("schema mismatch in " + path);
    }
    for (const char* key : {"method", "seed", "stages", "A_bar", "A_B"})
      if (!j.contains(key)) throw ConfigError("schema mismatch in " + path);

    const std::string method = j["method"].get<std::string>();
    auto it = std::find_if(rows.begin(), rows.end(),
                           [&](const MethodAgg& r) { return r.method == method; });
    if (it == rows.end()) {
      rows.push_back(MethodAgg{method, {}, {}, {}, {}, {}});
      it = std::prev(rows.end());
    }
    it->a_bar.push_back(j["A_bar"].get<double>());
    it->a_b.push_back(j["A_B"].get<double>());
    auto push_opt = [&](const char* key, std::vector<double>& dst) {
      if (j.contains(key) && !j[key].is_null()) dst.push_back(j[key].get<double>());
    };
    push_opt("A_many", it->a_many);
    push_opt("A_med", it->a_med);
    push_opt("A_few", it->a_few);
  }

  std::ostringstream os;
  if (args.format == "csv") {
    os << "method,runs,A_bar_mean,A_bar_std,A_B_mean,A_B_std,A_many_mean,A_many_std,"
          "A_med_mean,A_med_std,A_few_mean,A_few_std\n";
    os << std::setprecision(17);
    for (const auto& r : rows) {
      os << r.method << ',' << r.a_bar.size();
      auto cell = [&](const std::vector<double>& v) {
        if (v.empty()) {
          os << ",,";
          return;
        }
        const auto [m, s] = mean_std(v);
        os << ',' << m << ',' << s;
      };
      cell(r.a_bar);
      cell(r.a_b);
      cell(r.a_many);
      cell(r.a_med);
      cell(r.a_few);
      os << "\n";
    }
  } else {
    os << std::left << std::setw(12) << "method" << std::setw(6) << "runs";
    for (const char* h : {"A_bar", "A_B", "A_many", "A_med", "A_few"})
      os << std::setw(18) << h;
    os << "\n";
    os << std::fixed << std::setprecision(4);
    for (const auto& r : rows) {
      os << std::setw(12) << r.method << std::setw(6) << r.a_bar.size();
      auto cell = [&](const std::vector<double>& v) {
        if (v.empty()) {
          os << std::setw(18) << "-";
          return;
        }
        const auto [m, s] = mean_std(v);
        std::ostringstream c;
        c << std::fixed << std::setprecision(4) << m << " +/- " << s;
        os << std::setw(18) << c.str();
      };
      cell(r.a_bar);
      cell(r.a_b);
      cell(r.a_many);
      cell(r.a_med);
      cell(r.a_few);
      os << "\n";
    }
  }

  if (args.out_path.empty()) out << os.str();
  else write_text_file(args.out_path, os.str());
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"dual-balance collaborative experts for imbalanced domain-incremental learning"};
  app.name("dce");
  app.require_subcommand(1);

  GenArgs gen;
  CLI::App* sub_gen = app.add_subcommand("gen", "generate a synthetic benchmark directory");
  sub_gen->add_option("--out", gen.out_dir, "output directory");
  sub_gen->add_option("--domains", gen.cfg.num_domains, "number of domains");
  sub_gen->add_option("--classes", gen.cfg.num_classes, "number of classes");
  sub_gen->add_option("--dim", gen.cfg.d, "feature dimension");
  sub_gen->add_option("--rho", gen.cfg.rho, "imbalance ratio n_max/n_min");
  sub_gen->add_option("--n-max", gen.cfg.n_max, "samples of the most frequent class");
  sub_gen->add_option("--test-per-class", gen.cfg.test_per_class, "balanced test samples");
  sub_gen->add_option("--noise-sigma", gen.cfg.noise_sigma, "within-class noise");
  sub_gen->add_option("--drift-strength", gen.cfg.drift_strength, "domain drift scale");
  sub_gen->add_option("--permute-frequencies", gen.cfg.permute_frequencies,
                      "redraw frequency ranks per domain");
  sub_gen->add_option("--t-low", gen.cfg.t_low, "few/medium threshold");
  sub_gen->add_option("--t-high", gen.cfg.t_high, "medium/many threshold");
  sub_gen->add_option("--seed", gen.cfg.seed, "generator seed");
  sub_gen->add_option("--config", gen.config_path, "json config file");

  TrainArgs train;
  CLI::App* sub_train = app.add_subcommand("train", "run a method over a benchmark");
  sub_train->add_option("--data", train.data, "benchmark manifest.json");
  sub_train->add_option("--method", train.method, "dce|shared|domain|prototype");
  sub_train->add_option("--seed", train.seed, "run seed");
  sub_train->add_option("--out", train.out_path, "report json path (stdout if omitted)");
  sub_train->add_option("--checkpoint", train.checkpoint, "checkpoint path prefix");
  sub_train->add_option("--csv-acc", train.csv_acc, "per-class accuracy csv path");
  sub_train->add_option("--csv-cpd", train.csv_cpd, "per-class drift csv path");
  sub_train->add_option("--alphas", train.run.alphas, "adjustment exponents")->delimiter(',');
  sub_train->add_option("--k-per-pair", train.run.k_per_pair, "synthetic samples per pair");
  sub_train->add_option("--cov-min-samples", train.run.cov_min_samples,
                        "min class size for covariance");
  sub_train->add_flag_callback(
      "--raw-fusion", [&train] { train.run.selector_softmax = false; },
      "fuse with raw selector outputs instead of softmax weights");
  sub_train->add_option("--lr0", train.run.train.lr0, "initial learning rate");
  sub_train->add_option("--momentum", train.run.train.momentum, "sgd momentum");
  sub_train->add_option("--batch-size", train.run.train.batch_size, "minibatch size");
  sub_train->add_option("--epochs-stage1", train.run.train.epochs_stage1, "expert epochs");
  sub_train->add_option("--epochs-stage2", train.run.train.epochs_stage2, "selector epochs");
  sub_train->add_option("--config", train.config_path, "json config file");

  ReportArgs report;
  CLI::App* sub_report = app.add_subcommand("report", "aggregate run reports");
  sub_report->add_option("inputs", report.inputs, "report json files");
  sub_report->add_option("--format", report.format, "text|csv");
  sub_report->add_option("--out", report.out_path, "output path (stdout if omitted)");
  sub_report->add_option("--config", report.config_path, "json config file");

  std::vector<const char*> argv;
  argv.push_back("dce");
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    log_level();  // reject a malformed DIL_LOG before doing any work
    app.parse(static_cast<int>(argv.size()), argv.data());
    if (sub_gen->parsed()) return cmd_gen(gen, *sub_gen, out, err);
    if (sub_train->parsed()) return cmd_train(train, *sub_train, out, err);
    return cmd_report(report, *sub_report, out, err);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      out << app.help();
      return 0;
    }
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace dce
