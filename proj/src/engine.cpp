#include "dce/engine.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>

#include "dce/binio.hpp"
#include "json.hpp"

namespace dce {

void validate(const RunConfig& cfg) {
  validate(cfg.train);
  if (cfg.alphas.empty()) throw ConfigError("alphas must be non-empty");
  for (int a : cfg.alphas)
    if (a < 0) throw ConfigError("alphas must be >= 0");
  if (cfg.k_per_pair < 1) throw ConfigError("k_per_pair must be >= 1");
  if (cfg.cov_min_samples < 2) throw ConfigError("cov_min_samples must be >= 2");
}

namespace {

int argmax_lowest(const Vector& v) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(v.size()); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

}  // namespace

SyntheticSet build_synthetic_set(const StatsRepo& repo, int k_per_pair, RngState& rng) {
  if (repo.gaussians.empty()) throw Error("build_synthetic_set: empty statistics repository");
  if (k_per_pair < 1) throw Error("build_synthetic_set: k_per_pair must be >= 1");

  SyntheticSet out;
  out.data.d = repo.d;
  out.data.num_classes = repo.num_classes;

  int current_domain = -1;
  Matrix chol(0, 0);
  for (const auto& g : repo.gaussians) {
    if (g.domain != current_domain) {
      current_domain = g.domain;
      chol = cholesky_factor(repo.domain_cov(current_domain).sigma_bar).l;
    }
    for (int k = 0; k < k_per_pair; ++k) {
      FeatureRecord r;
      r.label = g.cls;
      r.features = sample_mvn(g.mean, chol, rng);
      out.data.records.push_back(std::move(r));
    }
    out.provenance.push_back({g.domain, g.cls, k_per_pair});
  }
  return out;
}

Vector fuse_logits(const Vector& x, const std::vector<Expert>& pool, const Selector& selector,
                   bool softmax_fusion) {
  if (pool.empty()) throw Error("fuse_logits: empty expert pool");
  const Vector u = mlp_forward(selector.params, x);
  if (u.size() != pool.size()) throw Error("fuse_logits: selector dimension mismatch");
  const Vector w = softmax_fusion ? stable_softmax(u) : u;

  Vector fused(pool.front().params.out_dim(), 0.0);
  for (size_t i = 0; i < pool.size(); ++i) {
    const Vector v = mlp_forward(pool[i].params, x);
    for (size_t j = 0; j < fused.size(); ++j) fused[j] += w[i] * v[j];
  }
  return fused;
}

int fuse_predict(const Vector& x, const std::vector<Expert>& pool, const Selector& selector,
                 bool softmax_fusion) {
  return argmax_lowest(fuse_logits(x, pool, selector, softmax_fusion));
}

RunResult run_dce(const TaskStream& stream, const RunConfig& cfg, RngState& rng,
                  const StageObserver& observer, DceModel* out_model) {
  validate(cfg);
  if (stream.tasks.empty()) throw Error("run_dce: empty task stream");

  DceModel model;
  model.config = cfg;
  model.repo.d = stream.d;
  model.repo.num_classes = stream.num_classes;

  RunResult result;
  result.method = "dce";
  result.ledger.t_low = stream.t_low;
  result.ledger.t_high = stream.t_high;

  for (int b = 1; b <= stream.num_tasks(); ++b) {
    const DomainTask& task = stream.tasks[b - 1];

    std::vector<Expert> experts = train_expert_group(task, cfg.train, cfg.alphas, rng);
    for (auto& e : experts) model.expert_pool.push_back(std::move(e));

    merge_repo(model.repo, build_domain_stats(task, cfg.cov_min_samples));
    const SyntheticSet synth = build_synthetic_set(model.repo, cfg.k_per_pair, rng);
    model.selector =
        train_selector(synth.data, model.expert_pool, cfg.train, rng, cfg.selector_softmax);

    result.ledger.groups.push_back(
        frequency_groups(task.train.label_counts(), stream.t_low, stream.t_high));
    const auto predict = [&](const Vector& x) {
      return fuse_predict(x, model.expert_pool, model.selector, cfg.selector_softmax);
    };
    result.ledger.snapshots.push_back(evaluate_snapshot(predict, stream, b));
    if (observer) observer(model, b);
  }

  if (out_model) *out_model = std::move(model);
  return result;
}

RunResult run_shared_baseline(const TaskStream& stream, const RunConfig& cfg, RngState& rng) {
  validate(cfg);
  if (stream.tasks.empty()) throw Error("run_shared_baseline: empty task stream");

  RunResult result;
  result.method = "shared";
  result.ledger.t_low = stream.t_low;
  result.ledger.t_high = stream.t_high;

  const int d = stream.d;
  MlpParams params = init_mlp(rng, d, d / 2, stream.num_classes);
  const Vector no_adjustment(stream.num_classes, 0.0);

  for (int b = 1; b <= stream.num_tasks(); ++b) {
    const DomainTask& task = stream.tasks[b - 1];
    train_inplace(params, task.train, no_adjustment, cfg.train, cfg.train.epochs_stage1, rng);
    result.ledger.groups.push_back(
        frequency_groups(task.train.label_counts(), stream.t_low, stream.t_high));
    const auto predict = [&](const Vector& x) { return argmax_lowest(mlp_forward(params, x)); };
    result.ledger.snapshots.push_back(evaluate_snapshot(predict, stream, b));
  }
  return result;
}

RunResult run_domain_specific_baseline(const TaskStream& stream, const RunConfig& cfg,
                                       RngState& rng) {
  validate(cfg);
  if (stream.tasks.empty()) throw Error("run_domain_specific_baseline: empty task stream");

  RunResult result;
  result.method = "domain";
  result.ledger.t_low = stream.t_low;
  result.ledger.t_high = stream.t_high;

  std::vector<Expert> experts;
  std::vector<Vector> centroids;

  for (int b = 1; b <= stream.num_tasks(); ++b) {
    const DomainTask& task = stream.tasks[b - 1];
    std::vector<Expert> group = train_expert_group(task, cfg.train, {0}, rng);
    experts.push_back(std::move(group.front()));

    Vector centroid(stream.d, 0.0);
    for (const auto& r : task.train.records)
      for (int i = 0; i < stream.d; ++i) centroid[i] += r.features[i];
    for (double& v : centroid) v /= static_cast<double>(task.train.records.size());
    centroids.push_back(std::move(centroid));

    result.ledger.groups.push_back(
        frequency_groups(task.train.label_counts(), stream.t_low, stream.t_high));
    const auto predict = [&](const Vector& x) {
      int best = 0;
      double best_dist = std::numeric_limits<double>::infinity();
      for (size_t i = 0; i < centroids.size(); ++i) {
        double dist = 0.0;
        for (int j = 0; j < stream.d; ++j) {
          const double diff = x[j] - centroids[i][j];
          dist += diff * diff;
        }
        if (dist < best_dist) {
          best_dist = dist;
          best = static_cast<int>(i);
        }
      }
      return argmax_lowest(mlp_forward(experts[best].params, x));
    };
    result.ledger.snapshots.push_back(evaluate_snapshot(predict, stream, b));
  }
  return result;
}

RunResult run_prototype_baseline(const TaskStream& stream, const RunConfig& cfg) {
  validate(cfg);
  if (stream.tasks.empty()) throw Error("run_prototype_baseline: empty task stream");

  RunResult result;
  result.method = "prototype";
  result.ledger.t_low = stream.t_low;
  result.ledger.t_high = stream.t_high;

  const int c = stream.num_classes;
  std::vector<Vector> sums(c, Vector(stream.d, 0.0));
  std::vector<int64_t> counts(c, 0);

  for (int b = 1; b <= stream.num_tasks(); ++b) {
    const DomainTask& task = stream.tasks[b - 1];
    for (const auto& r : task.train.records) {
      counts[r.label]++;
      for (int i = 0; i < stream.d; ++i) sums[r.label][i] += r.features[i];
    }

    std::vector<Vector> protos(c);
    std::vector<double> proto_norms(c, 0.0);
    for (int cls = 0; cls < c; ++cls) {
      if (counts[cls] == 0) continue;
      protos[cls].resize(stream.d);
      double norm = 0.0;
      for (int i = 0; i < stream.d; ++i) {
        protos[cls][i] = sums[cls][i] / static_cast<double>(counts[cls]);
        norm += protos[cls][i] * protos[cls][i];
      }
      proto_norms[cls] = std::sqrt(norm);
    }

    result.ledger.groups.push_back(
        frequency_groups(task.train.label_counts(), stream.t_low, stream.t_high));
    const auto predict = [&, protos, proto_norms](const Vector& x) {
      double x_norm = 0.0;
      for (double v : x) x_norm += v * v;
      x_norm = std::sqrt(x_norm);
      int best = -1;
      double best_sim = -std::numeric_limits<double>::infinity();
      for (int cls = 0; cls < c; ++cls) {
        if (protos[cls].empty()) continue;
        double dot = 0.0;
        for (int i = 0; i < stream.d; ++i) dot += x[i] * protos[cls][i];
        const double denom = std::max(x_norm * proto_norms[cls], 1e-300);
        const double sim = dot / denom;
        if (sim > best_sim) {
          best_sim = sim;
          best = cls;
        }
      }
      return best;
    };
    result.ledger.snapshots.push_back(evaluate_snapshot(predict, stream, b));
  }
  return result;
}

void save_model(const DceModel& model, const std::string& path_prefix) {
  nlohmann::ordered_json meta;
  meta["d"] = model.repo.d;
  meta["num_classes"] = model.repo.num_classes;
  meta["selector_softmax"] = model.config.selector_softmax;
  meta["experts"] = nlohmann::ordered_json::array();
  for (const auto& e : model.expert_pool)
    meta["experts"].push_back({{"task", e.task}, {"alpha", e.alpha}});
  meta["selector_dim"] = model.selector.params.out_dim();

  std::ofstream mf(path_prefix + ".model.json");
  if (!mf) throw Error("cannot write " + path_prefix + ".model.json");
  mf << meta.dump(2) << "\n";

  std::ofstream bf(path_prefix + ".model.bin", std::ios::binary);
  if (!bf) throw Error("cannot write " + path_prefix + ".model.bin");
  for (const auto& e : model.expert_pool) {
    binio::put_u32(bf, static_cast<uint32_t>(e.prior.num_classes()));
    for (double v : e.prior.p) binio::put_f64(bf, v);
    for (uint8_t v : e.prior.present) bf.put(static_cast<char>(v));
    write_params(bf, e.params);
  }
  write_params(bf, model.selector.params);
  if (!bf) throw Error("write failed: " + path_prefix + ".model.bin");

  save_repo(model.repo, path_prefix + ".repo");
}

DceModel load_model(const std::string& path_prefix) {
  std::ifstream mf(path_prefix + ".model.json");
  if (!mf) throw Error("cannot open " + path_prefix + ".model.json");
  nlohmann::json meta;
  try {
    mf >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid model json: " + std::string(e.what()));
  }

  DceModel model;
  model.config.selector_softmax = meta.at("selector_softmax").get<bool>();

  std::ifstream bf(path_prefix + ".model.bin", std::ios::binary);
  if (!bf) throw Error("cannot open " + path_prefix + ".model.bin");

  for (const auto& je : meta.at("experts")) {
    Expert e;
    e.task = je.at("task").get<int>();
    e.alpha = je.at("alpha").get<int>();
    uint32_t c = 0;
    if (!binio::get_u32(bf, c)) throw Error("truncated model file");
    e.prior.p.resize(c);
    e.prior.present.resize(c);
    e.prior.log_p.assign(c, -std::numeric_limits<double>::infinity());
    for (double& v : e.prior.p)
      if (!binio::get_f64(bf, v)) throw Error("truncated model file");
    for (uint8_t& v : e.prior.present) {
      int ch = bf.get();
      if (ch < 0) throw Error("truncated model file");
      v = static_cast<uint8_t>(ch);
    }
    for (uint32_t i = 0; i < c; ++i)
      if (e.prior.present[i]) e.prior.log_p[i] = std::log(e.prior.p[i]);
    e.params = read_params(bf);
    model.expert_pool.push_back(std::move(e));
  }
  model.selector.params = read_params(bf);
  model.repo = load_repo(path_prefix + ".repo");
  return model;
}

}  // namespace dce
