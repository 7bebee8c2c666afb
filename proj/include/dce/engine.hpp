#pragma once

#include <functional>
#include <string>
#include <vector>

#include "dce/data.hpp"
#include "dce/eval.hpp"
#include "dce/model.hpp"
#include "dce/stats.hpp"

namespace dce {

struct RunConfig {
  TrainConfig train;
  std::vector<int> alphas = {0, 1, 2};
  int k_per_pair = 256;
  int64_t cov_min_samples = 10;
  bool selector_softmax = true;
};

void validate(const RunConfig& cfg);

struct SyntheticProvenance {
  int domain = 0;
  int cls = 0;
  int k = 0;
};

// Balanced pseudo-feature set: k_per_pair draws from N(mean, sigma_bar of
// the domain) for every stored (domain, class) pair.
struct SyntheticSet {
  FeatureSet data;
  std::vector<SyntheticProvenance> provenance;
};

struct DceModel {
  std::vector<Expert> expert_pool;
  Selector selector;
  StatsRepo repo;
  RunConfig config;
};

struct RunResult {
  std::string method;
  MetricsLedger ledger;
};

// Draws K samples per stored (domain, class), iterating domains in repo
// order and classes ascending within each domain.
SyntheticSet build_synthetic_set(const StatsRepo& repo, int k_per_pair, RngState& rng);

// Mixture of frozen expert logits under selector weights.
Vector fuse_logits(const Vector& x, const std::vector<Expert>& pool, const Selector& selector,
                   bool softmax_fusion = true);
int fuse_predict(const Vector& x, const std::vector<Expert>& pool, const Selector& selector,
                 bool softmax_fusion = true);

// Called after each completed task; used to observe intermediate state.
using StageObserver = std::function<void(const DceModel&, int stage)>;

// Per task: train one expert per alpha, fold the task's class statistics
// into the repository, rebuild the balanced synthetic set, retrain the
// selector from scratch, then evaluate on all seen test sets.
RunResult run_dce(const TaskStream& stream, const RunConfig& cfg, RngState& rng,
                  const StageObserver& observer = nullptr, DceModel* out_model = nullptr);

// One head fine-tuned sequentially across tasks in a shared parameter space.
RunResult run_shared_baseline(const TaskStream& stream, const RunConfig& cfg, RngState& rng);

// One head per task plus a domain centroid; at test time the expert of the
// nearest centroid answers alone.
RunResult run_domain_specific_baseline(const TaskStream& stream, const RunConfig& cfg,
                                       RngState& rng);

// Running per-class mean over all seen domains, cosine-similarity argmax,
// no trained parameters.
RunResult run_prototype_baseline(const TaskStream& stream, const RunConfig& cfg);

// Checkpoint: <prefix>.model.json index, <prefix>.model.bin parameters, and
// <prefix>.repo.{json,bin} statistics, all bit-exact on round-trip.
void save_model(const DceModel& model, const std::string& path_prefix);
DceModel load_model(const std::string& path_prefix);

}  // namespace dce
