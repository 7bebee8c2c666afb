#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dce/data.hpp"
#include "dce/numerics.hpp"
#include "json.hpp"

namespace dce {

using PredictFn = std::function<int(const Vector&)>;

struct PairAcc {
  int domain = 0;
  int cls = 0;
  int64_t correct = 0;
  int64_t total = 0;
  double acc = 0.0;
};

// Accuracies measured right after training stage b: one entry per class
// present in the test set of each domain 1..b, plus the pooled accuracy
// over the union of those test sets.
struct EvalSnapshot {
  int stage = 0;
  std::vector<PairAcc> per_class;
  double pooled = 0.0;

  std::optional<double> acc_of(int domain, int cls) const;
};

// Everything the final metrics derive from: one snapshot per stage and the
// frequency group of each (domain, class) pair, fixed from that domain's
// training counts when the domain was trained.
struct MetricsLedger {
  int64_t t_low = 0;
  int64_t t_high = 0;
  std::vector<EvalSnapshot> snapshots;
  std::vector<std::vector<FreqGroup>> groups;  // groups[b-1][c]

  int num_stages() const { return static_cast<int>(snapshots.size()); }
  FreqGroup group_of(int domain, int cls) const;
};

struct GroupAccuracy {
  std::optional<double> many;
  std::optional<double> medium;
  std::optional<double> few;
};

struct CpdStats {
  int64_t count = 0;
  double mean = 0.0;
  double var = 0.0;  // population variance
};

struct CpdSummary {
  CpdStats many;
  CpdStats medium;
  CpdStats few;
  CpdStats overall;
};

EvalSnapshot evaluate_snapshot(const PredictFn& predict, const TaskStream& stream, int stage);

// Unweighted mean of final per-(domain, class) accuracies within each
// frequency group; empty groups stay unset rather than zero.
GroupAccuracy group_accuracy(const MetricsLedger& ledger);

// Accuracy drift of (domain, class) between its own stage and the final
// stage: positive values mean the class got worse after later tasks.
double cpd(const MetricsLedger& ledger, int domain, int cls);

// Aggregates cpd over every (domain < B, class) pair by frequency group;
// overall covers the union of the three groups.
CpdSummary cpd_summary(const MetricsLedger& ledger);

double final_accuracy(const MetricsLedger& ledger);  // A_B
double mean_accuracy(const MetricsLedger& ledger);   // mean over stages

nlohmann::ordered_json report_json(const std::string& method, uint64_t seed,
                                   const nlohmann::ordered_json& config,
                                   const MetricsLedger& ledger);

std::string csv_accuracy_matrix(const MetricsLedger& ledger);
std::string csv_cpd_table(const MetricsLedger& ledger);

}  // namespace dce
