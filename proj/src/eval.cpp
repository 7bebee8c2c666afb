#include "dce/eval.hpp"

#include <cmath>
#include <sstream>

namespace dce {

std::optional<double> EvalSnapshot::acc_of(int domain, int cls) const {
  for (const auto& p : per_class)
    if (p.domain == domain && p.cls == cls) return p.acc;
  return std::nullopt;
}

FreqGroup MetricsLedger::group_of(int domain, int cls) const {
  if (domain < 1 || domain > static_cast<int>(groups.size()))
    throw Error("group_of: unknown domain " + std::to_string(domain));
  const auto& g = groups[domain - 1];
  if (cls < 0 || cls >= static_cast<int>(g.size()))
    throw Error("group_of: class out of range");
  return g[cls];
}

EvalSnapshot evaluate_snapshot(const PredictFn& predict, const TaskStream& stream, int stage) {
  if (stage < 1 || stage > stream.num_tasks()) throw Error("evaluate_snapshot: bad stage");

  EvalSnapshot snap;
  snap.stage = stage;
  int64_t correct_all = 0;
  int64_t total_all = 0;
  for (int b = 1; b <= stage; ++b) {
    const DomainTask& task = stream.tasks[b - 1];
    std::vector<int64_t> correct(task.test.num_classes, 0);
    std::vector<int64_t> total(task.test.num_classes, 0);
    for (const auto& r : task.test.records) {
      const int pred = predict(r.features);
      total[r.label]++;
      if (pred == r.label) correct[r.label]++;
    }
    for (int c = 0; c < task.test.num_classes; ++c) {
      if (total[c] == 0) continue;
      PairAcc p;
      p.domain = b;
      p.cls = c;
      p.correct = correct[c];
      p.total = total[c];
      p.acc = static_cast<double>(correct[c]) / static_cast<double>(total[c]);
      snap.per_class.push_back(p);
      correct_all += correct[c];
      total_all += total[c];
    }
  }
  if (total_all == 0) throw Error("evaluate_snapshot: no test data");
  snap.pooled = static_cast<double>(correct_all) / static_cast<double>(total_all);
  return snap;
}

namespace {

const EvalSnapshot& final_snapshot(const MetricsLedger& ledger) {
  if (ledger.snapshots.empty()) throw Error("metrics ledger has no snapshots");
  return ledger.snapshots.back();
}

}  // namespace

GroupAccuracy group_accuracy(const MetricsLedger& ledger) {
  const EvalSnapshot& snap = final_snapshot(ledger);
  double sum[3] = {0, 0, 0};
  int64_t cnt[3] = {0, 0, 0};
  for (const auto& p : snap.per_class) {
    const FreqGroup g = ledger.group_of(p.domain, p.cls);
    if (g == FreqGroup::absent) continue;
    const int k = g == FreqGroup::many ? 0 : g == FreqGroup::medium ? 1 : 2;
    sum[k] += p.acc;
    cnt[k]++;
  }
  GroupAccuracy out;
  if (cnt[0] > 0) out.many = sum[0] / static_cast<double>(cnt[0]);
  if (cnt[1] > 0) out.medium = sum[1] / static_cast<double>(cnt[1]);
  if (cnt[2] > 0) out.few = sum[2] / static_cast<double>(cnt[2]);
  return out;
}

double cpd(const MetricsLedger& ledger, int domain, int cls) {
  if (domain < 1 || domain > ledger.num_stages()) throw Error("cpd: no snapshot for domain");
  const auto own = ledger.snapshots[domain - 1].acc_of(domain, cls);
  const auto fin = final_snapshot(ledger).acc_of(domain, cls);
  if (!own || !fin) throw Error("cpd: class not evaluated for domain");
  return *own - *fin;
}

CpdSummary cpd_summary(const MetricsLedger& ledger) {
  const int stages = ledger.num_stages();
  std::vector<double> vals[4];  // many, medium, few, overall
  for (int b = 1; b < stages; ++b) {
    for (const auto& p : ledger.snapshots[b - 1].per_class) {
      if (p.domain != b) continue;
      const FreqGroup g = ledger.group_of(p.domain, p.cls);
      if (g == FreqGroup::absent) continue;
      if (!final_snapshot(ledger).acc_of(p.domain, p.cls)) continue;
      const double v = cpd(ledger, p.domain, p.cls);
      const int k = g == FreqGroup::many ? 0 : g == FreqGroup::medium ? 1 : 2;
      vals[k].push_back(v);
      vals[3].push_back(v);
    }
  }

  auto stats = [](const std::vector<double>& v) {
    CpdStats s;
    s.count = static_cast<int64_t>(v.size());
    if (v.empty()) return s;
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    for (double x : v) s.var += (x - s.mean) * (x - s.mean);
    s.var /= static_cast<double>(v.size());
    return s;
  };

  CpdSummary out;
  out.many = stats(vals[0]);
  out.medium = stats(vals[1]);
  out.few = stats(vals[2]);
  out.overall = stats(vals[3]);
  return out;
}

double final_accuracy(const MetricsLedger& ledger) { return final_snapshot(ledger).pooled; }

double mean_accuracy(const MetricsLedger& ledger) {
  if (ledger.snapshots.empty()) throw Error("metrics ledger has no snapshots");
  double sum = 0.0;
  for (const auto& s : ledger.snapshots) sum += s.pooled;
  return sum / static_cast<double>(ledger.snapshots.size());
}

nlohmann::ordered_json report_json(const std::string& method, uint64_t seed,
                                   const nlohmann::ordered_json& config,
                                   const MetricsLedger& ledger) {
  nlohmann::ordered_json j;
  j["method"] = method;
  j["seed"] = seed;
  j["config"] = config;
  j["stages"] = nlohmann::ordered_json::array();
  for (const auto& s : ledger.snapshots) {
    nlohmann::ordered_json js;
    js["b"] = s.stage;
    js["A_b"] = s.pooled;
    js["per_class"] = nlohmann::ordered_json::array();
    for (const auto& p : s.per_class)
      js["per_class"].push_back({{"domain", p.domain},
                                 {"class", p.cls},
                                 {"correct", p.correct},
                                 {"total", p.total},
                                 {"acc", p.acc}});
    j["stages"].push_back(std::move(js));
  }
  j["A_bar"] = mean_accuracy(ledger);
  j["A_B"] = final_accuracy(ledger);
  const GroupAccuracy ga = group_accuracy(ledger);
  j["A_many"] = ga.many ? nlohmann::ordered_json(*ga.many) : nlohmann::ordered_json(nullptr);
  j["A_med"] = ga.medium ? nlohmann::ordered_json(*ga.medium) : nlohmann::ordered_json(nullptr);
  j["A_few"] = ga.few ? nlohmann::ordered_json(*ga.few) : nlohmann::ordered_json(nullptr);

  const CpdSummary cs = cpd_summary(ledger);
  auto group_json = [](const CpdStats& s) {
    nlohmann::ordered_json g;
    if (s.count > 0) {
      g["mean"] = s.mean;
      g["var"] = s.var;
    } else {
      g["mean"] = nullptr;
      g["var"] = nullptr;
    }
    g["count"] = s.count;
    return g;
  };
  j["cpd"] = {{"many", group_json(cs.many)},
              {"medium", group_json(cs.medium)},
              {"few", group_json(cs.few)},
              {"overall", group_json(cs.overall)}};
  return j;
}

std::string csv_accuracy_matrix(const MetricsLedger& ledger) {
  std::ostringstream os;
  os << "stage,domain,class,group,correct,total,acc\n";
  os.precision(17);
  for (const auto& s : ledger.snapshots)
    for (const auto& p : s.per_class)
      os << s.stage << ',' << p.domain << ',' << p.cls << ','
         << freq_group_name(ledger.group_of(p.domain, p.cls)) << ',' << p.correct << ','
         << p.total << ',' << p.acc << "\n";
  return os.str();
}

std::string csv_cpd_table(const MetricsLedger& ledger) {
  std::ostringstream os;
  os << "domain,class,group,cpd\n";
  os.precision(17);
  const int stages = ledger.num_stages();
  for (int b = 1; b < stages; ++b) {
    for (const auto& p : ledger.snapshots[b - 1].per_class) {
      if (p.domain != b) continue;
      const FreqGroup g = ledger.group_of(p.domain, p.cls);
      if (g == FreqGroup::absent) continue;
      if (!ledger.snapshots.back().acc_of(p.domain, p.cls)) continue;
      os << p.domain << ',' << p.cls << ',' << freq_group_name(g) << ','
         << cpd(ledger, p.domain, p.cls) << "\n";
    }
  }
  return os.str();
}

}  // namespace dce
