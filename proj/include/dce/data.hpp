#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "dce/losses.hpp"
#include "dce/numerics.hpp"

namespace dce {

struct FeatureRecord {
  int label = 0;
  Vector features;
};

struct FeatureSet {
  int d = 0;
  int num_classes = 0;
  std::vector<FeatureRecord> records;

  size_t size() const { return records.size(); }
  std::vector<int64_t> label_counts() const;
};

struct DomainTask {
  int index = 0;  // 1-based position in the stream
  std::string name;
  FeatureSet train;
  FeatureSet test;  // class-balanced
  std::vector<int64_t> class_counts;
};

struct TaskStream {
  int d = 0;
  int num_classes = 0;
  int64_t t_low = 20;
  int64_t t_high = 100;
  std::vector<DomainTask> tasks;

  int num_tasks() const { return static_cast<int>(tasks.size()); }
};

/// Synthetic imbalanced-DIL benchmark knobs. Per-class train counts follow
/// n_c = round(n_max * rho^(-rank/(C-1))); which classes sit at which rank
/// is re-drawn per domain when permute_frequencies is set.
struct GenConfig {
  int num_domains = 3;
  int num_classes = 20;
  int d = 16;
  double rho = 100.0;  // N_max / N_min
  int64_t n_max = 1000;
  int test_per_class = 50;
  double noise_sigma = 1.0;
  double drift_strength = 0.1;
  bool permute_frequencies = true;
  int64_t t_low = 20;
  int64_t t_high = 100;
  uint64_t seed = 0;
};

enum class FreqGroup { absent, few, medium, many };

const char* freq_group_name(FreqGroup g);

/// Normalize per-class counts into a ClassPrior; zero-count classes are
/// flagged absent. Throws when every count is zero.
ClassPrior class_prior(const std::vector<int64_t>& counts);

/// many/medium/few grouping against (t_low, t_high]: n <= t_low is few
/// (when n > 0), n <= t_high is medium, above that many; n = 0 is absent.
std::vector<FreqGroup> frequency_groups(const std::vector<int64_t>& counts, int64_t t_low,
                                        int64_t t_high);

void validate(const GenConfig& cfg);

/// Generate the benchmark; when out_dir is non-empty, also write
/// manifest.json, gen_config.json and the per-domain feature files there.
TaskStream generate_synthetic(const GenConfig& cfg, const std::string& out_dir = "");

void write_feature_file(const std::string& path, const FeatureSet& fs);
FeatureSet read_feature_file(const std::string& path);

/// CSV import with header "label,f0,...,f{d-1}".
FeatureSet read_feature_csv(const std::string& path, int num_classes);

TaskStream load_benchmark(const std::string& manifest_path);

}  // namespace dce
