#include "dce/data.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "dce/binio.hpp"
#include "json.hpp"

namespace fs = std::filesystem;

namespace dce {

std::vector<int64_t> FeatureSet::label_counts() const {
  std::vector<int64_t> counts(num_classes, 0);
  for (const auto& r : records) counts[r.label]++;
  return counts;
}

const char* freq_group_name(FreqGroup g) {
  switch (g) {
    case FreqGroup::absent: return "absent";
    case FreqGroup::few: return "few";
    case FreqGroup::medium: return "medium";
    case FreqGroup::many: return "many";
  }
  return "?";
}

ClassPrior class_prior(const std::vector<int64_t>& counts) {
  ClassPrior prior;
  const int c = static_cast<int>(counts.size());
  prior.p.assign(c, 0.0);
  prior.present.assign(c, 0);
  prior.log_p.assign(c, -std::numeric_limits<double>::infinity());

  int64_t total = 0;
  for (int64_t n : counts) {
    if (n < 0) throw Error("class_prior: negative count");
    total += n;
  }
  if (total == 0) throw Error("class_prior: all counts are zero");
  for (int i = 0; i < c; ++i) {
    if (counts[i] > 0) {
      prior.present[i] = 1;
      prior.p[i] = static_cast<double>(counts[i]) / static_cast<double>(total);
      prior.log_p[i] = std::log(prior.p[i]);
    }
  }
  return prior;
}

std::vector<FreqGroup> frequency_groups(const std::vector<int64_t>& counts, int64_t t_low,
                                        int64_t t_high) {
  if (t_low >= t_high) throw Error("frequency_groups: t_low must be < t_high");
  std::vector<FreqGroup> groups(counts.size());
  for (size_t i = 0; i < counts.size(); ++i) {
    const int64_t n = counts[i];
    if (n == 0) groups[i] = FreqGroup::absent;
    else if (n <= t_low) groups[i] = FreqGroup::few;
    else if (n <= t_high) groups[i] = FreqGroup::medium;
    else groups[i] = FreqGroup::many;
  }
  return groups;
}

void validate(const GenConfig& cfg) {
  if (cfg.rho < 1.0) throw ConfigError("rho must be >= 1");
  if (cfg.num_domains < 1) throw ConfigError("domains must be >= 1");
  if (cfg.num_classes < 1) throw ConfigError("classes must be >= 1");
  if (cfg.d < 1) throw ConfigError("dim must be >= 1");
  if (cfg.n_max < 1) throw ConfigError("n_max must be >= 1");
  if (static_cast<double>(cfg.n_max) < cfg.rho) throw ConfigError("n_max must be >= rho");
  if (cfg.test_per_class < 1) throw ConfigError("test_per_class must be >= 1");
  if (cfg.noise_sigma < 0.0) throw ConfigError("noise_sigma must be >= 0");
  if (cfg.drift_strength < 0.0) throw ConfigError("drift_strength must be >= 0");
  if (cfg.t_low >= cfg.t_high) throw ConfigError("thresholds must satisfy t_low < t_high");
}

namespace {

// Rigid per-domain motion: Givens rotations on disjoint random coordinate
// planes plus a translation. Angles and translation length scale with
// drift_strength, so strength 0 is the identity while consuming the same
// rng draws.
struct DomainTransform {
  std::vector<std::array<int, 2>> planes;
  std::vector<double> angles;
  Vector translation;
};

DomainTransform draw_transform(int d, double strength, RngState& rng) {
  DomainTransform t;
  std::vector<int> idx(d);
  for (int i = 0; i < d; ++i) idx[i] = i;
  rng.shuffle(idx);
  for (int k = 0; k + 1 < d; k += 2) {
    t.planes.push_back({idx[k], idx[k + 1]});
    t.angles.push_back(strength * rng.uniform(-1.0, 1.0));
  }
  Vector g(d);
  double norm = 0.0;
  for (int i = 0; i < d; ++i) {
    g[i] = rng.gaussian();
    norm += g[i] * g[i];
  }
  norm = std::sqrt(norm);
  t.translation.assign(d, 0.0);
  if (norm > 0.0) {
    const double len = strength * std::sqrt(static_cast<double>(d));
    for (int i = 0; i < d; ++i) t.translation[i] = len * g[i] / norm;
  }
  return t;
}

Vector apply_transform(const DomainTransform& t, Vector v) {
  for (size_t k = 0; k < t.planes.size(); ++k) {
    const int a = t.planes[k][0];
    const int b = t.planes[k][1];
    const double c = std::cos(t.angles[k]);
    const double s = std::sin(t.angles[k]);
    const double va = v[a];
    const double vb = v[b];
    v[a] = c * va - s * vb;
    v[b] = s * va + c * vb;
  }
  for (size_t i = 0; i < v.size(); ++i) v[i] += t.translation[i];
  return v;
}

std::vector<int64_t> domain_counts(const GenConfig& cfg, const std::vector<int>& rank_of_class) {
  std::vector<int64_t> counts(cfg.num_classes);
  for (int c = 0; c < cfg.num_classes; ++c) {
    double expo = 0.0;
    if (cfg.num_classes > 1)
      expo = -static_cast<double>(rank_of_class[c]) / static_cast<double>(cfg.num_classes - 1);
    counts[c] = static_cast<int64_t>(std::llround(static_cast<double>(cfg.n_max) * std::pow(cfg.rho, expo)));
  }
  return counts;
}

}  // namespace

TaskStream generate_synthetic(const GenConfig& cfg, const std::string& out_dir) {
  validate(cfg);
  RngState rng(cfg.seed);

  // Class prototypes: uniform directions scaled to radius sqrt(d).
  std::vector<Vector> prototypes(cfg.num_classes);
  for (auto& proto : prototypes) {
    proto.resize(cfg.d);
    double norm = 0.0;
    for (int i = 0; i < cfg.d; ++i) {
      proto[i] = rng.gaussian();
      norm += proto[i] * proto[i];
    }
    norm = std::sqrt(norm);
    const double radius = std::sqrt(static_cast<double>(cfg.d));
    for (int i = 0; i < cfg.d; ++i) proto[i] = norm > 0.0 ? radius * proto[i] / norm : radius;
  }

  TaskStream stream;
  stream.d = cfg.d;
  stream.num_classes = cfg.num_classes;
  stream.t_low = cfg.t_low;
  stream.t_high = cfg.t_high;

  std::vector<int> ranks(cfg.num_classes);
  for (int c = 0; c < cfg.num_classes; ++c) ranks[c] = c;

  for (int b = 1; b <= cfg.num_domains; ++b) {
    const DomainTransform transform = draw_transform(cfg.d, cfg.drift_strength, rng);
    if (cfg.permute_frequencies) rng.shuffle(ranks);

    std::vector<Vector> domain_protos(cfg.num_classes);
    for (int c = 0; c < cfg.num_classes; ++c)
      domain_protos[c] = apply_transform(transform, prototypes[c]);

    DomainTask task;
    task.index = b;
    task.name = "domain" + std::to_string(b);
    task.class_counts = domain_counts(cfg, ranks);

    auto draw_sample = [&](int c) {
      FeatureRecord r;
      r.label = c;
      r.features = domain_protos[c];
      for (int i = 0; i < cfg.d; ++i) r.features[i] += cfg.noise_sigma * rng.gaussian();
      return r;
    };

    task.train.d = cfg.d;
    task.train.num_classes = cfg.num_classes;
    for (int c = 0; c < cfg.num_classes; ++c)
      for (int64_t k = 0; k < task.class_counts[c]; ++k) task.train.records.push_back(draw_sample(c));

    task.test.d = cfg.d;
    task.test.num_classes = cfg.num_classes;
    for (int c = 0; c < cfg.num_classes; ++c)
      for (int k = 0; k < cfg.test_per_class; ++k) task.test.records.push_back(draw_sample(c));

    stream.tasks.push_back(std::move(task));
  }

  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    nlohmann::ordered_json manifest;
    manifest["d"] = cfg.d;
    manifest["num_classes"] = cfg.num_classes;
    manifest["thresholds"] = {cfg.t_low, cfg.t_high};
    manifest["domains"] = nlohmann::ordered_json::array();
    for (const auto& task : stream.tasks) {
      const std::string train_file = task.name + "_train.bin";
      const std::string test_file = task.name + "_test.bin";
      write_feature_file((fs::path(out_dir) / train_file).string(), task.train);
      write_feature_file((fs::path(out_dir) / test_file).string(), task.test);
      manifest["domains"].push_back(
          {{"name", task.name}, {"train", train_file}, {"test", test_file}});
    }
    std::ofstream mf(fs::path(out_dir) / "manifest.json");
    if (!mf) throw Error("cannot write manifest in " + out_dir);
    mf << manifest.dump(2) << "\n";

    nlohmann::ordered_json cj;
    cj["domains"] = cfg.num_domains;
    cj["classes"] = cfg.num_classes;
    cj["dim"] = cfg.d;
    cj["rho"] = cfg.rho;
    cj["n_max"] = cfg.n_max;
    cj["test_per_class"] = cfg.test_per_class;
    cj["noise_sigma"] = cfg.noise_sigma;
    cj["drift_strength"] = cfg.drift_strength;
    cj["permute_frequencies"] = cfg.permute_frequencies;
    cj["thresholds"] = {cfg.t_low, cfg.t_high};
    cj["seed"] = cfg.seed;
    std::ofstream cf(fs::path(out_dir) / "gen_config.json");
    if (!cf) throw Error("cannot write gen_config in " + out_dir);
    cf << cj.dump(2) << "\n";
  }

  return stream;
}

namespace {

constexpr char kMagic[4] = {'D', 'I', 'L', 'F'};
constexpr uint32_t kVersion = 1;

using binio::get_f64;
using binio::get_u32;
using binio::put_f64;
using binio::put_u32;

}  // namespace

void write_feature_file(const std::string& path, const FeatureSet& fs_data) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open for write: " + path);
  os.write(kMagic, 4);
  put_u32(os, kVersion);
  put_u32(os, static_cast<uint32_t>(fs_data.records.size()));
  put_u32(os, static_cast<uint32_t>(fs_data.d));
  put_u32(os, static_cast<uint32_t>(fs_data.num_classes));
  for (const auto& r : fs_data.records) {
    put_u32(os, static_cast<uint32_t>(r.label));
    for (double x : r.features) put_f64(os, x);
  }
  if (!os) throw Error("write failed: " + path);
}

FeatureSet read_feature_file(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open: " + path);
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0)
    throw Error("bad magic in " + path);
  uint32_t version = 0, n = 0, d = 0, c = 0;
  if (!get_u32(is, version) || version != kVersion) throw Error("bad version in " + path);
  if (!get_u32(is, n) || !get_u32(is, d) || !get_u32(is, c))
    throw Error("truncated header in " + path);

  FeatureSet out;
  out.d = static_cast<int>(d);
  out.num_classes = static_cast<int>(c);
  out.records.resize(n);
  for (uint32_t i = 0; i < n; ++i) {
    uint32_t label = 0;
    if (!get_u32(is, label)) throw Error("truncated file: " + path);
    if (label >= c) throw Error("label out of range in " + path);
    out.records[i].label = static_cast<int>(label);
    out.records[i].features.resize(d);
    for (uint32_t j = 0; j < d; ++j) {
      if (!get_f64(is, out.records[i].features[j])) throw Error("truncated file: " + path);
    }
  }
  return out;
}

FeatureSet read_feature_csv(const std::string& path, int num_classes) {
  std::ifstream is(path);
  if (!is) throw Error("cannot open: " + path);
  std::string line;
  if (!std::getline(is, line)) throw Error("empty csv: " + path);

  std::vector<std::string> header;
  std::stringstream hs(line);
  std::string field;
  while (std::getline(hs, field, ',')) header.push_back(field);
  if (header.empty() || header[0] != "label") throw Error("bad csv header in " + path);
  const int d = static_cast<int>(header.size()) - 1;
  for (int i = 0; i < d; ++i) {
    if (header[i + 1] != "f" + std::to_string(i)) throw Error("bad csv header in " + path);
  }

  FeatureSet out;
  out.d = d;
  out.num_classes = num_classes;
  size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::stringstream ls(line);
    FeatureRecord r;
    if (!std::getline(ls, field, ',')) throw Error("bad csv row " + std::to_string(line_no));
    r.label = std::stoi(field);
    if (r.label < 0 || r.label >= num_classes)
      throw Error("label out of range at csv row " + std::to_string(line_no));
    for (int i = 0; i < d; ++i) {
      if (!std::getline(ls, field, ',')) throw Error("short csv row " + std::to_string(line_no));
      r.features.push_back(std::stod(field));
    }
    out.records.push_back(std::move(r));
  }
  return out;
}

TaskStream load_benchmark(const std::string& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw Error("cannot open manifest: " + manifest_path);
  nlohmann::json manifest;
  try {
    is >> manifest;
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid manifest json: " + std::string(e.what()));
  }
  for (const char* key : {"d", "num_classes", "thresholds", "domains"}) {
    if (!manifest.contains(key)) throw Error(std::string("manifest missing key: ") + key);
  }

  TaskStream stream;
  stream.d = manifest["d"].get<int>();
  stream.num_classes = manifest["num_classes"].get<int>();
  stream.t_low = manifest["thresholds"][0].get<int64_t>();
  stream.t_high = manifest["thresholds"][1].get<int64_t>();

  const fs::path base = fs::path(manifest_path).parent_path();
  auto load_set = [&](const std::string& rel) {
    const fs::path p = fs::path(rel).is_absolute() ? fs::path(rel) : base / rel;
    FeatureSet set = p.extension() == ".csv" ? read_feature_csv(p.string(), stream.num_classes)
                                             : read_feature_file(p.string());
    if (set.d != stream.d)
      throw Error("feature dimension mismatch in " + p.string());
    if (set.num_classes != stream.num_classes)
      throw Error("label-space mismatch in " + p.string());
    return set;
  };

  int index = 1;
  for (const auto& dom : manifest["domains"]) {
    DomainTask task;
    task.index = index++;
    task.name = dom["name"].get<std::string>();
    task.train = load_set(dom["train"].get<std::string>());
    task.test = load_set(dom["test"].get<std::string>());
    task.class_counts = task.train.label_counts();
    stream.tasks.push_back(std::move(task));
  }
  if (stream.tasks.empty()) throw Error("manifest lists no domains");
  return stream;
}

}  // namespace dce
