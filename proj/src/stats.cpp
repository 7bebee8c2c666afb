#include "dce/stats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dce/binio.hpp"
#include "json.hpp"

namespace dce {

bool StatsRepo::has_domain(int domain) const {
  for (const auto& c : domain_covs)
    if (c.domain == domain) return true;
  return false;
}

const DomainCovariance& StatsRepo::domain_cov(int domain) const {
  for (const auto& c : domain_covs)
    if (c.domain == domain) return c;
  throw Error("no covariance stored for domain " + std::to_string(domain));
}

ClassFit fit_class_gaussian(const std::vector<const FeatureRecord*>& samples, int d) {
  const int64_t n = static_cast<int64_t>(samples.size());
  if (n == 0) throw Error("fit_class_gaussian: no samples");

  ClassFit fit;
  fit.n = n;
  fit.mean.assign(d, 0.0);
  for (const auto* r : samples) {
    if (static_cast<int>(r->features.size()) != d)
      throw Error("fit_class_gaussian: dimension mismatch");
    for (int i = 0; i < d; ++i) fit.mean[i] += r->features[i];
  }
  for (int i = 0; i < d; ++i) fit.mean[i] /= static_cast<double>(n);

  if (n < 2) return fit;
  fit.has_cov = true;
  fit.sigma_emp = Matrix(d, d);
  for (const auto* r : samples) {
    for (int i = 0; i < d; ++i) {
      const double di = r->features[i] - fit.mean[i];
      for (int j = i; j < d; ++j)
        fit.sigma_emp(i, j) += di * (r->features[j] - fit.mean[j]);
    }
  }
  for (int i = 0; i < d; ++i)
    for (int j = i; j < d; ++j) {
      fit.sigma_emp(i, j) /= static_cast<double>(n - 1);
      fit.sigma_emp(j, i) = fit.sigma_emp(i, j);
    }
  return fit;
}

OasResult oas_shrink(const Matrix& sigma_emp, int64_t n, int d) {
  if (sigma_emp.rows != d || sigma_emp.cols != d) throw Error("oas_shrink: dimension mismatch");
  if (n < 2) throw Error("oas_shrink: need n >= 2");
  const double max_abs = [&] {
    double m = 0.0;
    for (double v : sigma_emp.data) m = std::max(m, std::abs(v));
    return m;
  }();
  for (int i = 0; i < d; ++i)
    for (int j = i + 1; j < d; ++j)
      if (std::abs(sigma_emp(i, j) - sigma_emp(j, i)) > 1e-9 * (1.0 + max_abs))
        throw Error("oas_shrink: matrix not symmetric");

  double tr = 0.0;
  for (int i = 0; i < d; ++i) tr += sigma_emp(i, i);
  double tr_sq = 0.0;  // tr(Sigma^2) = sum of squared entries for symmetric Sigma
  for (double v : sigma_emp.data) tr_sq += v * v;

  const double dd = static_cast<double>(d);
  const double numer = (1.0 - 2.0 / dd) * tr_sq + tr * tr;
  const double denom = (static_cast<double>(n) + 1.0 - 2.0 / dd) * (tr_sq - tr * tr / dd);
  const double scale = (static_cast<double>(n) + 1.0) * (tr_sq + tr * tr / dd);

  OasResult out;
  if (denom <= 1e-15 * scale) {
    out.rho = 1.0;  // spherical input: target equals input
  } else {
    out.rho = std::clamp(numer / denom, 0.0, 1.0);
  }

  const double target_diag = tr / dd;
  out.sigma_hat = Matrix(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      out.sigma_hat(i, j) =
          (1.0 - out.rho) * sigma_emp(i, j) + (i == j ? out.rho * target_diag : 0.0);
  return out;
}

DomainStats build_domain_stats(const DomainTask& task, int64_t cov_min_samples) {
  const int d = task.train.d;
  const int c = task.train.num_classes;

  std::vector<std::vector<const FeatureRecord*>> by_class(c);
  for (const auto& r : task.train.records) by_class[r.label].push_back(&r);

  DomainStats stats;
  stats.cov.domain = task.index;
  Matrix acc(d, d);
  int qualifying = 0;

  for (int cls = 0; cls < c; ++cls) {
    if (by_class[cls].empty()) continue;
    const ClassFit fit = fit_class_gaussian(by_class[cls], d);
    ClassGaussian g;
    g.domain = task.index;
    g.cls = cls;
    g.count = fit.n;
    g.mean = fit.mean;
    stats.gaussians.push_back(std::move(g));

    if (fit.n >= cov_min_samples && fit.has_cov) {
      const OasResult oas = oas_shrink(fit.sigma_emp, fit.n, d);
      for (size_t k = 0; k < acc.data.size(); ++k) acc.data[k] += oas.sigma_hat.data[k];
      ++qualifying;
    }
  }

  if (qualifying == 0)
    throw Error("insufficient data for domain covariance: no class has n >= " +
                std::to_string(cov_min_samples) + " (lower cov_min_samples to proceed)");

  for (double& v : acc.data) v /= static_cast<double>(qualifying);
  stats.cov.sigma_bar = std::move(acc);
  stats.cov.contributing_classes = qualifying;
  return stats;
}

void merge_repo(StatsRepo& repo, const DomainStats& stats) {
  if (stats.gaussians.empty()) throw Error("merge_repo: empty domain statistics");
  const int d = static_cast<int>(stats.gaussians.front().mean.size());
  if (repo.d == 0) repo.d = d;
  if (repo.d != d) throw Error("merge_repo: dimension mismatch");
  if (repo.has_domain(stats.cov.domain))
    throw Error("merge_repo: duplicate domain " + std::to_string(stats.cov.domain));
  for (const auto& g : stats.gaussians) {
    repo.num_classes = std::max(repo.num_classes, g.cls + 1);
    repo.gaussians.push_back(g);
  }
  repo.domain_covs.push_back(stats.cov);
}

void save_repo(const StatsRepo& repo, const std::string& path_prefix) {
  nlohmann::ordered_json meta;
  meta["d"] = repo.d;
  meta["num_classes"] = repo.num_classes;
  meta["gaussians"] = nlohmann::ordered_json::array();
  for (const auto& g : repo.gaussians)
    meta["gaussians"].push_back({{"domain", g.domain}, {"class", g.cls}, {"count", g.count}});
  meta["domain_covs"] = nlohmann::ordered_json::array();
  for (const auto& c : repo.domain_covs)
    meta["domain_covs"].push_back(
        {{"domain", c.domain}, {"contributing_classes", c.contributing_classes}});

  std::ofstream mf(path_prefix + ".json");
  if (!mf) throw Error("cannot write " + path_prefix + ".json");
  mf << meta.dump(2) << "\n";

  std::ofstream bf(path_prefix + ".bin", std::ios::binary);
  if (!bf) throw Error("cannot write " + path_prefix + ".bin");
  for (const auto& g : repo.gaussians)
    for (double v : g.mean) binio::put_f64(bf, v);
  for (const auto& c : repo.domain_covs)
    for (double v : c.sigma_bar.data) binio::put_f64(bf, v);
  if (!bf) throw Error("write failed: " + path_prefix + ".bin");
}

StatsRepo load_repo(const std::string& path_prefix) {
  std::ifstream mf(path_prefix + ".json");
  if (!mf) throw Error("cannot open " + path_prefix + ".json");
  nlohmann::json meta;
  try {
    mf >> meta;
  } catch (const nlohmann::json::exception& e) {
    throw Error("invalid repo json: " + std::string(e.what()));
  }

  StatsRepo repo;
  repo.d = meta.at("d").get<int>();
  repo.num_classes = meta.at("num_classes").get<int>();

  std::ifstream bf(path_prefix + ".bin", std::ios::binary);
  if (!bf) throw Error("cannot open " + path_prefix + ".bin");

  for (const auto& jg : meta.at("gaussians")) {
    ClassGaussian g;
    g.domain = jg.at("domain").get<int>();
    g.cls = jg.at("class").get<int>();
    g.count = jg.at("count").get<int64_t>();
    g.mean.resize(repo.d);
    for (double& v : g.mean)
      if (!binio::get_f64(bf, v)) throw Error("truncated repo sidecar: " + path_prefix + ".bin");
    repo.gaussians.push_back(std::move(g));
  }
  for (const auto& jc : meta.at("domain_covs")) {
    DomainCovariance c;
    c.domain = jc.at("domain").get<int>();
    c.contributing_classes = jc.at("contributing_classes").get<int>();
    c.sigma_bar = Matrix(repo.d, repo.d);
    for (double& v : c.sigma_bar.data)
      if (!binio::get_f64(bf, v)) throw Error("truncated repo sidecar: " + path_prefix + ".bin");
    repo.domain_covs.push_back(std::move(c));
  }
  return repo;
}

}  // namespace dce
