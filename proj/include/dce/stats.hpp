#pragma once

#include <string>
#include <vector>

#include "dce/data.hpp"
#include "dce/numerics.hpp"

namespace dce {

// Mean of one class within one domain. Covariances are not kept per class;
// each domain stores a single averaged covariance (DomainCovariance).
struct ClassGaussian {
  int domain = 0;
  int cls = 0;
  int64_t count = 0;
  Vector mean;
};

struct DomainCovariance {
  int domain = 0;
  int contributing_classes = 0;
  Matrix sigma_bar{0, 0};
};

// Statistics accumulated across the task stream: one mean per (domain, class)
// pair seen so far and one covariance per domain.
struct StatsRepo {
  int d = 0;
  int num_classes = 0;
  std::vector<ClassGaussian> gaussians;
  std::vector<DomainCovariance> domain_covs;

  bool has_domain(int domain) const;
  const DomainCovariance& domain_cov(int domain) const;
};

struct ClassFit {
  Vector mean;
  Matrix sigma_emp{0, 0};
  int64_t n = 0;
  bool has_cov = false;  // requires n >= 2
};

struct OasResult {
  double rho = 0.0;
  Matrix sigma_hat{0, 0};
};

struct DomainStats {
  std::vector<ClassGaussian> gaussians;
  DomainCovariance cov;
};

// Mean and unbiased (n-1) covariance of the given samples.
ClassFit fit_class_gaussian(const std::vector<const FeatureRecord*>& samples, int d);

// Oracle-approximating shrinkage toward the scaled identity (tr/d) * I.
// rho is clamped to [0, 1]; a spherical input has a zero denominator and
// maps to rho = 1, which leaves the matrix unchanged.
OasResult oas_shrink(const Matrix& sigma_emp, int64_t n, int d);

// Per-class means for every present class plus the domain covariance,
// averaged over classes with at least cov_min_samples samples.
DomainStats build_domain_stats(const DomainTask& task, int64_t cov_min_samples = 10);

void merge_repo(StatsRepo& repo, const DomainStats& stats);

// JSON metadata plus a binary sidecar holding means and covariances
// bit-exactly. path_prefix yields <prefix>.json and <prefix>.bin.
void save_repo(const StatsRepo& repo, const std::string& path_prefix);
StatsRepo load_repo(const std::string& path_prefix);

}  // namespace dce
