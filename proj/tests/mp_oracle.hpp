#pragma once

// Independent 50-digit reference implementations used only by tests, so
// library results can be checked against something that does not share
// their double-precision rounding.

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <vector>

#include "dce/numerics.hpp"

namespace oracle {

using mpf = boost::multiprecision::cpp_bin_float_50;

struct FitRef {
  dce::Vector mean;
  dce::Matrix sigma;
};

// Mean and unbiased covariance evaluated in extended precision.
inline FitRef fit_reference(const std::vector<dce::Vector>& samples) {
  const int n = static_cast<int>(samples.size());
  const int d = static_cast<int>(samples.front().size());
  std::vector<mpf> mean(d, 0);
  for (const auto& x : samples)
    for (int i = 0; i < d; ++i) mean[i] += mpf(x[i]);
  for (auto& m : mean) m /= n;

  std::vector<mpf> cov(static_cast<size_t>(d) * d, 0);
  for (const auto& x : samples)
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < d; ++j)
        cov[static_cast<size_t>(i) * d + j] += (mpf(x[i]) - mean[i]) * (mpf(x[j]) - mean[j]);
  for (auto& c : cov) c /= n - 1;

  FitRef out;
  out.mean.resize(d);
  for (int i = 0; i < d; ++i) out.mean[i] = static_cast<double>(mean[i]);
  out.sigma = dce::Matrix(d, d);
  for (size_t k = 0; k < cov.size(); ++k) out.sigma.data[k] = static_cast<double>(cov[k]);
  return out;
}

struct OasRef {
  double rho = 0.0;
  dce::Matrix sigma_hat;
};

// Shrinkage coefficient and shrunk matrix evaluated in extended precision.
inline OasRef oas_reference(const dce::Matrix& sigma_emp, int64_t n, int d) {
  std::vector<mpf> s(sigma_emp.data.begin(), sigma_emp.data.end());
  mpf tr = 0;
  for (int i = 0; i < d; ++i) tr += s[static_cast<size_t>(i) * d + i];
  mpf tr_sq = 0;
  for (const auto& v : s) tr_sq += v * v;

  const mpf dd = d;
  const mpf numer = (1 - 2 / dd) * tr_sq + tr * tr;
  const mpf denom = (mpf(n) + 1 - 2 / dd) * (tr_sq - tr * tr / dd);

  mpf rho;
  if (denom <= 0) {
    rho = 1;
  } else {
    rho = numer / denom;
    if (rho > 1) rho = 1;
    if (rho < 0) rho = 0;
  }

  const mpf target = tr / dd;
  OasRef out;
  out.rho = static_cast<double>(rho);
  out.sigma_hat = dce::Matrix(d, d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      mpf v = (1 - rho) * s[static_cast<size_t>(i) * d + j];
      if (i == j) v += rho * target;
      out.sigma_hat(i, j) = static_cast<double>(v);
    }
  return out;
}

}  // namespace oracle
