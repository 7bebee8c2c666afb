#include "dce/losses.hpp"

#include <cmath>
#include <limits>

namespace dce {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
}

Vector adjustment_vector(const ClassPrior& prior, double alpha) {
  const int c = prior.num_classes();
  Vector adj(c, 0.0);
  if (alpha == 0.0) return adj;
  for (int i = 0; i < c; ++i) {
    adj[i] = prior.present[i] ? alpha * prior.log_p[i] : kNegInf;
  }
  return adj;
}

double adjusted_loss(const Vector& v, int y, const Vector& adj) {
  if (v.size() != adj.size()) throw Error("adjusted_loss: dimension mismatch");
  if (y < 0 || static_cast<size_t>(y) >= v.size()) throw Error("adjusted_loss: label out of range");
  if (std::isinf(adj[y]) && adj[y] < 0) throw Error("adjusted_loss: target class masked");
  Vector z(v.size());
  for (size_t i = 0; i < v.size(); ++i) z[i] = v[i] + adj[i];
  const Vector s = stable_softmax(z);
  return -std::log(s[y]);
}

Vector adjusted_loss_grad(const Vector& v, int y, const Vector& adj) {
  if (v.size() != adj.size()) throw Error("adjusted_loss_grad: dimension mismatch");
  if (y < 0 || static_cast<size_t>(y) >= v.size()) throw Error("adjusted_loss_grad: label out of range");
  if (std::isinf(adj[y]) && adj[y] < 0) throw Error("adjusted_loss_grad: target class masked");
  Vector z(v.size());
  for (size_t i = 0; i < v.size(); ++i) z[i] = v[i] + adj[i];
  Vector g = stable_softmax(z);
  g[y] -= 1.0;
  return g;
}

ClassPrior inverse_prior(const ClassPrior& prior) {
  const int c = prior.num_classes();
  ClassPrior out;
  out.p.assign(c, 0.0);
  out.present = prior.present;
  out.log_p.assign(c, kNegInf);

  double norm = 0.0;
  int num_present = 0;
  for (int i = 0; i < c; ++i) {
    if (prior.present[i]) {
      norm += 1.0 / prior.p[i];
      ++num_present;
    }
  }
  if (num_present == 0) throw Error("inverse_prior: no present class");
  for (int i = 0; i < c; ++i) {
    if (prior.present[i]) {
      out.p[i] = (1.0 / prior.p[i]) / norm;
      out.log_p[i] = std::log(out.p[i]);
    }
  }
  return out;
}

Vector reweight_posterior(const Vector& q, const ClassPrior& p_src, const ClassPrior& p_tgt) {
  const size_t c = q.size();
  if (p_src.p.size() != c || p_tgt.p.size() != c)
    throw Error("reweight_posterior: dimension mismatch");
  for (size_t i = 0; i < c; ++i) {
    if (p_src.present[i] != p_tgt.present[i])
      throw Error("reweight_posterior: prior supports differ");
  }
  Vector r(c, 0.0);
  double norm = 0.0;
  for (size_t i = 0; i < c; ++i) {
    if (p_src.present[i]) {
      r[i] = q[i] * p_src.p[i] / p_tgt.p[i];
      norm += r[i];
    }
  }
  if (norm <= 0.0) throw Error("reweight_posterior: zero normalizer");
  for (double& x : r) x /= norm;
  return r;
}

}  // namespace dce
