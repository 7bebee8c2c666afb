#include "dce/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dce {

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

uint64_t splitmix64(uint64_t& s) {
  s += 0x9E3779B97F4A7C15ULL;
  uint64_t z = s;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

uint64_t rotl64(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

}  // namespace

RngState::RngState(uint64_t seed) {
  uint64_t s = seed;
  for (auto& w : state_) w = splitmix64(s);
}

uint64_t RngState::next_u64() {
  const uint64_t result = rotl64(state_[1] * 5, 7) * 9;
  const uint64_t t = state_[1] << 17;
  state_[2] ^= state_[0];
  state_[3] ^= state_[1];
  state_[1] ^= state_[2];
  state_[0] ^= state_[3];
  state_[2] ^= t;
  state_[3] = rotl64(state_[3], 45);
  return result;
}

double RngState::uniform01() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngState::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform01();
}

size_t RngState::uniform_index(size_t n) {
  return static_cast<size_t>(next_u64() % n);
}

double RngState::gaussian() {
  if (has_cached_gaussian_) {
    has_cached_gaussian_ = false;
    return cached_gaussian_;
  }
  // u1 in (0, 1] keeps the log finite.
  const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
  const double u2 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  cached_gaussian_ = r * std::sin(kTwoPi * u2);
  has_cached_gaussian_ = true;
  return r * std::cos(kTwoPi * u2);
}

void RngState::shuffle(std::vector<int>& v) {
  for (size_t i = v.size(); i > 1; --i) {
    std::swap(v[i - 1], v[uniform_index(i)]);
  }
}

Vector stable_softmax(const Vector& v) {
  if (v.empty()) throw Error("softmax of empty vector");
  double m = -std::numeric_limits<double>::infinity();
  for (double x : v) m = std::max(m, x);
  if (std::isinf(m) && m < 0) throw Error("fully masked logits");

  Vector out(v.size());
  double sum = 0.0;
  for (size_t i = 0; i < v.size(); ++i) {
    out[i] = std::isinf(v[i]) && v[i] < 0 ? 0.0 : std::exp(v[i] - m);
    sum += out[i];
  }
  for (double& x : out) x /= sum;
  return out;
}

namespace {

// Classic in-place lower Cholesky. Fails on any pivot <= 0, so exactly
// singular inputs fall through to the jitter ladder.
bool try_cholesky(const Matrix& s, Matrix& l) {
  const int n = s.rows;
  l = Matrix(n, n);
  for (int j = 0; j < n; ++j) {
    double d = s(j, j);
    for (int k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0)) return false;
    l(j, j) = std::sqrt(d);
    for (int i = j + 1; i < n; ++i) {
      double v = s(i, j);
      for (int k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
      l(i, j) = v / l(j, j);
    }
  }
  return true;
}

}  // namespace

CholeskyResult cholesky_factor(const Matrix& s) {
  if (s.rows != s.cols || s.rows == 0) throw Error("cholesky: matrix must be square");
  double max_abs = 0.0;
  for (double x : s.data) max_abs = std::max(max_abs, std::abs(x));
  for (int i = 0; i < s.rows; ++i)
    for (int j = i + 1; j < s.cols; ++j)
      if (std::abs(s(i, j) - s(j, i)) > 1e-9 * (1.0 + max_abs))
        throw Error("cholesky: matrix not symmetric");

  CholeskyResult res;
  res.jitter = 0.0;
  if (try_cholesky(s, res.l)) return res;

  double mean_diag = 0.0;
  for (int i = 0; i < s.rows; ++i) mean_diag += s(i, i);
  mean_diag /= s.rows;
  if (mean_diag > 0.0) {
    for (double lam = 1e-10 * mean_diag; lam <= 1e-2 * mean_diag * (1.0 + 1e-12); lam *= 10.0) {
      Matrix jittered = s;
      for (int i = 0; i < s.rows; ++i) jittered(i, i) += lam;
      if (try_cholesky(jittered, res.l)) {
        res.jitter = lam;
        return res;
      }
    }
  }
  throw Error("covariance not factorizable");
}

Vector sample_mvn(const Vector& mu, const Matrix& l, RngState& rng) {
  const int d = static_cast<int>(mu.size());
  if (l.rows != d || l.cols != d) throw Error("sample_mvn: dimension mismatch");
  Vector z(d);
  for (int i = 0; i < d; ++i) z[i] = rng.gaussian();
  Vector out(mu);
  for (int i = 0; i < d; ++i) {
    double acc = 0.0;
    for (int j = 0; j <= i; ++j) acc += l(i, j) * z[j];
    out[i] += acc;
  }
  return out;
}

}  // namespace dce
