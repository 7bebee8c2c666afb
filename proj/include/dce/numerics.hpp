#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace dce {

using Vector = std::vector<double>;

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad user input (flags, config files). Maps to exit code 1 in the CLI.
struct ConfigError : Error {
  using Error::Error;
};

// Row-major dense matrix of 64-bit reals.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<size_t>(r) * c, fill) {}

  double& operator()(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
  double operator()(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }

  static Matrix identity(int n) {
    Matrix m(n, n);
    for (int i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }
};

/// Deterministic PRNG: splitmix64 seeds a xoshiro256** state, Gaussian
/// variates come from Box-Muller with the second variate cached. The same
/// seed reproduces the same variate sequence on every platform.
class RngState {
 public:
  explicit RngState(uint64_t seed);

  uint64_t next_u64();
  /// Uniform in [0, 1), 53-bit resolution.
  double uniform01();
  double uniform(double lo, double hi);
  /// Uniform index in [0, n). n must be positive.
  size_t uniform_index(size_t n);
  /// Standard normal variate. Draws a Box-Muller pair on every other call.
  double gaussian();
  /// In-place Fisher-Yates shuffle.
  void shuffle(std::vector<int>& v);

 private:
  uint64_t state_[4];
  double cached_gaussian_ = 0.0;
  bool has_cached_gaussian_ = false;
};

/// Softmax with max-subtraction. -inf entries encode masked classes and map
/// to exactly 0. Throws if every entry is -inf.
Vector stable_softmax(const Vector& v);

struct CholeskyResult {
  Matrix l;       // lower-triangular factor
  double jitter;  // lambda actually added to the diagonal (0 when none)
};

/// Lower-triangular factor of a symmetric matrix. If the plain factorization
/// hits a non-positive pivot, a diagonal jitter lambda*I is added, starting
/// at 1e-10*mean(diag) and escalating by x10 up to 1e-2*mean(diag). The
/// factor then satisfies L*L^T = S + lambda*I.
CholeskyResult cholesky_factor(const Matrix& s);

/// mu + L*z with z i.i.d. standard normal. Consumes exactly dim(mu)
/// Gaussian variates from rng.
Vector sample_mvn(const Vector& mu, const Matrix& l, RngState& rng);

}  // namespace dce
