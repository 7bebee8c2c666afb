#pragma once

#include <cstdint>
#include <vector>

#include "dce/numerics.hpp"

namespace dce {

/// Per-task class frequency distribution. Absent classes carry p = 0, a
/// cleared presence flag, and log_p = -inf; present probabilities sum to 1.
struct ClassPrior {
  Vector p;
  std::vector<uint8_t> present;
  Vector log_p;

  int num_classes() const { return static_cast<int>(p.size()); }
};

/// alpha * log p per class. alpha = 0 gives an exact zero vector (no
/// adjustment, and no 0 * -inf at absent classes); alpha > 0 propagates
/// -inf into absent classes so they drop out of the softmax.
Vector adjustment_vector(const ClassPrior& prior, double alpha);

/// -log softmax(v + adj)[y]. The target class must be unmasked.
double adjusted_loss(const Vector& v, int y, const Vector& adj);

/// d loss / d v = softmax(v + adj) - onehot(y). Zero at masked classes.
Vector adjusted_loss_grad(const Vector& v, int y, const Vector& adj);

/// Normalized inverse-frequency distribution over the present classes.
ClassPrior inverse_prior(const ClassPrior& prior);

/// Bayes posterior reweighting from a source prior to a target prior under
/// shared class-conditionals: normalize(q * p_src / p_tgt).
Vector reweight_posterior(const Vector& q, const ClassPrior& p_src, const ClassPrior& p_tgt);

}  // namespace dce
