#pragma once

#include <iosfwd>
#include <vector>

#include "dce/data.hpp"
#include "dce/losses.hpp"
#include "dce/numerics.hpp"

namespace dce {

// Two-layer perceptron head: D -> H (relu) -> O with H = floor(D/2).
struct MlpParams {
  Matrix w1{0, 0};  // D x H
  Vector b1;        // H
  Matrix w2{0, 0};  // H x O
  Vector b2;        // O

  int in_dim() const { return w1.rows; }
  int hidden_dim() const { return w1.cols; }
  int out_dim() const { return w2.cols; }
};

struct MlpGrads {
  Matrix w1{0, 0};
  Vector b1;
  Matrix w2{0, 0};
  Vector b2;
};

// One classification head trained on a single task with a fixed logit
// adjustment exponent. Frozen once its task completes.
struct Expert {
  MlpParams params;
  int alpha = 0;
  int task = 0;
  ClassPrior prior;
};

struct Selector {
  MlpParams params;  // out_dim = number of experts in the pool
};

struct TrainConfig {
  double lr0 = 0.01;
  double momentum = 0.9;
  int batch_size = 128;
  int epochs_stage1 = 20;
  int epochs_stage2 = 10;
  uint64_t seed = 0;
};

void validate(const TrainConfig& cfg);

// Weights ~ U(-sqrt(6/fan_in), +sqrt(6/fan_in)), biases zero. Consumes
// exactly D*H + H*O uniform draws: w1 row-major, then w2 row-major.
MlpParams init_mlp(RngState& rng, int d, int h, int o);

Vector mlp_forward(const MlpParams& params, const Vector& x);

// Mean over the batch of analytic parameter gradients, given the gradient
// of the loss with respect to the output logits of each sample. The relu
// subgradient at exactly 0 is taken as 0.
MlpGrads mlp_grad(const MlpParams& params, const std::vector<const Vector*>& xs,
                  const std::vector<Vector>& upstream);

// One value per epoch: lr0 at t=0 decaying to 0 at t=T-1 (lr0 when T=1).
double cosine_lr(int t, int total, double lr0);

// Stage 1: one expert per adjustment exponent, all trained on an identical
// shuffled batch schedule for epochs_stage1 epochs of SGD with momentum.
std::vector<Expert> train_expert_group(const DomainTask& task, const TrainConfig& cfg,
                                       const std::vector<int>& alphas, RngState& rng);

// Continues SGD on an existing head for the given number of epochs with a
// fresh momentum buffer. Used by the sequential fine-tuning baseline.
void train_inplace(MlpParams& params, const FeatureSet& data, const Vector& adjustment,
                   const TrainConfig& cfg, int epochs, RngState& rng);

// Stage 2: freshly initialized selector trained on the synthetic set for
// epochs_stage2 epochs. Experts stay frozen; only mixture weights over
// their (precomputed) logits receive gradients. softmax_fusion selects
// normalized mixture weights; otherwise raw selector outputs are used.
Selector train_selector(const FeatureSet& synth, const std::vector<Expert>& pool,
                        const TrainConfig& cfg, RngState& rng, bool softmax_fusion = true);

// Bit-exact binary round-trip of one parameter block.
void write_params(std::ostream& os, const MlpParams& params);
MlpParams read_params(std::istream& is);

}  // namespace dce
