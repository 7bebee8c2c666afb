#include "dce/model.hpp"

#include <cmath>
#include <numbers>

#include "dce/binio.hpp"

namespace dce {

void validate(const TrainConfig& cfg) {
  if (cfg.lr0 <= 0.0) throw ConfigError("lr0 must be > 0");
  if (cfg.momentum < 0.0 || cfg.momentum >= 1.0) throw ConfigError("momentum must be in [0, 1)");
  if (cfg.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (cfg.epochs_stage1 < 1) throw ConfigError("epochs_stage1 must be >= 1");
  if (cfg.epochs_stage2 < 1) throw ConfigError("epochs_stage2 must be >= 1");
}

MlpParams init_mlp(RngState& rng, int d, int h, int o) {
  if (d < 1 || h < 1 || o < 1) throw Error("init_mlp: dimensions must be positive");
  MlpParams p;
  p.w1 = Matrix(d, h);
  p.b1.assign(h, 0.0);
  p.w2 = Matrix(h, o);
  p.b2.assign(o, 0.0);
  const double bound1 = std::sqrt(6.0 / static_cast<double>(d));
  for (double& v : p.w1.data) v = rng.uniform(-bound1, bound1);
  const double bound2 = std::sqrt(6.0 / static_cast<double>(h));
  for (double& v : p.w2.data) v = rng.uniform(-bound2, bound2);
  return p;
}

namespace {

Vector hidden_pre(const MlpParams& p, const Vector& x) {
  const int d = p.in_dim();
  const int h = p.hidden_dim();
  Vector pre = p.b1;
  for (int i = 0; i < d; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    for (int j = 0; j < h; ++j) pre[j] += p.w1(i, j) * xi;
  }
  return pre;
}

}  // namespace

Vector mlp_forward(const MlpParams& p, const Vector& x) {
  if (static_cast<int>(x.size()) != p.in_dim()) throw Error("mlp_forward: dimension mismatch");
  Vector h = hidden_pre(p, x);
  for (double& v : h) v = v > 0.0 ? v : 0.0;
  Vector out = p.b2;
  for (int j = 0; j < p.hidden_dim(); ++j) {
    const double hj = h[j];
    if (hj == 0.0) continue;
    for (int k = 0; k < p.out_dim(); ++k) out[k] += p.w2(j, k) * hj;
  }
  return out;
}

MlpGrads mlp_grad(const MlpParams& p, const std::vector<const Vector*>& xs,
                  const std::vector<Vector>& upstream) {
  if (xs.size() != upstream.size()) throw Error("mlp_grad: batch size mismatch");
  if (xs.empty()) throw Error("mlp_grad: empty batch");
  const int d = p.in_dim();
  const int h = p.hidden_dim();
  const int o = p.out_dim();

  MlpGrads g;
  g.w1 = Matrix(d, h);
  g.b1.assign(h, 0.0);
  g.w2 = Matrix(h, o);
  g.b2.assign(o, 0.0);

  Vector dpre(h);
  for (size_t s = 0; s < xs.size(); ++s) {
    const Vector& x = *xs[s];
    const Vector& gz = upstream[s];
    const Vector pre = hidden_pre(p, x);
    for (int k = 0; k < o; ++k) g.b2[k] += gz[k];
    for (int j = 0; j < h; ++j) {
      double back = 0.0;
      if (pre[j] > 0.0) {
        for (int k = 0; k < o; ++k) {
          g.w2(j, k) += pre[j] * gz[k];
          back += p.w2(j, k) * gz[k];
        }
      }
      dpre[j] = back;
    }
    for (int i = 0; i < d; ++i) {
      const double xi = x[i];
      if (xi == 0.0) continue;
      for (int j = 0; j < h; ++j) g.w1(i, j) += xi * dpre[j];
    }
    for (int j = 0; j < h; ++j) g.b1[j] += dpre[j];
  }

  const double inv = 1.0 / static_cast<double>(xs.size());
  for (double& v : g.w1.data) v *= inv;
  for (double& v : g.b1) v *= inv;
  for (double& v : g.w2.data) v *= inv;
  for (double& v : g.b2) v *= inv;
  return g;
}

double cosine_lr(int t, int total, double lr0) {
  if (total < 1 || t < 0 || t >= total) throw Error("cosine_lr: epoch out of range");
  if (total == 1) return lr0;
  const double frac = static_cast<double>(t) / static_cast<double>(total - 1);
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

namespace {

struct Velocity {
  Matrix w1{0, 0};
  Vector b1;
  Matrix w2{0, 0};
  Vector b2;

  explicit Velocity(const MlpParams& p)
      : w1(p.w1.rows, p.w1.cols), b1(p.b1.size(), 0.0), w2(p.w2.rows, p.w2.cols),
        b2(p.b2.size(), 0.0) {}
};

void sgd_step(MlpParams& p, const MlpGrads& g, Velocity& v, double lr, double momentum) {
  auto update = [&](std::vector<double>& param, std::vector<double>& vel,
                    const std::vector<double>& grad) {
    for (size_t i = 0; i < param.size(); ++i) {
      vel[i] = momentum * vel[i] + grad[i];
      param[i] -= lr * vel[i];
    }
  };
  update(p.w1.data, v.w1.data, g.w1.data);
  update(p.b1, v.b1, g.b1);
  update(p.w2.data, v.w2.data, g.w2.data);
  update(p.b2, v.b2, g.b2);
}

struct Head {
  MlpParams* params;
  Vector adjustment;
  Velocity vel;
};

// Shared epoch loop: one shuffled batch schedule per epoch, applied to every
// head. Rng consumption is independent of the number of heads.
void run_sgd(std::vector<Head>& heads, const FeatureSet& data, const TrainConfig& cfg, int epochs,
             RngState& rng) {
  std::vector<int> order(data.records.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

  std::vector<const Vector*> xs;
  std::vector<Vector> upstream;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    const double lr = cosine_lr(epoch, epochs, cfg.lr0);
    rng.shuffle(order);
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t stop = std::min(order.size(), start + cfg.batch_size);
      for (auto& head : heads) {
        xs.clear();
        upstream.clear();
        for (size_t k = start; k < stop; ++k) {
          const FeatureRecord& r = data.records[order[k]];
          xs.push_back(&r.features);
          upstream.push_back(
              adjusted_loss_grad(mlp_forward(*head.params, r.features), r.label, head.adjustment));
        }
        const MlpGrads g = mlp_grad(*head.params, xs, upstream);
        sgd_step(*head.params, g, head.vel, lr, cfg.momentum);
      }
    }
  }
}

}  // namespace

std::vector<Expert> train_expert_group(const DomainTask& task, const TrainConfig& cfg,
                                       const std::vector<int>& alphas, RngState& rng) {
  validate(cfg);
  if (alphas.empty()) throw Error("train_expert_group: no adjustment exponents");
  if (task.train.records.empty()) throw Error("train_expert_group: empty task");

  const int d = task.train.d;
  const int h = d / 2;
  const int o = task.train.num_classes;
  const ClassPrior prior = class_prior(task.train.label_counts());

  std::vector<Expert> experts;
  experts.reserve(alphas.size());
  for (int alpha : alphas) {
    Expert e;
    e.alpha = alpha;
    e.task = task.index;
    e.prior = prior;
    e.params = init_mlp(rng, d, h, o);
    experts.push_back(std::move(e));
  }

  std::vector<Head> heads;
  heads.reserve(experts.size());
  for (auto& e : experts)
    heads.push_back(Head{&e.params, adjustment_vector(prior, e.alpha), Velocity(e.params)});
  run_sgd(heads, task.train, cfg, cfg.epochs_stage1, rng);
  return experts;
}

void train_inplace(MlpParams& params, const FeatureSet& data, const Vector& adjustment,
                   const TrainConfig& cfg, int epochs, RngState& rng) {
  validate(cfg);
  if (data.records.empty()) throw Error("train_inplace: empty data");
  std::vector<Head> heads;
  heads.push_back(Head{&params, adjustment, Velocity(params)});
  run_sgd(heads, data, cfg, epochs, rng);
}

Selector train_selector(const FeatureSet& synth, const std::vector<Expert>& pool,
                        const TrainConfig& cfg, RngState& rng, bool softmax_fusion) {
  validate(cfg);
  if (pool.empty()) throw Error("train_selector: empty expert pool");
  if (synth.records.empty()) throw Error("train_selector: empty synthetic set");

  const int d = synth.d;
  const int h = d / 2;
  const int o = static_cast<int>(pool.size());
  const int c = synth.num_classes;

  // Experts are frozen, so their logits per synthetic sample are constants.
  const size_t n = synth.records.size();
  std::vector<Vector> expert_logits(n);
  for (size_t s = 0; s < n; ++s) {
    expert_logits[s].reserve(static_cast<size_t>(o) * c);
    for (const auto& e : pool) {
      const Vector v = mlp_forward(e.params, synth.records[s].features);
      expert_logits[s].insert(expert_logits[s].end(), v.begin(), v.end());
    }
  }

  Selector sel;
  sel.params = init_mlp(rng, d, h, o);
  Velocity vel(sel.params);

  std::vector<int> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = static_cast<int>(i);

  std::vector<const Vector*> xs;
  std::vector<Vector> upstream;
  Vector fused(c), gz(c), a(o);
  for (int epoch = 0; epoch < cfg.epochs_stage2; ++epoch) {
    const double lr = cosine_lr(epoch, cfg.epochs_stage2, cfg.lr0);
    rng.shuffle(order);
    for (size_t start = 0; start < n; start += cfg.batch_size) {
      const size_t stop = std::min(n, start + static_cast<size_t>(cfg.batch_size));
      xs.clear();
      upstream.clear();
      for (size_t k = start; k < stop; ++k) {
        const FeatureRecord& r = synth.records[order[k]];
        const Vector& el = expert_logits[order[k]];
        const Vector u = mlp_forward(sel.params, r.features);
        const Vector w = softmax_fusion ? stable_softmax(u) : u;

        std::fill(fused.begin(), fused.end(), 0.0);
        for (int i = 0; i < o; ++i)
          for (int j = 0; j < c; ++j) fused[j] += w[i] * el[static_cast<size_t>(i) * c + j];

        gz = stable_softmax(fused);
        gz[r.label] -= 1.0;
        for (int i = 0; i < o; ++i) {
          double dot = 0.0;
          for (int j = 0; j < c; ++j) dot += el[static_cast<size_t>(i) * c + j] * gz[j];
          a[i] = dot;
        }

        Vector gu(o);
        if (softmax_fusion) {
          double wa = 0.0;
          for (int i = 0; i < o; ++i) wa += w[i] * a[i];
          for (int i = 0; i < o; ++i) gu[i] = w[i] * (a[i] - wa);
        } else {
          gu = a;
        }
        xs.push_back(&r.features);
        upstream.push_back(std::move(gu));
      }
      const MlpGrads g = mlp_grad(sel.params, xs, upstream);
      sgd_step(sel.params, g, vel, lr, cfg.momentum);
    }
  }
  return sel;
}

void write_params(std::ostream& os, const MlpParams& p) {
  binio::put_u32(os, static_cast<uint32_t>(p.in_dim()));
  binio::put_u32(os, static_cast<uint32_t>(p.hidden_dim()));
  binio::put_u32(os, static_cast<uint32_t>(p.out_dim()));
  for (double v : p.w1.data) binio::put_f64(os, v);
  for (double v : p.b1) binio::put_f64(os, v);
  for (double v : p.w2.data) binio::put_f64(os, v);
  for (double v : p.b2) binio::put_f64(os, v);
}

MlpParams read_params(std::istream& is) {
  uint32_t d = 0, h = 0, o = 0;
  if (!binio::get_u32(is, d) || !binio::get_u32(is, h) || !binio::get_u32(is, o))
    throw Error("truncated parameter block");
  MlpParams p;
  p.w1 = Matrix(static_cast<int>(d), static_cast<int>(h));
  p.b1.resize(h);
  p.w2 = Matrix(static_cast<int>(h), static_cast<int>(o));
  p.b2.resize(o);
  auto read_all = [&](std::vector<double>& v) {
    for (double& x : v)
      if (!binio::get_f64(is, x)) throw Error("truncated parameter block");
  };
  read_all(p.w1.data);
  read_all(p.b1);
  read_all(p.w2.data);
  read_all(p.b2);
  return p;
}

}  // namespace dce
