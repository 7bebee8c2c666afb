#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <sstream>

#include "dce/model.hpp"
#include "doctest.h"

using namespace dce;

namespace {

// Two linearly separated blobs along the first axis.
DomainTask blob_task(int n0, int n1, double gap, double noise, int d, uint64_t seed) {
  DomainTask task;
  task.index = 1;
  task.train.d = d;
  task.train.num_classes = 2;
  RngState rng(seed);
  auto sample = [&](int label) {
    FeatureRecord r;
    r.label = label;
    r.features.assign(d, 0.0);
    r.features[0] = (label == 0 ? -gap : gap) + noise * rng.gaussian();
    for (int i = 1; i < d; ++i) r.features[i] = noise * rng.gaussian();
    return r;
  };
  for (int k = 0; k < n0; ++k) task.train.records.push_back(sample(0));
  for (int k = 0; k < n1; ++k) task.train.records.push_back(sample(1));
  task.class_counts = {n0, n1};

  task.test.d = d;
  task.test.num_classes = 2;
  for (int k = 0; k < 100; ++k) {
    task.test.records.push_back(sample(0));
    task.test.records.push_back(sample(1));
  }
  return task;
}

double accuracy(const MlpParams& params, const FeatureSet& set) {
  int64_t correct = 0;
  for (const auto& r : set.records) {
    const Vector v = mlp_forward(params, r.features);
    int best = 0;
    for (size_t i = 1; i < v.size(); ++i)
      if (v[i] > v[best]) best = static_cast<int>(i);
    if (best == r.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(set.records.size());
}

double class_recall(const MlpParams& params, const FeatureSet& set, int cls) {
  int64_t correct = 0, total = 0;
  for (const auto& r : set.records) {
    if (r.label != cls) continue;
    ++total;
    const Vector v = mlp_forward(params, r.features);
    int best = 0;
    for (size_t i = 1; i < v.size(); ++i)
      if (v[i] > v[best]) best = static_cast<int>(i);
    if (best == cls) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(total);
}

MlpParams constant_head(int d, int h, const Vector& logits) {
  MlpParams p;
  p.w1 = Matrix(d, h);
  p.b1.assign(h, 0.0);
  p.w2 = Matrix(h, static_cast<int>(logits.size()));
  p.b2 = logits;
  return p;
}

}  // namespace

TEST_CASE("train config validation") {
  CHECK_NOTHROW(validate(TrainConfig{}));
  TrainConfig bad;
  bad.lr0 = 0.0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = TrainConfig{};
  bad.momentum = 1.0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = TrainConfig{};
  bad.batch_size = 0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = TrainConfig{};
  bad.epochs_stage2 = 0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("initialization respects fan-in bounds and zero biases") {
  RngState rng(50);
  const MlpParams p = init_mlp(rng, 4, 2, 3);
  CHECK_EQ(p.in_dim(), 4);
  CHECK_EQ(p.hidden_dim(), 2);
  CHECK_EQ(p.out_dim(), 3);

  const double bound1 = std::sqrt(6.0 / 4.0);
  for (double v : p.w1.data) {
    CHECK_GE(v, -bound1);
    CHECK_LE(v, bound1);
  }
  const double bound2 = std::sqrt(6.0 / 2.0);
  for (double v : p.w2.data) {
    CHECK_GE(v, -bound2);
    CHECK_LE(v, bound2);
  }
  for (double v : p.b1) CHECK_EQ(v, 0.0);
  for (double v : p.b2) CHECK_EQ(v, 0.0);

  RngState a(51), b(51);
  const MlpParams pa = init_mlp(a, 6, 3, 4);
  const MlpParams pb = init_mlp(b, 6, 3, 4);
  CHECK_EQ(pa.w1.data, pb.w1.data);
  CHECK_EQ(pa.w2.data, pb.w2.data);

  // Exactly d*h + h*o uniforms are consumed.
  RngState c(52), dref(52);
  init_mlp(c, 6, 3, 4);
  for (int i = 0; i < 6 * 3 + 3 * 4; ++i) dref.uniform01();
  CHECK_EQ(c.next_u64(), dref.next_u64());

  CHECK_THROWS_AS(init_mlp(rng, 0, 2, 3), Error);
}

TEST_CASE("forward pass matches hand computation") {
  // Zero weights pass the output bias through.
  const MlpParams passthrough = constant_head(3, 2, {1.0, 2.0});
  CHECK_EQ(mlp_forward(passthrough, {5.0, -1.0, 0.5}), Vector{1.0, 2.0});

  // Negative hidden pre-activations die under relu.
  MlpParams dead = constant_head(2, 2, {0.25, -0.75});
  dead.b1 = {-1.0, -2.0};
  for (double& v : dead.w2.data) v = 3.0;
  CHECK_EQ(mlp_forward(dead, {0.0, 0.0}), Vector{0.25, -0.75});

  // One active hidden unit: h = relu(1*2 + 0.5) = 2.5, out = w2^T h + b2.
  MlpParams tiny;
  tiny.w1 = Matrix(1, 1);
  tiny.w1(0, 0) = 1.0;
  tiny.b1 = {0.5};
  tiny.w2 = Matrix(1, 2);
  tiny.w2(0, 0) = 2.0;
  tiny.w2(0, 1) = -1.0;
  tiny.b2 = {0.0, 1.0};
  const Vector out = mlp_forward(tiny, {2.0});
  CHECK_EQ(out[0], doctest::Approx(5.0).epsilon(1e-15));
  CHECK_EQ(out[1], doctest::Approx(-1.5).epsilon(1e-15));

  CHECK_THROWS_AS(mlp_forward(tiny, {1.0, 2.0}), Error);
}

TEST_CASE("zero upstream gradient produces zero parameter gradients") {
  RngState rng(53);
  const MlpParams p = init_mlp(rng, 4, 2, 3);
  const Vector x{0.3, -0.2, 1.0, 0.7};
  const MlpGrads g = mlp_grad(p, {&x}, {Vector(3, 0.0)});
  for (double v : g.w1.data) CHECK_EQ(v, 0.0);
  for (double v : g.b1) CHECK_EQ(v, 0.0);
  for (double v : g.w2.data) CHECK_EQ(v, 0.0);
  for (double v : g.b2) CHECK_EQ(v, 0.0);
}

TEST_CASE("backprop matches finite differences of the composed loss") {
  RngState rng(54);
  const double h = 1e-5;
  for (int trial = 0; trial < 20; ++trial) {
    MlpParams p = init_mlp(rng, 5, 2, 4);
    Vector x(5);
    for (double& v : x) v = rng.uniform(-2.0, 2.0);
    const int y = static_cast<int>(rng.uniform_index(4));
    const Vector adj(4, 0.0);

    const Vector upstream = adjusted_loss_grad(mlp_forward(p, x), y, adj);
    const MlpGrads g = mlp_grad(p, {&x}, {upstream});

    auto loss_at = [&](MlpParams& q) { return adjusted_loss(mlp_forward(q, x), y, adj); };
    auto check_block = [&](std::vector<double>& param, const std::vector<double>& grad) {
      for (size_t i = 0; i < param.size(); ++i) {
        const double keep = param[i];
        param[i] = keep + h;
        const double up = loss_at(p);
        param[i] = keep - h;
        const double down = loss_at(p);
        param[i] = keep;
        const double fd = (up - down) / (2.0 * h);
        const double denom = std::max({std::abs(fd), std::abs(grad[i]), 1e-6});
        CHECK_LT(std::abs(fd - grad[i]) / denom, 1e-4);
      }
    };
    check_block(p.w1.data, g.w1.data);
    check_block(p.b1, g.b1);
    check_block(p.w2.data, g.w2.data);
    check_block(p.b2, g.b2);
  }
}

TEST_CASE("batch gradient is the mean of per-sample gradients") {
  RngState rng(55);
  const MlpParams p = init_mlp(rng, 4, 2, 3);
  std::vector<Vector> xs(6, Vector(4));
  std::vector<Vector> ups(6, Vector(3));
  for (auto& x : xs)
    for (double& v : x) v = rng.uniform(-1.0, 1.0);
  for (auto& u : ups)
    for (double& v : u) v = rng.uniform(-1.0, 1.0);

  std::vector<const Vector*> xptr;
  for (const auto& x : xs) xptr.push_back(&x);
  const MlpGrads batch = mlp_grad(p, xptr, ups);

  MlpGrads mean;
  mean.w1 = Matrix(4, 2);
  mean.b1.assign(2, 0.0);
  mean.w2 = Matrix(2, 3);
  mean.b2.assign(3, 0.0);
  for (size_t s = 0; s < xs.size(); ++s) {
    const MlpGrads g = mlp_grad(p, {&xs[s]}, {ups[s]});
    for (size_t k = 0; k < mean.w1.data.size(); ++k) mean.w1.data[k] += g.w1.data[k] / 6.0;
    for (size_t k = 0; k < mean.b1.size(); ++k) mean.b1[k] += g.b1[k] / 6.0;
    for (size_t k = 0; k < mean.w2.data.size(); ++k) mean.w2.data[k] += g.w2.data[k] / 6.0;
    for (size_t k = 0; k < mean.b2.size(); ++k) mean.b2[k] += g.b2[k] / 6.0;
  }
  for (size_t k = 0; k < mean.w1.data.size(); ++k)
    CHECK_EQ(batch.w1.data[k], doctest::Approx(mean.w1.data[k]).epsilon(1e-12));
  for (size_t k = 0; k < mean.b2.size(); ++k)
    CHECK_EQ(batch.b2[k], doctest::Approx(mean.b2[k]).epsilon(1e-12));
}

TEST_CASE("cosine schedule hits its endpoints exactly") {
  CHECK_EQ(cosine_lr(0, 20, 0.01), 0.01);
  CHECK_EQ(cosine_lr(19, 20, 0.01), doctest::Approx(0.0).scale(1.0).epsilon(1e-17));
  CHECK_EQ(cosine_lr(5, 11, 0.02), doctest::Approx(0.01).epsilon(1e-14));
  CHECK_EQ(cosine_lr(0, 1, 0.5), 0.5);
  CHECK_THROWS_AS(cosine_lr(20, 20, 0.01), Error);
  CHECK_THROWS_AS(cosine_lr(-1, 20, 0.01), Error);
}

TEST_CASE("an alpha 0 expert fits a separable toy task") {
  const DomainTask task = blob_task(100, 100, 3.0, 0.5, 4, 60);
  TrainConfig cfg;
  cfg.seed = 60;
  RngState rng(60);
  const std::vector<Expert> experts = train_expert_group(task, cfg, {0}, rng);
  REQUIRE_EQ(experts.size(), 1);
  CHECK_EQ(experts[0].alpha, 0);
  CHECK_EQ(experts[0].task, 1);
  CHECK_EQ(experts[0].prior.p[0], doctest::Approx(0.5).epsilon(1e-12));
  CHECK_GE(accuracy(experts[0].params, task.train), 0.99);
}

TEST_CASE("expert group training is deterministic under a fixed seed") {
  const DomainTask task = blob_task(60, 40, 2.0, 1.0, 4, 61);
  TrainConfig cfg;
  RngState a(61), b(61);
  const auto ga = train_expert_group(task, cfg, {0, 1, 2}, a);
  const auto gb = train_expert_group(task, cfg, {0, 1, 2}, b);
  REQUIRE_EQ(ga.size(), 3);
  for (size_t i = 0; i < 3; ++i) {
    CHECK_EQ(ga[i].params.w1.data, gb[i].params.w1.data);
    CHECK_EQ(ga[i].params.b1, gb[i].params.b1);
    CHECK_EQ(ga[i].params.w2.data, gb[i].params.w2.data);
    CHECK_EQ(ga[i].params.b2, gb[i].params.b2);
    CHECK_EQ(ga[i].alpha, std::vector<int>({0, 1, 2})[i]);
  }

  CHECK_THROWS_AS(train_expert_group(task, cfg, {}, a), Error);
  DomainTask empty;
  empty.train.d = 4;
  empty.train.num_classes = 2;
  CHECK_THROWS_AS(train_expert_group(empty, cfg, {0}, a), Error);
}

TEST_CASE("fresh init plus in-place training equals a one-expert group") {
  const DomainTask task = blob_task(80, 50, 2.5, 0.8, 6, 62);
  TrainConfig cfg;

  RngState a(62);
  const auto group = train_expert_group(task, cfg, {0}, a);

  RngState b(62);
  MlpParams params = init_mlp(b, 6, 3, 2);
  train_inplace(params, task.train, Vector(2, 0.0), cfg, cfg.epochs_stage1, b);

  CHECK_EQ(params.w1.data, group[0].params.w1.data);
  CHECK_EQ(params.b1, group[0].params.b1);
  CHECK_EQ(params.w2.data, group[0].params.w2.data);
  CHECK_EQ(params.b2, group[0].params.b2);
}

TEST_CASE("inverse-distribution training lifts minority recall on a 95:5 toy") {
  double recall_a0 = 0.0, recall_a2 = 0.0;
  for (uint64_t seed = 1; seed <= 5; ++seed) {
    const DomainTask task = blob_task(190, 10, 1.0, 1.5, 4, 100 + seed);
    TrainConfig cfg;
    RngState rng(seed);
    const auto experts = train_expert_group(task, cfg, {0, 2}, rng);
    recall_a0 += class_recall(experts[0].params, task.test, 1);
    recall_a2 += class_recall(experts[1].params, task.test, 1);
  }
  CHECK_GE(recall_a2 / 5.0, recall_a0 / 5.0);
}

TEST_CASE("selector learns to route regions to the right expert") {
  // Expert A always answers class 0, expert B always class 1.
  std::vector<Expert> pool(2);
  pool[0].params = constant_head(4, 2, {5.0, 0.0});
  pool[1].params = constant_head(4, 2, {0.0, 5.0});

  FeatureSet synth;
  synth.d = 4;
  synth.num_classes = 2;
  RngState data_rng(70);
  for (int k = 0; k < 400; ++k) {
    FeatureRecord r;
    r.label = k % 2;
    r.features.assign(4, 0.0);
    r.features[0] = (r.label == 0 ? -2.0 : 2.0) + 0.3 * data_rng.gaussian();
    synth.records.push_back(std::move(r));
  }

  TrainConfig cfg;
  cfg.epochs_stage2 = 30;
  cfg.lr0 = 0.05;
  RngState rng(71);
  const Selector sel = train_selector(synth, pool, cfg, rng, true);
  CHECK_EQ(sel.params.out_dim(), 2);

  int routed = 0;
  const int probes = 100;
  RngState probe_rng(72);
  for (int k = 0; k < probes; ++k) {
    const int label = k % 2;
    Vector x(4, 0.0);
    x[0] = (label == 0 ? -2.0 : 2.0) + 0.3 * probe_rng.gaussian();
    const Vector w = stable_softmax(mlp_forward(sel.params, x));
    if (w[label] > 0.8) ++routed;
  }
  CHECK_GT(static_cast<double>(routed) / probes, 0.8);
}

TEST_CASE("selector output dimension tracks the pool size") {
  std::vector<Expert> pool(6);
  for (auto& e : pool) e.params = constant_head(4, 2, {1.0, 0.0});
  FeatureSet synth;
  synth.d = 4;
  synth.num_classes = 2;
  for (int k = 0; k < 50; ++k) synth.records.push_back({k % 2, Vector{0.1, 0.2, 0.3, 0.4}});

  TrainConfig cfg;
  RngState rng(73);
  const Selector sel = train_selector(synth, pool, cfg, rng, true);
  CHECK_EQ(sel.params.out_dim(), 6);

  CHECK_THROWS_AS(train_selector(synth, {}, cfg, rng, true), Error);
  FeatureSet empty;
  empty.d = 4;
  empty.num_classes = 2;
  CHECK_THROWS_AS(train_selector(empty, pool, cfg, rng, true), Error);
}

TEST_CASE("identical experts make the fused loss equal single-expert loss") {
  // With softmax weights summing to 1, mixing identical logits returns the
  // same logits no matter what the selector does.
  std::vector<Expert> pool(3);
  for (auto& e : pool) e.params = constant_head(3, 1, {2.0, -1.0, 0.5});

  FeatureSet synth;
  synth.d = 3;
  synth.num_classes = 3;
  for (int k = 0; k < 30; ++k) synth.records.push_back({k % 3, Vector{0.5, -0.5, 1.0}});

  TrainConfig cfg;
  RngState rng(74);
  const Selector sel = train_selector(synth, pool, cfg, rng, true);

  const Vector x{0.5, -0.5, 1.0};
  const Vector w = stable_softmax(mlp_forward(sel.params, x));
  Vector fused(3, 0.0);
  for (int i = 0; i < 3; ++i) {
    const Vector v = mlp_forward(pool[i].params, x);
    for (int j = 0; j < 3; ++j) fused[j] += w[i] * v[j];
  }
  const Vector single = mlp_forward(pool[0].params, x);
  for (int j = 0; j < 3; ++j) CHECK_EQ(fused[j], doctest::Approx(single[j]).epsilon(1e-12));
}

TEST_CASE("parameter blocks serialize bit-exactly") {
  RngState rng(75);
  const MlpParams p = init_mlp(rng, 5, 2, 4);
  std::stringstream ss;
  write_params(ss, p);
  const MlpParams q = read_params(ss);
  CHECK_EQ(q.w1.data, p.w1.data);
  CHECK_EQ(q.b1, p.b1);
  CHECK_EQ(q.w2.data, p.w2.data);
  CHECK_EQ(q.b2, p.b2);

  std::stringstream truncated(ss.str().substr(0, 20));
  CHECK_THROWS_AS(read_params(truncated), Error);
}
