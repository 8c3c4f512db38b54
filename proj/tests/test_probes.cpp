#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "inflect/dataset.hpp"
#include "inflect/probes.hpp"
#include "inflect/task.hpp"

using namespace inflect;

namespace {

// Gaussian clusters at the given centers; labels follow the center index
// through `label_of`.
ProbeSplit clusters(const std::vector<std::pair<double, double>>& centers, const std::vector<int>& label_of,
                    double spread, Index n_train, Index n_val, std::uint64_t seed) {
  Rng rng(seed);
  ProbeSplit s;
  auto fill = [&](Matrix& x, std::vector<int>& y, Index n) {
    x.resize(n, 2);
    for (Index i = 0; i < n; ++i) {
      const std::size_t c = static_cast<std::size_t>(rng.below(centers.size()));
      x(i, 0) = centers[c].first + spread * rng.normal();
      x(i, 1) = centers[c].second + spread * rng.normal();
      y.push_back(label_of[c]);
    }
  };
  fill(s.train_x, s.train_y, n_train);
  fill(s.val_x, s.val_y, n_val);
  return s;
}

ProbeConfig mlp_config() {
  ProbeConfig c;
  c.kind = ProbeKind::mlp;
  c.epochs = 60;
  c.learning_rate = 1e-2;
  return c;
}

}  // namespace

TEST(Probe, SeparableBlobsAreLinearlyPerfect) {
  ProbeSplit s = clusters({{-3.0, -3.0}, {3.0, 3.0}}, {0, 1}, 0.5, 400, 200, 1);
  ProbeConfig c;
  c.epochs = 100;
  ProbeResult r = train_probe(s, c);
  EXPECT_EQ(r.train_accuracy, 1.0);
  EXPECT_EQ(r.val_accuracy, 1.0);
}

TEST(Probe, ShuffledLabelsAreAtChance) {
  ProbeSplit s = clusters({{-3.0, -3.0}, {3.0, 3.0}}, {0, 1}, 0.5, 1000, 1000, 2);
  Rng rng(3);
  rng.shuffle(s.train_y);
  rng.shuffle(s.val_y);
  ProbeResult r = train_probe(s, {});
  EXPECT_NEAR(r.val_accuracy, 0.5, 0.05);
}

TEST(Probe, XorSeparatesLinearFromMlp) {
  ProbeSplit s = clusters({{-2.0, -2.0}, {2.0, 2.0}, {-2.0, 2.0}, {2.0, -2.0}}, {0, 0, 1, 1}, 0.4, 1000, 500, 4);
  ProbeResult lin = train_probe(s, {});
  ProbeResult mlp = train_probe(s, mlp_config());
  EXPECT_LT(lin.val_accuracy, 0.6);
  EXPECT_GT(mlp.val_accuracy, 0.9);
}

TEST(Probe, DeterministicForFixedSeed) {
  ProbeSplit s = clusters({{-1.0, 0.0}, {1.0, 0.0}}, {0, 1}, 1.0, 300, 100, 5);
  ProbeResult a = train_probe(s, mlp_config());
  ProbeResult b = train_probe(s, mlp_config());
  EXPECT_TRUE(a.probe.w1 == b.probe.w1);
  EXPECT_EQ(a.val_accuracy, b.val_accuracy);
}

TEST(Probe, SingleClassIsInvalid) {
  ProbeSplit s = clusters({{0.0, 0.0}}, {1}, 1.0, 20, 10, 6);
  EXPECT_THROW(train_probe(s, {}), InvalidInput);
}

TEST(ProbeSweep, IdenticalLayersGiveIdenticalAccuracies) {
  ProbeSplit s = clusters({{-1.0, 0.0}, {1.0, 0.0}}, {0, 1}, 1.0, 300, 100, 7);
  const std::vector<Matrix> train(3, s.train_x), val(3, s.val_x);
  ProbeConfig mlp = mlp_config();
  mlp.epochs = 10;
  ProbeReport r = probe_sweep(train, s.train_y, val, s.val_y, {}, mlp);
  ASSERT_EQ(r.linear_accuracy.size(), 3u);
  for (std::size_t l = 1; l < 3; ++l) {
    EXPECT_EQ(r.linear_accuracy[l], r.linear_accuracy[0]);
    EXPECT_EQ(r.mlp_accuracy[l], r.mlp_accuracy[0]);
  }
  std::ostringstream out;
  write_probe_csv(out, r);
  EXPECT_EQ(out.str().rfind("layer,kind,accuracy,seed\n0,linear,", 0), 0u);
}

TEST(ProbeSweep, UntrainedModelIsNearChance) {
  TaskSpec spec;
  spec.source_train = 600;
  spec.source_val = 300;
  spec.target_train = 2;
  spec.target_val = 2;
  TaskData task = generate_task(spec);
  ModelConfig mc;
  mc.num_layers = 2;
  mc.d_model = 16;
  mc.d_ff = 32;
  mc.num_heads = 2;
  mc.max_seq_len = 16;
  Model model(mc, 8);
  const std::vector<Matrix> train = cls_representations(model, task.source_train);
  const std::vector<Matrix> val = cls_representations(model, task.source_val);
  ProbeReport r = probe_sweep(train, task.source_train.labels, val, task.source_val.labels, {}, mlp_config());
  // A random encoder is still a random feature map of the tokens, so a probe
  // recovers a little positional signal; it stays far from a trained model.
  for (std::size_t l = 0; l < 2; ++l) {
    EXPECT_LT(r.linear_accuracy[l], 0.65) << "layer " << l;
    EXPECT_LT(r.mlp_accuracy[l], 0.65) << "layer " << l;
  }
}
