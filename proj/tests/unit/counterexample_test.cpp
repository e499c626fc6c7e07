#include "attnlab/counterexample.hpp"
#include "attnlab/errors.hpp"
#include "attnlab/trainer.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace attnlab;

namespace {

Mat draw(std::mt19937_64& rng, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  Mat m(2, 2);
  for (int i = 0; i < 4; ++i) m.data()[i] = normal(rng);
  return m;
}

}  // namespace

TEST(Counterexample, CanonicalInstance) {
  std::mt19937_64 rng(1);
  const auto inst = build_counterexample(1.0, Vec::Zero(2), draw(rng, 1.0), draw(rng, 1.0));
  const CounterexampleReport rep = verify_counterexample(inst);
  EXPECT_NEAR(rep.loss, 9.0, 1e-12);
  EXPECT_NEAR(rep.prediction(0), 3.0, 1e-12);
  EXPECT_NEAR(rep.prediction(1), 3.0, 1e-12);
  EXPECT_LE(rep.grad_wq_norm, 1e-12);
  EXPECT_LE(rep.grad_wk_norm, 1e-12);
  EXPECT_LE(rep.fd_wq_norm, 1e-7);
  EXPECT_LE(rep.fd_wk_norm, 1e-7);
  EXPECT_TRUE(rep.pass);
  EXPECT_EQ(inst.batch.x, Mat::Identity(2, 2));
  EXPECT_EQ(inst.params.wo, Vec::Constant(2, 1.0));
}

TEST(Counterexample, LMatrixHasEqualRowEntries) {
  std::mt19937_64 rng(2);
  const auto inst = build_counterexample(2.0, Vec::Zero(2), draw(rng, 1.0), draw(rng, 1.0));
  EXPECT_LE(verify_counterexample(inst).l_row_gap, 1e-12);
  EXPECT_GT(inst.l_matrix.norm(), 1.0);
}

TEST(Counterexample, StationarityFamily) {
  std::mt19937_64 rng(3);
  for (double a : {0.5, 1.0, 2.0}) {
    for (int draw_idx = 0; draw_idx < 10; ++draw_idx) {
      Vec y(2);
      y << std::normal_distribution<double>(0.0, 2.0)(rng), -1.0;
      const auto inst = build_counterexample(a, y, draw(rng, 1.0), draw(rng, 1.0));
      const CounterexampleReport rep = verify_counterexample(inst);
      EXPECT_LE(rep.grad_wq_norm, 1e-12);
      EXPECT_LE(rep.grad_wk_norm, 1e-12);
      EXPECT_NEAR(rep.loss, 0.5 * (Vec::Constant(2, 3.0) - y).squaredNorm(), 1e-12 * rep.loss);
    }
  }
}

TEST(Counterexample, PredictionIndependentOfScale) {
  std::mt19937_64 rng(4);
  const Mat wq = draw(rng, 1.0), wk = draw(rng, 1.0);
  const auto one = verify_counterexample(build_counterexample(1.0, Vec::Zero(2), wq, wk));
  const auto two = verify_counterexample(build_counterexample(2.0, Vec::Zero(2), wq, wk));
  EXPECT_NEAR((one.prediction - two.prediction).norm(), 0.0, 1e-12);
}

TEST(Counterexample, NearOptimalLabels) {
  const double eps = 1e-3;
  Vec y(2);
  y << 3.0, 3.0 - eps;
  const auto inst = build_counterexample(1.0, y, Mat::Identity(2, 2), -Mat::Identity(2, 2));
  const CounterexampleReport rep = verify_counterexample(inst);
  EXPECT_NEAR(rep.loss, 0.5 * eps * eps, 1e-15);
  EXPECT_LE(rep.grad_wq_norm, 1e-12);
}

TEST(Counterexample, OptimalLabelsAreVacuous) {
  EXPECT_THROW(build_counterexample(1.0, Vec::Constant(2, 3.0), Mat::Zero(2, 2), Mat::Zero(2, 2)),
               HypothesisError);
  EXPECT_THROW(build_counterexample(0.0, Vec::Zero(2), Mat::Zero(2, 2), Mat::Zero(2, 2)),
               ConfigError);
  EXPECT_THROW(build_counterexample(1.0, Vec::Zero(2), Mat::Zero(3, 2), Mat::Zero(2, 2)),
               ConfigError);
}

TEST(Counterexample, GaussianKernelHasNonzeroGradient) {
  std::mt19937_64 rng(5);
  for (int k = 0; k < 5; ++k) {
    const auto inst = build_counterexample(1.0, Vec::Zero(2), draw(rng, 1.0), draw(rng, 1.0));
    EXPECT_GT(verify_counterexample(inst).gaussian_grad_wq_norm, 1e-6);
  }
}

TEST(Counterexample, GradientDescentMakesNoProgress) {
  std::mt19937_64 rng(6);
  const auto inst = build_counterexample(1.0, Vec::Zero(2), draw(rng, 0.1), draw(rng, 0.1));
  TrainConfig cfg;
  cfg.vars = VariableSet{true, true, false};
  cfg.max_steps = 1000;
  cfg.stop_loss = 0.0;
  cfg.monitor_every = 1000;
  const TrainResult res = gd_train(cfg, inst.params, inst.batch);
  for (const auto& r : res.trace.rows) EXPECT_LE(std::abs(r.loss - 9.0), 1e-9);
}

TEST(Counterexample, InitializationVerdictIsReported) {
  const auto inst = build_counterexample(1.0, Vec::Zero(2), 0.1 * Mat::Identity(2, 2),
                                         0.1 * Mat::Identity(2, 2));
  const CounterexampleReport rep = verify_counterexample(inst);
  EXPECT_GT(rep.conditions.delta[0], 0.0);
  EXPECT_TRUE(std::isfinite(rep.conditions.thm3_lhs));
}
