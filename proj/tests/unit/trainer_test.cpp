#include "attnlab/counterexample.hpp"
#include "attnlab/errors.hpp"
#include "attnlab/trainer.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>

using namespace attnlab;

namespace {

Instance thm1_instance() {
  GenSpec g;
  g.dims = {1, 3, 6, 4, 1};
  g.scale_q = g.scale_k = 2.0;
  g.target = Target::Thm1;
  return generate(g);
}

TrainTrace constant_trace(int steps, double loss) {
  TrainTrace t;
  for (int s = 0; s < steps; ++s) {
    TraceRow r;
    r.step = s;
    r.loss = loss;
    t.rows.push_back(r);
  }
  return t;
}

bool bitwise_equal(const Mat& a, const Mat& b) {
  return a.rows() == b.rows() && a.cols() == b.cols() &&
         std::memcmp(a.data(), b.data(), sizeof(double) * a.size()) == 0;
}

}  // namespace

TEST(Trainer, ValueOnlyReachesLeastSquaresOptimum) {
  const Instance inst = thm1_instance();
  EXPECT_LT(oracle::value_only_optimum(KernelKind::Softmax, inst.params, inst.batch), 1e-20);
  TrainConfig cfg;
  const TrainResult res = gd_train(cfg, inst.params, inst.batch);
  EXPECT_LE(res.trace.final_loss(), 1e-10);
  EXPECT_EQ(res.trace.stop_reason, "stop_loss");
  EXPECT_TRUE(verify_monotone(res.trace));
}

TEST(Trainer, ValueOnlyOnNarrowInstanceApproachesResidualFloor) {
  // H·D < N·n: the least-squares optimum is positive.
  const auto inst = oracle::random_instance({2, 3, 2, 2, 1}, 3, KernelKind::Softmax, 1.0);
  const double floor = oracle::value_only_optimum(KernelKind::Softmax, inst.params, inst.batch);
  ASSERT_GT(floor, 1e-3);
  TrainConfig cfg;
  cfg.step_rule = StepRule::Analytic;
  cfg.max_steps = 20000;
  const TrainResult res = gd_train(cfg, inst.params, inst.batch);
  EXPECT_GE(res.trace.final_loss(), floor * (1 - 1e-12));
  EXPECT_NEAR(res.trace.final_loss(), floor, 1e-6 * floor);
}

TEST(Trainer, AnalyticStepRuleMatchesExactHessian) {
  const Instance inst = thm1_instance();
  const double g = value_only_lipschitz(KernelKind::Softmax, inst.params, inst.batch);
  // Hessian of the W^V-only quadratic is JᵀJ with J the value design matrix.
  const Dims& dm = inst.params.dims;
  Mat design(dm.rows(), dm.D * dm.d);
  for (int c = 0; c < dm.d; ++c) {
    for (int e = 0; e < dm.D; ++e) {
      ModelParams unit = inst.params;
      unit.wv[0].setZero();
      unit.wv[0](e, c) = 1.0;
      design.col(c * dm.D + e) = oracle::naive_forward(KernelKind::Softmax, unit, inst.batch);
    }
  }
  const double want = oracle::jacobi_eigenvalues(design * design.transpose())(0);
  EXPECT_NEAR(g, want, 1e-10 * want);
  const LipschitzEstimate est = estimate_gradient_lipschitz(
      KernelKind::Softmax, inst.params, inst.batch, VariableSet::only(Group::V), 0);
  EXPECT_LE(est.value, want * (1 + 1e-6));
  EXPECT_GE(est.power, 0.99 * want);
}

TEST(Trainer, EmptyVariableSetKeepsLossConstant) {
  const Instance inst = thm1_instance();
  TrainConfig cfg;
  cfg.vars = VariableSet{};
  cfg.max_steps = 5;
  const TrainResult res = gd_train(cfg, inst.params, inst.batch);
  ASSERT_EQ(res.trace.rows.size(), 6u);
  for (const auto& r : res.trace.rows) EXPECT_EQ(r.loss, res.trace.initial_loss());
  EXPECT_TRUE(res.trace.eta_fallback);
  EXPECT_TRUE(std::isnan(res.trace.rows[0].grad_q));
}

TEST(Trainer, CounterexampleQueryOnlyIsFrozen) {
  const Mat wq = (Mat(2, 2) << 0.3, -0.2, 0.5, 0.1).finished();
  const Mat wk = (Mat(2, 2) << -0.4, 0.2, 0.1, 0.6).finished();
  const auto ce = build_counterexample(1.0, Vec::Zero(2), wq, wk);
  TrainConfig cfg;
  cfg.vars = VariableSet::only(Group::Q);
  cfg.max_steps = 50;
  const TrainResult res = gd_train(cfg, ce.params, ce.batch);
  EXPECT_LE(res.trace.rows[0].grad_q, 1e-10);
  for (const auto& r : res.trace.rows) EXPECT_NEAR(r.loss, 9.0, 1e-12);
  const DescentVerdict d = verify_descent(res.trace, 0.5 * res.trace.eta);
  EXPECT_TRUE(d.ok);
}

TEST(Trainer, OutputProjectionIsNeverTouched) {
  const auto inst = oracle::random_instance({2, 2, 3, 2, 2}, 4, KernelKind::Gaussian);
  TrainConfig cfg;
  cfg.kind = KernelKind::Gaussian;
  cfg.vars = VariableSet::all();
  cfg.max_steps = 20;
  const TrainResult res = gd_train(cfg, inst.params, inst.batch);
  EXPECT_TRUE(bitwise_equal(res.params.wo, inst.params.wo));
  EXPECT_FALSE(bitwise_equal(res.params.wq[0], inst.params.wq[0]));
}

TEST(Trainer, RunsAreBitwiseDeterministic) {
  const auto inst = oracle::random_instance({2, 3, 4, 2, 2}, 5, KernelKind::Softmax);
  TrainConfig cfg;
  cfg.vars = VariableSet::all();
  cfg.max_steps = 30;
  cfg.seed = 17;
  const TrainResult a = gd_train(cfg, inst.params, inst.batch);
  const TrainResult b = gd_train(cfg, inst.params, inst.batch);
  ASSERT_EQ(a.trace.rows.size(), b.trace.rows.size());
  EXPECT_EQ(std::memcmp(&a.trace.eta, &b.trace.eta, sizeof(double)), 0);
  for (std::size_t t = 0; t < a.trace.rows.size(); ++t) {
    EXPECT_EQ(std::memcmp(&a.trace.rows[t].loss, &b.trace.rows[t].loss, sizeof(double)), 0);
  }
  for (int h = 0; h < 2; ++h) EXPECT_TRUE(bitwise_equal(a.params.wk[h], b.params.wk[h]));
}

TEST(Trainer, AutoStepDescendsMonotonically) {
  const VariableSet sets[] = {VariableSet::only(Group::Q), VariableSet::only(Group::K),
                              VariableSet::only(Group::V), VariableSet{true, true, false},
                              VariableSet::all()};
  for (KernelKind kind : {KernelKind::Softmax, KernelKind::Gaussian}) {
    for (std::uint64_t seed = 0; seed < 4; ++seed) {
      const auto inst =
          oracle::random_instance(oracle::random_small_dims(seed + 600), seed, kind, 0.7);
      for (VariableSet vars : sets) {
        TrainConfig cfg;
        cfg.kind = kind;
        cfg.vars = vars;
        cfg.max_steps = 100;
        cfg.monitor_every = 50;
        const TrainResult res = gd_train(cfg, inst.params, inst.batch);
        EXPECT_TRUE(verify_monotone(res.trace))
            << to_string(kind) << " seed " << seed << " vars " << vars.str();
        if (res.trace.rows.front().grad_sq > 0.0) {
          EXPECT_LT(res.trace.final_loss(), res.trace.initial_loss());
        } else {
          // One token per sample under Softmax: attention is constant.
          EXPECT_TRUE(res.trace.eta_fallback);
          EXPECT_EQ(res.trace.final_loss(), res.trace.initial_loss());
        }
      }
    }
  }
}

TEST(Trainer, DivergenceReportsStepAndEta) {
  const Instance inst = thm1_instance();
  TrainConfig cfg;
  cfg.eta = 1e6;
  try {
    gd_train(cfg, inst.params, inst.batch);
    FAIL() << "expected divergence";
  } catch (const NumericalError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("step"), std::string::npos) << msg;
    EXPECT_NE(msg.find("eta=1e+06"), std::string::npos) << msg;
  }
}

TEST(Trainer, ConfigValidation) {
  const Instance inst = thm1_instance();
  TrainConfig cfg;
  cfg.eta = -1.0;
  EXPECT_THROW(gd_train(cfg, inst.params, inst.batch), ConfigError);
  cfg = {};
  cfg.max_steps = 0;
  EXPECT_THROW(gd_train(cfg, inst.params, inst.batch), ConfigError);
  cfg = {};
  cfg.vars = VariableSet::all();
  cfg.step_rule = StepRule::Analytic;
  EXPECT_THROW(gd_train(cfg, inst.params, inst.batch), ConfigError);
}

TEST(Trainer, MonitorCadence) {
  const Instance inst = thm1_instance();
  TrainConfig cfg;
  cfg.max_steps = 10;
  cfg.stop_loss = 0.0;
  cfg.monitor_every = 4;
  const TrainResult res = gd_train(cfg, inst.params, inst.batch);
  ASSERT_EQ(res.trace.rows.size(), 11u);
  for (const auto& r : res.trace.rows) {
    const bool want = r.step % 4 == 0 || r.step == 10;
    EXPECT_EQ(r.monitored, want) << r.step;
    EXPECT_EQ(std::isnan(r.sigma_min_b), !want);
  }
}

TEST(Trainer, RateVerifierOnConstantTraceFails) {
  const RateVerdict v = verify_geometric_rate(constant_trace(5, 2.0), 0.1, 1.0);
  EXPECT_FALSE(v.ok);
  EXPECT_EQ(v.worst_ratio, 1.0);
}

TEST(Trainer, RateVerifierSkipsStepsAtZeroLoss) {
  TrainTrace t = constant_trace(4, 0.0);
  t.rows[0].loss = 1.0;
  t.rows[1].loss = 0.5;
  const RateVerdict v = verify_geometric_rate(t, 0.4, 1.0);
  EXPECT_TRUE(v.ok);
  EXPECT_EQ(v.worst_step, 0);
}

TEST(Trainer, RateVerifierRejectsInvalidRate) {
  EXPECT_THROW(verify_geometric_rate(constant_trace(2, 1.0), 2.0, 1.0), ConfigError);
  EXPECT_THROW(verify_geometric_rate(constant_trace(2, 1.0), 0.0, 1.0), ConfigError);
  EXPECT_THROW(verify_geometric_rate(TrainTrace{}, 0.5, 1.0), ConfigError);
}

TEST(Trainer, DescentSingleStep) {
  TrainTrace t = constant_trace(2, 1.0);
  t.rows[0].grad_sq = 4.0;
  t.rows[1].loss = 0.5;
  EXPECT_TRUE(verify_descent(t, 0.125).ok);
  EXPECT_FALSE(verify_descent(t, 0.25).ok);
}

TEST(Trainer, FlattenRoundTrip) {
  const auto inst = oracle::random_instance({1, 2, 3, 2, 2}, 6, KernelKind::Softmax);
  const VariableSet qv{true, false, true};
  const Vec flat = flatten(inst.params, qv);
  ASSERT_EQ(flat.size(), 2 * 2 * 6);
  EXPECT_EQ(flat.segment(6, 6), num::vec(inst.params.wq[1]));
  EXPECT_EQ(flat.segment(12, 6), num::vec(inst.params.wv[0]));
  ModelParams p = inst.params;
  add_flat(p, qv, flat);
  EXPECT_EQ(p.wv[1], 2.0 * inst.params.wv[1]);
  EXPECT_EQ(p.wk[0], inst.params.wk[0]);
}
