#include "attnlab/errors.hpp"
#include "attnlab/gradients.hpp"
#include "attnlab/cli_io.hpp"
#include "oracles.hpp"

#include <gtest/gtest.h>

using namespace attnlab;

namespace {

const KernelKind kKinds[] = {KernelKind::Softmax, KernelKind::Gaussian};
const Group kGroups[] = {Group::Q, Group::K, Group::V};

Vec residual_of(KernelKind kind, const Instance& inst) {
  return forward(kind, inst.params, inst.batch) - inst.batch.y;
}

}  // namespace

TEST(Gradients, ClosedFormMatchesFiniteDifferences) {
  for (KernelKind kind : kKinds) {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
      const auto inst = oracle::random_instance(oracle::random_small_dims(seed), seed, kind);
      const GradientBundle g = assemble_bundle(kind, inst.params, inst.batch, VariableSet::all());
      for (Group grp : kGroups) {
        for (int h = 0; h < inst.params.dims.H; ++h) {
          const Mat fd = fd_gradient(kind, inst.params, inst.batch, grp, h);
          EXPECT_LE(relative_error(g.group(grp)[h], fd), 1e-6)
              << to_string(kind) << " seed " << seed << " group " << to_string(grp);
        }
      }
    }
  }
}

TEST(Gradients, SoftmaxScoreGradientRowsSumToZero) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inst = oracle::random_instance(oracle::random_small_dims(seed + 100), seed,
                                              KernelKind::Softmax, 1.5);
    const AttentionState st = scores(KernelKind::Softmax, inst.params, inst.batch);
    const Vec r = predict(st, inst.params) - inst.batch.y;
    const CGradient cg = grad_c(st, r, inst.params);
    const int n = inst.params.dims.n;
    for (const Mat& dc : cg.dc) {
      for (int h = 0; h < inst.params.dims.H; ++h) {
        const Vec rows = dc.middleCols(h * n, n).rowwise().sum();
        EXPECT_LT(rows.cwiseAbs().maxCoeff(), 1e-10);
      }
    }
  }
}

TEST(Gradients, SoftmaxRowCenteredFormEqualsBlockMatrixForm) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto inst =
        oracle::random_instance(oracle::random_small_dims(seed + 200), seed, KernelKind::Softmax);
    const AttentionState st = scores(KernelKind::Softmax, inst.params, inst.batch);
    const Vec r = predict(st, inst.params) - inst.batch.y;
    for (int i = 0; i < inst.params.dims.N; ++i) {
      const Mat got = grad_c_softmax(st, r, inst.params, i);
      const Mat want = oracle::blockwise_softmax_grad_c(inst.params, inst.batch, i);
      EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-12) << "seed " << seed << " i " << i;
    }
  }
}

TEST(Gradients, ConstantResidualRowsGiveZeroSoftmaxScoreGradient) {
  auto inst = oracle::random_instance({1, 3, 3, 3, 1}, 5, KernelKind::Softmax);
  // With X W^V W^O constant across tokens, every row of R is constant.
  inst.batch.x = Mat::Identity(3, 3);
  inst.params.wv[0] = Mat::Identity(3, 3);
  inst.params.wo = Vec::Ones(3);
  const AttentionState st = scores(KernelKind::Softmax, inst.params, inst.batch);
  const Vec r = predict(st, inst.params) - inst.batch.y;
  ASSERT_GT(r.norm(), 0.1);
  EXPECT_LT(grad_c_softmax(st, r, inst.params, 0).cwiseAbs().maxCoeff(), 1e-15);
}

TEST(Gradients, ZeroResidualGivesZeroGradients) {
  for (KernelKind kind : kKinds) {
    auto inst = oracle::random_instance({2, 3, 4, 2, 2}, 6, kind);
    inst.batch.y = forward(kind, inst.params, inst.batch);
    const GradientBundle g = assemble_bundle(kind, inst.params, inst.batch, VariableSet::all());
    EXPECT_EQ(g.squared_norm(), 0.0);
    EXPECT_LE(fd_gradient(kind, inst.params, inst.batch, Group::Q, 1).norm(), 1e-8);
  }
}

TEST(Gradients, ValueGradientVanishesOnZeroInputs) {
  auto inst = oracle::random_instance({1, 3, 2, 2, 1}, 7, KernelKind::Softmax);
  inst.batch.x.setZero();
  const GradientBundle g =
      assemble_bundle(KernelKind::Softmax, inst.params, inst.batch, VariableSet::only(Group::V));
  EXPECT_EQ(g.norm(Group::V), 0.0);
}

TEST(Gradients, ValueOnlyFiniteDifferencesAreNearExact) {
  for (KernelKind kind : kKinds) {
    const auto inst = oracle::random_instance({2, 3, 4, 3, 2}, 9, kind);
    const GradientBundle g =
        assemble_bundle(kind, inst.params, inst.batch, VariableSet::only(Group::V));
    for (int h = 0; h < 2; ++h) {
      const Mat fd = fd_gradient(kind, inst.params, inst.batch, Group::V, h);
      EXPECT_LT((g.wv[h] - fd).norm(), 1e-9 * std::max(1.0, fd.norm()));
    }
  }
}

TEST(Gradients, GaussianScoreGradientIsResidualWeightTimesAttention) {
  auto inst = oracle::random_instance({2, 3, 4, 2, 2}, 10, KernelKind::Gaussian);
  for (int h = 0; h < 2; ++h) {
    inst.params.wq[h].setZero();
    inst.params.wk[h].setZero();
  }
  const AttentionState st = scores(KernelKind::Gaussian, inst.params, inst.batch);
  const Vec r = predict(st, inst.params) - inst.batch.y;
  for (int i = 0; i < 2; ++i) {
    EXPECT_EQ(grad_c_gaussian(st, r, inst.params, i), residual_weight(st, r, inst.params, i));
  }
  const GradientBundle g =
      assemble_bundle(KernelKind::Gaussian, inst.params, inst.batch, VariableSet{true, true, false});
  EXPECT_EQ(g.norm(Group::Q), 0.0);
  EXPECT_EQ(g.norm(Group::K), 0.0);
}

TEST(Gradients, GaussianSingleTokenHandExpansion) {
  const Dims dims{1, 1, 3, 2, 1};
  auto inst = oracle::random_instance(dims, 11, KernelKind::Gaussian);
  const AttentionState st = scores(KernelKind::Gaussian, inst.params, inst.batch);
  const Vec r = predict(st, inst.params) - inst.batch.y;
  const CGradient cg = grad_c(st, r, inst.params);
  const Mat x1 = inst.batch.x;
  const Mat diff = x1 * inst.params.wq[0] - x1 * inst.params.wk[0];
  const Mat want = -cg.dc[0](0, 0) / std::sqrt(2.0) * x1.transpose() * diff;
  const Mat got = grad_wq_gaussian(st, cg, inst.batch, inst.params, 0);
  EXPECT_LT((got - want).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Gradients, ResidualWeightEntries) {
  const auto inst = oracle::random_instance({2, 2, 3, 2, 2}, 12, KernelKind::Softmax);
  const AttentionState st = scores(KernelKind::Softmax, inst.params, inst.batch);
  const Vec r = predict(st, inst.params) - inst.batch.y;
  const Mat rw = residual_weight(st, r, inst.params, 1);
  for (int h = 0; h < 2; ++h) {
    const Vec value = inst.batch.sample(1) * inst.params.wv[h] * inst.params.wo_head(h);
    for (int k = 0; k < 2; ++k) {
      for (int j = 0; j < 2; ++j) {
        EXPECT_NEAR(rw(k, h * 2 + j), r(2 + k) * value(j), 1e-13);
      }
    }
  }
}

TEST(Gradients, BundleHonoursVariableSet) {
  const auto inst = oracle::random_instance({1, 2, 3, 2, 2}, 13, KernelKind::Softmax);
  const GradientBundle v =
      assemble_bundle(KernelKind::Softmax, inst.params, inst.batch, VariableSet::only(Group::V));
  EXPECT_TRUE(v.wq.empty());
  EXPECT_TRUE(v.wk.empty());
  ASSERT_EQ(v.wv.size(), 2u);
  EXPECT_EQ(v.wv[0].rows(), 3);
  const GradientBundle none =
      assemble_bundle(KernelKind::Softmax, inst.params, inst.batch, VariableSet{});
  EXPECT_EQ(none.squared_norm(), 0.0);
  EXPECT_EQ(none.norm(Group::Q), 0.0);
}

TEST(Gradients, KernelMismatchIsInternalError) {
  const auto inst = oracle::random_instance({1, 2, 3, 2, 1}, 14, KernelKind::Softmax);
  const AttentionState st = scores(KernelKind::Softmax, inst.params, inst.batch);
  const Vec r = predict(st, inst.params) - inst.batch.y;
  EXPECT_THROW(grad_c_gaussian(st, r, inst.params, 0), InternalError);
  EXPECT_THROW(assemble_bundle(KernelKind::Gaussian, st, r, inst.params, inst.batch,
                               VariableSet::all()),
               InternalError);
}

TEST(Gradients, VariableSetParsing) {
  EXPECT_EQ(VariableSet::parse("QKV"), VariableSet::all());
  EXPECT_EQ(VariableSet::parse("v"), VariableSet::only(Group::V));
  EXPECT_EQ(VariableSet::parse("Q,K"), (VariableSet{true, true, false}));
  EXPECT_TRUE(VariableSet::parse("none").empty());
  EXPECT_TRUE(VariableSet::parse("").empty());
  EXPECT_EQ(VariableSet::parse("KQ").str(), "QK");
  EXPECT_THROW(VariableSet::parse("QX"), ConfigError);
}
