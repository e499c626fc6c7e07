#pragma once

// The two-token Softmax instance on which W^Q and W^K receive zero gradient
// at a point of positive loss:
//
//   X₁ = I₂,  W^V = [[2a, a], [a, 2a]],  W^O = (1/a, 1/a)ᵀ
//
// Here W^V W^O = (3, 3)ᵀ, so every row of R₁ is constant and the softmax
// backward pass annihilates it, whatever W^Q and W^K are.

#include "attnlab/conditions.hpp"
#include "attnlab/model.hpp"

#include <string>

namespace attnlab {

struct CounterexampleInstance {
  double a = 1.0;
  ModelParams params;  // N=1, n=2, D=d=2, H=1
  DatasetBatch batch;
  Mat l_matrix;        // (MH − y)(W^O)ᵀ(X W^V)ᵀ, 2×2
};

/// Throws ConfigError if a ≤ 0 or a weight is not 2×2, HypothesisError if
/// y equals (3, 3) within 1e-12 (the point would be a global optimum).
CounterexampleInstance build_counterexample(double a, const Vec& y, const Mat& wq0,
                                            const Mat& wk0);

struct CounterexampleReport {
  double a = 0.0;
  Vec y;
  Vec prediction;
  double loss = 0.0;
  double grad_wq_norm = 0.0;  // closed form, Softmax
  double grad_wk_norm = 0.0;
  double fd_wq_norm = 0.0;
  double fd_wk_norm = 0.0;
  double l_row_gap = 0.0;  // max(|L₁₁−L₁₂|, |L₂₁−L₂₂|)
  double gaussian_grad_wq_norm = 0.0;  // same weights, Gaussian kernel
  ConditionReport conditions;          // Softmax report at the instance
  bool pass = false;  // loss > 0, closed forms ≤ 1e-12, FD ≤ 1e-7
};

CounterexampleReport verify_counterexample(const CounterexampleInstance& inst);

}  // namespace attnlab
