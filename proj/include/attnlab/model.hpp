#pragma once

// One-layer multi-head attention with a fixed output projection:
//
//   MH(M; X_i) = [S_i1 X_i W^V_1, ..., S_iH X_i W^V_H] · W^O
//
// stacked over samples as B · diag(W^V_1..W^V_H) · W^O, with the empirical
// loss f(M; X) = ½‖MH(M; X) − y‖².

#include "attnlab/numerics.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace attnlab {

using num::Mat;
using num::Vec;

struct Dims {
  int N = 1;  // samples
  int n = 1;  // tokens per sample
  int D = 1;  // embedding dim
  int d = 1;  // head dim
  int H = 1;  // heads

  /// Throws ConfigError unless every field is strictly positive.
  void validate() const;
  int rows() const { return N * n; }
  bool operator==(const Dims&) const = default;
};

enum class KernelKind { Softmax, Gaussian };

std::string_view to_string(KernelKind k);
/// Accepts "softmax" or "gaussian"; throws ConfigError otherwise.
KernelKind parse_kernel(std::string_view s);

struct ModelParams {
  std::vector<Mat> wq;  // H entries, D×d
  std::vector<Mat> wk;  // H entries, D×d
  std::vector<Mat> wv;  // H entries, D×d
  Mat wo;               // Hd×1, never trained
  Dims dims;

  /// Zero-initialised parameters of the right shapes.
  static ModelParams zeros(const Dims& dims);

  /// Throws ConfigError on any shape disagreement with dims.
  void validate() const;

  /// Rows h·d .. h·d+d−1 of W^O.
  auto wo_head(int h) const { return wo.middleRows(h * dims.d, dims.d); }
};

struct DatasetBatch {
  Mat x;  // Nn×D; rows i·n .. i·n+n−1 are sample X_i
  Vec y;  // Nn
  Dims dims;

  void validate() const;
  auto sample(int i) const { return x.middleRows(i * dims.n, dims.n); }
  auto labels(int i) const { return y.segment(i * dims.n, dims.n); }
  /// One-sample batch holding (X_i, y_i).
  DatasetBatch slice(int i) const;
};

struct AttentionState {
  KernelKind kind = KernelKind::Softmax;
  std::vector<std::vector<Mat>> c;  // c[i][h]: n×n pre-activation scores
  std::vector<std::vector<Mat>> s;  // s[i][h]: n×n attention matrix
  Mat b;                            // Nn×HD, row block i = [S_i1 X_i, ..., S_iH X_i]
  std::vector<Mat> vprime;          // vprime[i]: Hn×Hd, blockdiag(X_i W^V_1, ..., X_i W^V_H)
};

/// Row-wise softmax with per-row max subtraction.
Mat softmax_rows(const Mat& c);

/// Score matrices, attention matrices, B and V' for every sample and head.
AttentionState scores(KernelKind kind, const ModelParams& params, const DatasetBatch& batch);

/// B · diag(W^V) · W^O for an already computed state.
Vec predict(const AttentionState& state, const ModelParams& params);

Vec forward(KernelKind kind, const ModelParams& params, const DatasetBatch& batch);

double loss(KernelKind kind, const ModelParams& params, const DatasetBatch& batch);

/// ½‖r‖² for a residual vector.
inline double half_sq(const Vec& r) { return 0.5 * r.squaredNorm(); }

}  // namespace attnlab
