#pragma once

// Closed-form gradients of f(M; X) = ½‖MH(M; X) − y‖².
//
// Every kernel-specific path goes through the score gradient ∂f/∂C_i
// (n×Hn, one n×n block per head), built from the residual weight
//
//   R_i = (MH(M; X_i) − y_i) (W^O)ᵀ (V'_i)ᵀ,   (R_ih)_kj = r_ik · (X_i W^V_h W^O_h)_j.
//
// Softmax:  (∂f/∂C_ih)_kj = (S_ih)_kj [ (R_ih)_kj − Σ_p (S_ih)_kp (R_ih)_kp ]
// Gaussian: ∂f/∂C_i = R_i ⊙ S_i

#include "attnlab/model.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace attnlab {

enum class Group { Q, K, V };

std::string_view to_string(Group g);

/// Subset of {Q, K, V} being optimised.
struct VariableSet {
  bool q = false;
  bool k = false;
  bool v = false;

  static VariableSet all() { return {true, true, true}; }
  static VariableSet only(Group g);
  /// Parses any combination of the letters Q, K, V (case-insensitive). The
  /// strings "", "none" and "-" are the empty set. Throws ConfigError.
  static VariableSet parse(std::string_view s);

  bool contains(Group g) const;
  bool empty() const { return !q && !k && !v; }
  std::string str() const;
  bool operator==(const VariableSet&) const = default;
};

struct GradientBundle {
  std::vector<Mat> wq;  // empty unless vars.q
  std::vector<Mat> wk;
  std::vector<Mat> wv;
  VariableSet vars;

  const std::vector<Mat>& group(Group g) const;
  /// Frobenius norm across all heads of a group; 0 for an absent group.
  double norm(Group g) const;
  /// Σ over populated groups of squared Frobenius norms.
  double squared_norm() const;
};

struct CGradient {
  std::vector<Mat> dc;  // dc[i]: n×Hn, block h = ∂f/∂C_ih
};

/// R_i = r_i (W^O)ᵀ (V'_i)ᵀ, n×Hn.
Mat residual_weight(const AttentionState& state, const Vec& residual, const ModelParams& params,
                    int i);

/// Per-head diagonal blocks of Bᵀ r (W^O)ᵀ.
std::vector<Mat> grad_wv(const AttentionState& state, const Vec& residual,
                         const ModelParams& params);

Mat grad_c_softmax(const AttentionState& state, const Vec& residual, const ModelParams& params,
                   int i);
Mat grad_c_gaussian(const AttentionState& state, const Vec& residual, const ModelParams& params,
                    int i);

/// ∂f/∂C_i for every sample, dispatched on state.kind.
CGradient grad_c(const AttentionState& state, const Vec& residual, const ModelParams& params);

Mat grad_wq_softmax(const AttentionState& state, const CGradient& cgrad, const DatasetBatch& batch,
                    const ModelParams& params, int h);
Mat grad_wk_softmax(const AttentionState& state, const CGradient& cgrad, const DatasetBatch& batch,
                    const ModelParams& params, int h);
Mat grad_wq_gaussian(const AttentionState& state, const CGradient& cgrad,
                     const DatasetBatch& batch, const ModelParams& params, int h);
Mat grad_wk_gaussian(const AttentionState& state, const CGradient& cgrad,
                     const DatasetBatch& batch, const ModelParams& params, int h);

/// Central differences (f(w+εe) − f(w−εe)) / 2ε per coordinate of one head's
/// weight, ε = 1e-5·max(1, |w|). Sequential and deterministic.
Mat fd_gradient(KernelKind kind, const ModelParams& params, const DatasetBatch& batch, Group group,
                int h);

GradientBundle assemble_bundle(KernelKind kind, const ModelParams& params,
                               const DatasetBatch& batch, VariableSet vars);

/// Same as above for a state computed at params. Throws InternalError if the
/// state was built for a different kernel or different dims.
GradientBundle assemble_bundle(KernelKind kind, const AttentionState& state, const Vec& residual,
                               const ModelParams& params, const DatasetBatch& batch,
                               VariableSet vars);

/// Mutable access to one head's weight of a group.
Mat& weight(ModelParams& params, Group g, int h);
const Mat& weight(const ModelParams& params, Group g, int h);

}  // namespace attnlab
