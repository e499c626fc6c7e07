#pragma once

// Spectral quantities and initialization inequalities behind the convergence
// guarantees for gradient descent on the attention model.
//
// Notation used in field names:
//   sigma_min_b   σ_min(B₀), taken over the Nn-dimensional row space of B₀
//   lambda_v_bar  (2/3)(1 + σ_max(W^V₀))
//   delta[h]      σ_min of the Nn²×Dd Jacobian ∂vec(C·h)/∂vec(W^Q_h), again over its row space
//   kappa         exp(−(9/4)‖X‖²_F((λ̄^Q_h)² + (λ̄^K_h)²)), minimised over heads

#include "attnlab/model.hpp"

#include <cstddef>
#include <string>
#include <vector>

namespace attnlab {

struct InitVerdict {
  bool ok = false;
  double lhs = 0.0;
  std::string reason;  // empty when ok
};

struct ConditionReport {
  KernelKind kind = KernelKind::Softmax;
  Dims dims;

  double sigma_min_b = 0.0;
  double sigma_max_b = 0.0;
  std::size_t rank_b = 0;
  std::vector<double> sigma_max_wq;
  std::vector<double> sigma_max_wk;
  double sigma_max_wv = 0.0;
  double lambda_v_bar = 0.0;
  std::vector<double> delta;
  std::vector<std::size_t> jacobian_rank;
  double kappa = 0.0;
  double min_s = 0.0;  // observed smallest attention entry
  double min_abs_vwo = 0.0;
  double wo_norm = 0.0;
  double x_norm = 0.0;
  double loss0 = 0.0;

  // Rate constants. mu and gamma carry the ¼ factor of the inductive
  // argument; alpha and gamma_half are the headline forms.
  double alpha = 0.0;       // ‖W^O‖² σ_min(B₀)²
  double mu = 0.0;          // ¼ ‖W^O‖² σ_min(B₀)²
  double gamma = 0.0;       // ¼ δ² κ² (min|V'W^O|)², δ = min_h δ_h
  double gamma_half = 0.0;  // ½ δ² κ² (min|V'W^O|)²

  double thm2_lhs = 0.0;
  bool thm2_ok = false;
  std::string thm2_reason;
  bool sum_q_sq_gt1 = false;  // Σ_h (λ̄^Q_h)² > 1
  bool sum_k_sq_gt1 = false;  // Σ_h (λ̄^K_h)² > 1

  double thm3_lhs = 0.0;
  bool thm3_ok = false;
  std::string thm3_reason;
};

struct ReportOptions {
  /// Upper bound on Nn²·Dd for the materialised score Jacobian.
  std::size_t max_jacobian_entries = std::size_t{1} << 22;
  double rank_tol = 1e-10;
};

/// Nn²×Dd Jacobian of vec(C·h) w.r.t. vec(W^Q_h). Row (i, k, j) sits at
/// (i·n + k)·n + j; column order follows column-major vec(W^Q_h).
Mat score_jacobian(KernelKind kind, const ModelParams& params, const DatasetBatch& batch, int h);

ConditionReport spectral_report(KernelKind kind, const ModelParams& params,
                                const DatasetBatch& batch, const ReportOptions& opts = {});

/// Full-{Q,K,V} initialization inequality (ν = 1/54):
///   54 n² √(NH) ‖X‖⁶ λ̄^V Σ_h((λ̄^Q_h)²+(λ̄^K_h)²) ‖r₀‖
///   ─────────────────────────────────────────────────── ≤ 1
///   σ_min(B₀)² ‖W^O‖ min_h(λ̄^Q_h, λ̄^K_h, 1, σ_min(B₀))
InitVerdict check_thm2_init(const ConditionReport& report, const ModelParams& params,
                            const DatasetBatch& batch, double loss0);

/// W^Q-only initialization inequality (ν' = 1/8),
/// worst case over heads:
///   8 n ‖X‖⁵ ‖W^O‖ λ̄^V (λ̄^Q_h+λ̄^K_h) exp((9/4)‖X‖²((λ̄^Q_h)²+(λ̄^K_h)²)) ‖r₀‖
///   ─────────────────────────────────────────────────────────────────── ≤ 1
///                  δ_h² (min|V'W^O|)² min(δ_h, λ̄^Q_h)
InitVerdict check_thm3_init(const ConditionReport& report, const ModelParams& params,
                            const DatasetBatch& batch, double loss0);

/// Closed-form bound constants, per sample i (and per head h where the
/// constant depends on a single head).
struct BoundSet {
  std::vector<double> phi;  // ‖dS_i‖ ≤ φ_i ‖dW^Q‖
  std::vector<double> psi;  // ‖dS_i‖ ≤ ψ_i ‖dW^K‖
  std::vector<double> q;    // ‖∂f(M;X_i)/∂W^Q‖ ≤ Q_i ‖r_i‖ (Softmax)
  std::vector<double> k;    // ‖∂f(M;X_i)/∂W^K‖ ≤ K_i ‖r_i‖ (Softmax)
  std::vector<std::vector<double>> q_gauss;   // ‖∂f(M;X_i)/∂W^Q_h‖ ≤ Q'_ih ‖r_i‖ (Gaussian)
  std::vector<std::vector<double>> c_gauss;   // ‖dC_ih‖ ≤ c_ih ‖dW^Q_h‖ (Gaussian)
  std::vector<double> jac_gauss;              // ‖d(∂C_ih/∂W^Q_h)‖ ≤ √n‖X_i‖² ‖dW^Q_h‖
};

BoundSet bound_set(KernelKind kind, const ModelParams& params, const DatasetBatch& batch);

}  // namespace attnlab
