#pragma once

// Full-batch vanilla gradient descent over a subset of {W^Q, W^K, W^V}
// with per-step monitoring, plus the checks that compare a recorded trace
// against the geometric-rate, cumulative-descent and bounded-weight claims.

#include "attnlab/conditions.hpp"
#include "attnlab/gradients.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace attnlab {

enum class StepRule {
  Sampled,   // empirical gradient-Lipschitz estimate around M₀
  Analytic,  // exact Hessian bound; only for the W^V-only quadratic
};

struct TrainConfig {
  KernelKind kind = KernelKind::Softmax;
  VariableSet vars = VariableSet::only(Group::V);
  std::optional<double> eta;  // nullopt: η = 1/(2Ĝ)
  StepRule step_rule = StepRule::Sampled;
  int max_steps = 10000;
  double stop_loss = 1e-10;
  int monitor_every = 1;
  std::uint64_t seed = 0;

  void validate() const;
};

struct TraceRow {
  int step = 0;
  double loss = 0.0;
  // Frobenius norms over all heads; NaN for groups outside the variable set.
  double grad_q = 0.0;
  double grad_k = 0.0;
  double grad_v = 0.0;
  double grad_sq = 0.0;  // squared norm over the whole variable set

  bool monitored = false;  // spectral fields below are NaN/empty otherwise
  double sigma_min_b = 0.0;
  std::vector<double> sigma_max_wq;  // per head
  std::vector<double> sigma_max_wk;
  double sigma_max_wv = 0.0;  // max over heads
  double rate_factor = 1.0;
};

enum class RateKind { None, Mu, Gamma };

struct TrainTrace {
  std::vector<TraceRow> rows;
  double eta = 0.0;
  bool eta_auto = false;
  bool eta_fallback = false;  // Ĝ vanished; η = 1 was used
  double lipschitz_estimate = 0.0;
  RateKind rate_kind = RateKind::None;
  double rate_constant = 0.0;  // ¼-form constant (μ or γ)
  double headline_rate = 0.0;  // α or the ½-form γ
  ConditionReport initial;
  std::string stop_reason;

  double initial_loss() const { return rows.front().loss; }
  double final_loss() const { return rows.back().loss; }
};

struct TrainResult {
  TrainTrace trace;
  ModelParams params;
};

TrainResult gd_train(const TrainConfig& config, const ModelParams& params,
                     const DatasetBatch& batch);

struct LipschitzEstimate {
  double sampled = 0.0;  // max ratio over 10 random pairs in the unit ball around M₀
  double power = 0.0;    // gradient-difference power iteration at M₀
  double value = 0.0;    // max of the two
};

LipschitzEstimate estimate_gradient_lipschitz(KernelKind kind, const ModelParams& params,
                                              const DatasetBatch& batch, VariableSet vars,
                                              std::uint64_t seed);

/// Exact gradient-Lipschitz constant of the W^V-only loss (a quadratic):
/// λ_max(Σ_h ‖W^O_h‖² B_h B_hᵀ).
double value_only_lipschitz(KernelKind kind, const ModelParams& params, const DatasetBatch& batch);

/// Parameters of the variable set flattened head by head, Q then K then V.
Vec flatten(const ModelParams& params, VariableSet vars);
Vec flatten(const GradientBundle& g);
/// params += delta (same layout as flatten()).
void add_flat(ModelParams& params, VariableSet vars, const Vec& delta);

struct RateVerdict {
  bool ok = false;
  double worst_ratio = 0.0;  // max f_{t+1}/f_t over steps with f_t > 0
  int worst_step = -1;
  double bound = 0.0;        // 1 − η·rate + 1e-12
};

/// f_{t+1} ≤ (1 − η·rate) f_t at every recorded step. Throws ConfigError
/// unless 0 < η·rate < 1.
RateVerdict verify_geometric_rate(const TrainTrace& trace, double rate_constant, double eta);

struct DescentVerdict {
  bool ok = false;
  double worst_slack = 0.0;  // min over t of f_0 − η'Σ‖∇f‖² − f_t (≥ −1e-12·f_0 passes)
};

/// f_t ≤ f_0 − η' Σ_{r<t} ‖∇f(M_r)‖², gradient taken over the trained variable set.
DescentVerdict verify_descent(const TrainTrace& trace, double eta_prime);

/// f_{t+1} ≤ f_t + tol at every step.
bool verify_monotone(const TrainTrace& trace, double tol = 1e-12);

struct EnvelopeVerdict {
  bool wv_ok = true;  // σ_max(W^V_t) ≤ (3/2) λ̄^V
  bool wq_ok = true;  // σ_max(W^Q_h,t) ≤ (3/2) σ_max(W^Q_h,0)
  bool wk_ok = true;
  bool b_ok = true;   // σ_min(B_t) ≥ ½ σ_min(B₀)
  int monitored_steps = 0;
  bool ok() const { return wv_ok && wq_ok && wk_ok && b_ok && monitored_steps > 0; }
};

EnvelopeVerdict verify_envelope(const TrainTrace& trace);

}  // namespace attnlab
