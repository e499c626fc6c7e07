#include "attnlab/trainer.hpp"

#include "attnlab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

namespace attnlab {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kLipschitzFloor = 1e-12;
constexpr int kSampledPairs = 10;
constexpr int kPowerIterations = 20;
constexpr double kPowerStep = 1e-4;

std::vector<Group> groups_of(VariableSet vars) {
  std::vector<Group> out;
  for (Group g : {Group::Q, Group::K, Group::V}) {
    if (vars.contains(g)) out.push_back(g);
  }
  return out;
}

Vec flat_gradient(KernelKind kind, const ModelParams& params, const DatasetBatch& batch,
                  VariableSet vars) {
  return flatten(assemble_bundle(kind, params, batch, vars));
}

Vec unit_ball_point(std::mt19937_64& rng, Eigen::Index dim) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  Vec v(dim);
  for (Eigen::Index i = 0; i < dim; ++i) v(i) = normal(rng);
  const double radius = std::pow(uniform(rng), 1.0 / static_cast<double>(dim));
  return v * (radius / v.norm());
}

}  // namespace

void TrainConfig::validate() const {
  if (eta && !(*eta > 0.0 && std::isfinite(*eta))) {
    throw ConfigError("eta must be a positive finite number or 'auto'");
  }
  if (max_steps < 1) throw ConfigError("max_steps must be >= 1");
  if (!(stop_loss >= 0.0)) throw ConfigError("stop_loss must be >= 0");
  if (monitor_every < 1) throw ConfigError("monitor_every must be >= 1");
}

Vec flatten(const ModelParams& params, VariableSet vars) {
  const Dims& dm = params.dims;
  const Eigen::Index per = static_cast<Eigen::Index>(dm.D) * dm.d;
  const auto groups = groups_of(vars);
  Vec out(per * dm.H * static_cast<Eigen::Index>(groups.size()));
  Eigen::Index off = 0;
  for (Group g : groups) {
    for (int h = 0; h < dm.H; ++h) {
      out.segment(off, per) = num::vec(weight(params, g, h));
      off += per;
    }
  }
  return out;
}

Vec flatten(const GradientBundle& g) {
  Eigen::Index total = 0;
  for (Group grp : groups_of(g.vars)) {
    for (const auto& m : g.group(grp)) total += m.size();
  }
  Vec out(total);
  Eigen::Index off = 0;
  for (Group grp : groups_of(g.vars)) {
    for (const auto& m : g.group(grp)) {
      out.segment(off, m.size()) = num::vec(m);
      off += m.size();
    }
  }
  return out;
}

void add_flat(ModelParams& params, VariableSet vars, const Vec& delta) {
  const Dims& dm = params.dims;
  const Eigen::Index per = static_cast<Eigen::Index>(dm.D) * dm.d;
  Eigen::Index off = 0;
  for (Group g : groups_of(vars)) {
    for (int h = 0; h < dm.H; ++h) {
      weight(params, g, h) += num::unvec(delta.segment(off, per), dm.D, dm.d);
      off += per;
    }
  }
  if (off != delta.size()) throw InternalError("add_flat: layout mismatch");
}

LipschitzEstimate estimate_gradient_lipschitz(KernelKind kind, const ModelParams& params,
                                              const DatasetBatch& batch, VariableSet vars,
                                              std::uint64_t seed) {
  LipschitzEstimate est;
  if (vars.empty()) return est;
  std::mt19937_64 rng(seed);
  const Eigen::Index dim = flatten(params, vars).size();

  for (int p = 0; p < kSampledPairs; ++p) {
    const Vec u = unit_ball_point(rng, dim);
    const Vec w = unit_ball_point(rng, dim);
    const double gap = (u - w).norm();
    if (gap == 0.0) continue;
    ModelParams a = params, b = params;
    add_flat(a, vars, u);
    add_flat(b, vars, w);
    const double ratio =
        (flat_gradient(kind, a, batch, vars) - flat_gradient(kind, b, batch, vars)).norm() / gap;
    if (std::isfinite(ratio)) est.sampled = std::max(est.sampled, ratio);
  }

  // Power iteration on gradient differences tracks the dominant curvature
  // direction, which uniform sampling misses in high dimension.
  const Vec g0 = flat_gradient(kind, params, batch, vars);
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec dir(dim);
  for (Eigen::Index i = 0; i < dim; ++i) dir(i) = normal(rng);
  dir.normalize();
  for (int it = 0; it < kPowerIterations; ++it) {
    ModelParams probe = params;
    add_flat(probe, vars, kPowerStep * dir);
    const Vec diff = (flat_gradient(kind, probe, batch, vars) - g0) / kPowerStep;
    const double gain = diff.norm();
    if (!std::isfinite(gain) || gain == 0.0) break;
    est.power = std::max(est.power, gain);
    dir = diff / gain;
  }
  est.value = std::max(est.sampled, est.power);
  return est;
}

double value_only_lipschitz(KernelKind kind, const ModelParams& params, const DatasetBatch& batch) {
  const Dims& dm = params.dims;
  const AttentionState st = scores(kind, params, batch);
  Mat gram = Mat::Zero(dm.rows(), dm.rows());
  for (int h = 0; h < dm.H; ++h) {
    const auto bh = st.b.middleCols(h * dm.D, dm.D);
    gram += params.wo_head(h).squaredNorm() * (bh * bh.transpose());
  }
  Eigen::SelfAdjointEigenSolver<Mat> eig(gram, Eigen::EigenvaluesOnly);
  if (eig.info() != Eigen::Success) throw NumericalError("eigensolver failed");
  return eig.eigenvalues().maxCoeff();
}

TrainResult gd_train(const TrainConfig& config, const ModelParams& params,
                     const DatasetBatch& batch) {
  config.validate();
  TrainResult out;
  out.params = params;
  ModelParams& p = out.params;
  TrainTrace& trace = out.trace;

  trace.initial = spectral_report(config.kind, p, batch);
  if (config.vars.v) {
    trace.rate_kind = RateKind::Mu;
    trace.rate_constant = trace.initial.mu;
    trace.headline_rate = trace.initial.alpha;
  } else if (config.vars == VariableSet::only(Group::Q)) {
    trace.rate_kind = RateKind::Gamma;
    trace.rate_constant = trace.initial.gamma;
    trace.headline_rate = trace.initial.gamma_half;
  }

  if (config.eta) {
    trace.eta = *config.eta;
  } else {
    trace.eta_auto = true;
    if (config.step_rule == StepRule::Analytic) {
      if (!(config.vars == VariableSet::only(Group::V))) {
        throw ConfigError("step_rule=analytic is only defined for vars=V");
      }
      trace.lipschitz_estimate = value_only_lipschitz(config.kind, p, batch);
    } else {
      trace.lipschitz_estimate =
          estimate_gradient_lipschitz(config.kind, p, batch, config.vars, config.seed).value;
    }
    if (trace.lipschitz_estimate < kLipschitzFloor) {
      trace.eta_fallback = true;
      trace.eta = 1.0;
    } else {
      trace.eta = 1.0 / (2.0 * trace.lipschitz_estimate);
    }
  }
  const double factor = 1.0 - trace.eta * trace.rate_constant;

  for (int t = 0;; ++t) {
    const AttentionState st = scores(config.kind, p, batch);
    const Vec residual = predict(st, p) - batch.y;
    const double f = half_sq(residual);
    if (!std::isfinite(f)) {
      std::ostringstream msg;
      msg << "divergence: non-finite loss at step " << t << " (eta=" << trace.eta << ")";
      throw NumericalError(msg.str());
    }
    const bool stopping = f <= config.stop_loss || t == config.max_steps;

    GradientBundle grad;
    grad.vars = config.vars;
    if (!config.vars.empty()) {
      grad = assemble_bundle(config.kind, st, residual, p, batch, config.vars);
    }

    TraceRow row;
    row.step = t;
    row.loss = f;
    row.grad_q = config.vars.q ? grad.norm(Group::Q) : kNaN;
    row.grad_k = config.vars.k ? grad.norm(Group::K) : kNaN;
    row.grad_v = config.vars.v ? grad.norm(Group::V) : kNaN;
    row.grad_sq = grad.squared_norm();
    row.rate_factor = factor;
    row.monitored = t % config.monitor_every == 0 || stopping;
    if (row.monitored) {
      row.sigma_min_b = num::sigma_min_rows(st.b);
      row.sigma_max_wv = 0.0;
      for (int h = 0; h < p.dims.H; ++h) {
        row.sigma_max_wq.push_back(num::sigma_max(p.wq[h]));
        row.sigma_max_wk.push_back(num::sigma_max(p.wk[h]));
        row.sigma_max_wv = std::max(row.sigma_max_wv, num::sigma_max(p.wv[h]));
      }
    } else {
      row.sigma_min_b = kNaN;
      row.sigma_max_wv = kNaN;
    }
    trace.rows.push_back(std::move(row));

    if (f <= config.stop_loss) {
      trace.stop_reason = "stop_loss";
      break;
    }
    if (t == config.max_steps) {
      trace.stop_reason = "max_steps";
      break;
    }
    if (!std::isfinite(grad.squared_norm())) {
      std::ostringstream msg;
      msg << "divergence: non-finite gradient at step " << t << " (eta=" << trace.eta << ")";
      throw NumericalError(msg.str());
    }
    if (!config.vars.empty()) add_flat(p, config.vars, -trace.eta * flatten(grad));
  }
  return out;
}

RateVerdict verify_geometric_rate(const TrainTrace& trace, double rate_constant, double eta) {
  if (trace.rows.empty()) throw ConfigError("verify_geometric_rate: empty trace");
  const double prod = eta * rate_constant;
  if (!(prod > 0.0 && prod < 1.0)) {
    std::ostringstream msg;
    msg << "invalid rate: eta*rate = " << prod << " must lie in (0, 1)";
    throw ConfigError(msg.str());
  }
  RateVerdict v;
  v.bound = 1.0 - prod + 1e-12;
  v.ok = true;
  for (std::size_t t = 0; t + 1 < trace.rows.size(); ++t) {
    const double ft = trace.rows[t].loss;
    if (ft <= 0.0) continue;
    const double ratio = trace.rows[t + 1].loss / ft;
    if (v.worst_step < 0 || ratio > v.worst_ratio) {
      v.worst_ratio = ratio;
      v.worst_step = static_cast<int>(t);
    }
    if (ratio > v.bound) v.ok = false;
  }
  return v;
}

DescentVerdict verify_descent(const TrainTrace& trace, double eta_prime) {
  DescentVerdict v;
  if (trace.rows.empty()) return v;
  const double f0 = trace.rows.front().loss;
  const double tol = 1e-12 * f0;
  double cumulative = 0.0;
  v.worst_slack = std::numeric_limits<double>::infinity();
  for (const auto& row : trace.rows) {
    const double slack = f0 - eta_prime * cumulative - row.loss;
    v.worst_slack = std::min(v.worst_slack, slack);
    cumulative += row.grad_sq;
  }
  v.ok = v.worst_slack >= -tol;
  return v;
}

bool verify_monotone(const TrainTrace& trace, double tol) {
  for (std::size_t t = 0; t + 1 < trace.rows.size(); ++t) {
    if (trace.rows[t + 1].loss > trace.rows[t].loss + tol) return false;
  }
  return true;
}

EnvelopeVerdict verify_envelope(const TrainTrace& trace) {
  EnvelopeVerdict v;
  const ConditionReport& init = trace.initial;
  for (const auto& row : trace.rows) {
    if (!row.monitored) continue;
    ++v.monitored_steps;
    if (row.sigma_max_wv > 1.5 * init.lambda_v_bar) v.wv_ok = false;
    for (std::size_t h = 0; h < row.sigma_max_wq.size(); ++h) {
      if (row.sigma_max_wq[h] > 1.5 * init.sigma_max_wq[h]) v.wq_ok = false;
      if (row.sigma_max_wk[h] > 1.5 * init.sigma_max_wk[h]) v.wk_ok = false;
    }
    if (row.sigma_min_b < 0.5 * init.sigma_min_b) v.b_ok = false;
  }
  return v;
}

}  // namespace attnlab
