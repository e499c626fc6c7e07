#include "attnlab/conditions.hpp"

#include "attnlab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace attnlab {

Mat score_jacobian(KernelKind kind, const ModelParams& params, const DatasetBatch& batch, int h) {
  const Dims& dm = params.dims;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dm.d));
  Mat jac(dm.N * dm.n * dm.n, dm.D * dm.d);
  for (int i = 0; i < dm.N; ++i) {
    const Mat xi = batch.sample(i);
    const Mat a = xi * params.wq[h];
    const Mat bk = xi * params.wk[h];
    for (int k = 0; k < dm.n; ++k) {
      for (int j = 0; j < dm.n; ++j) {
        Mat block;
        if (kind == KernelKind::Softmax) {
          block = inv * xi.row(k).transpose() * bk.row(j);
        } else {
          block = -inv * xi.row(k).transpose() * (a.row(k) - bk.row(j));
        }
        jac.row((i * dm.n + k) * dm.n + j) = num::vec(block).transpose();
      }
    }
  }
  return jac;
}

ConditionReport spectral_report(KernelKind kind, const ModelParams& params,
                                const DatasetBatch& batch, const ReportOptions& opts) {
  const Dims& dm = params.dims;
  const AttentionState st = scores(kind, params, batch);
  const Vec residual = predict(st, params) - batch.y;

  ConditionReport rep;
  rep.kind = kind;
  rep.dims = dm;
  rep.loss0 = half_sq(residual);
  rep.x_norm = batch.x.norm();
  rep.wo_norm = params.wo.norm();

  const Vec sb = num::singular_values(st.b);
  rep.sigma_max_b = sb.size() ? sb(0) : 0.0;
  rep.rank_b = num::numerical_rank(st.b, opts.rank_tol);
  // Below the rank threshold σ_min is indistinguishable from zero.
  rep.sigma_min_b = rep.rank_b == static_cast<std::size_t>(dm.rows())
                        ? num::sigma_min_rows(st.b)
                        : 0.0;

  rep.sigma_max_wv = 0.0;
  for (int h = 0; h < dm.H; ++h) {
    rep.sigma_max_wq.push_back(num::sigma_max(params.wq[h]));
    rep.sigma_max_wk.push_back(num::sigma_max(params.wk[h]));
    rep.sigma_max_wv = std::max(rep.sigma_max_wv, num::sigma_max(params.wv[h]));
  }
  rep.lambda_v_bar = (2.0 / 3.0) * (1.0 + rep.sigma_max_wv);

  const std::size_t jac_entries = static_cast<std::size_t>(dm.N) * dm.n * dm.n * dm.D * dm.d;
  if (jac_entries > opts.max_jacobian_entries) {
    throw NumericalError("score Jacobian would have " + std::to_string(jac_entries) +
                         " entries (cap " + std::to_string(opts.max_jacobian_entries) +
                         "); use smaller N, n, D or d");
  }
  const std::size_t jac_rows = static_cast<std::size_t>(dm.N) * dm.n * dm.n;
  const bool wide_enough = static_cast<std::size_t>(dm.D) * dm.d >= jac_rows;
  rep.kappa = 1.0;
  const double x2 = rep.x_norm * rep.x_norm;
  for (int h = 0; h < dm.H; ++h) {
    const Mat jac = score_jacobian(kind, params, batch, h);
    const Vec sj = num::singular_values(jac);
    const std::size_t rank = num::numerical_rank(jac, opts.rank_tol);
    const double delta = rank == jac_rows ? num::sigma_min_rows(jac) : 0.0;
    rep.delta.push_back(delta);
    rep.jacobian_rank.push_back(rank);
    if (sj.size() && delta > opts.rank_tol * sj(0) && !wide_enough) {
      throw InternalError("δ_h > 0 reported although Dd < Nn²");
    }
    const double lq = rep.sigma_max_wq[h], lk = rep.sigma_max_wk[h];
    rep.kappa = std::min(rep.kappa, std::exp(-2.25 * x2 * (lq * lq + lk * lk)));
  }

  rep.min_s = std::numeric_limits<double>::infinity();
  rep.min_abs_vwo = std::numeric_limits<double>::infinity();
  for (int i = 0; i < dm.N; ++i) {
    for (int h = 0; h < dm.H; ++h) rep.min_s = std::min(rep.min_s, st.s[i][h].minCoeff());
    const Vec vwo = st.vprime[i] * params.wo;
    rep.min_abs_vwo = std::min(rep.min_abs_vwo, vwo.cwiseAbs().minCoeff());
  }

  const double wo2 = rep.wo_norm * rep.wo_norm;
  rep.alpha = wo2 * rep.sigma_min_b * rep.sigma_min_b;
  rep.mu = 0.25 * rep.alpha;
  const double delta_min = *std::min_element(rep.delta.begin(), rep.delta.end());
  const double g = delta_min * delta_min * rep.kappa * rep.kappa * rep.min_abs_vwo *
                   rep.min_abs_vwo;
  rep.gamma = 0.25 * g;
  rep.gamma_half = 0.5 * g;

  double sq = 0.0, sk = 0.0;
  for (int h = 0; h < dm.H; ++h) {
    sq += rep.sigma_max_wq[h] * rep.sigma_max_wq[h];
    sk += rep.sigma_max_wk[h] * rep.sigma_max_wk[h];
  }
  rep.sum_q_sq_gt1 = sq > 1.0;
  rep.sum_k_sq_gt1 = sk > 1.0;

  const InitVerdict v2 = check_thm2_init(rep, params, batch, rep.loss0);
  rep.thm2_lhs = v2.lhs;
  rep.thm2_ok = v2.ok;
  rep.thm2_reason = v2.reason;
  const InitVerdict v3 = check_thm3_init(rep, params, batch, rep.loss0);
  rep.thm3_lhs = v3.lhs;
  rep.thm3_ok = v3.ok;
  rep.thm3_reason = v3.reason;
  return rep;
}

namespace {

InitVerdict fail(std::string reason) {
  return {false, std::numeric_limits<double>::infinity(), std::move(reason)};
}

InitVerdict judge(double lhs) {
  if (!std::isfinite(lhs)) return {false, lhs, "left-hand side is not finite"};
  if (lhs <= 1.0) return {true, lhs, {}};
  return {false, lhs, "left-hand side exceeds 1"};
}

}  // namespace

InitVerdict check_thm2_init(const ConditionReport& report, const ModelParams& params,
                            const DatasetBatch& batch, double loss0) {
  const Dims& dm = params.dims;
  const double r0 = std::sqrt(2.0 * std::max(0.0, loss0));
  if (!(report.sigma_min_b > 0.0)) return fail("B rank-deficient");
  if (!(report.wo_norm > 0.0)) return fail("W^O is zero");
  if (r0 == 0.0) return {true, 0.0, {}};

  double sum_sq = 0.0;
  double min_term = std::min(1.0, report.sigma_min_b);
  for (int h = 0; h < dm.H; ++h) {
    const double lq = report.sigma_max_wq[h], lk = report.sigma_max_wk[h];
    sum_sq += lq * lq + lk * lk;
    min_term = std::min({min_term, lq, lk});
  }
  if (!(min_term > 0.0)) return fail("a query/key weight is zero");

  const double n = dm.n;
  const double xf = batch.x.norm();
  const double num = 54.0 * n * n * std::sqrt(static_cast<double>(dm.N * dm.H)) *
                     std::pow(xf, 6) * report.lambda_v_bar * sum_sq * r0;
  const double den = report.sigma_min_b * report.sigma_min_b * report.wo_norm * min_term;
  return judge(num / den);
}

InitVerdict check_thm3_init(const ConditionReport& report, const ModelParams& params,
                            const DatasetBatch& batch, double loss0) {
  const Dims& dm = params.dims;
  const double r0 = std::sqrt(2.0 * std::max(0.0, loss0));
  if (!(report.min_abs_vwo > 0.0)) return fail("min|V'W^O| is zero");
  for (int h = 0; h < dm.H; ++h) {
    if (!(report.delta.at(h) > 0.0)) {
      return fail("score Jacobian rank-deficient (delta_" + std::to_string(h) + " = 0)");
    }
    if (!(report.sigma_max_wq[h] > 0.0)) return fail("W^Q_" + std::to_string(h) + " is zero");
  }
  if (r0 == 0.0) return {true, 0.0, {}};

  const double xf = batch.x.norm();
  double worst = 0.0;
  for (int h = 0; h < dm.H; ++h) {
    const double delta = report.delta[h];
    const double lq = report.sigma_max_wq[h], lk = report.sigma_max_wk[h];
    const double num = 8.0 * dm.n * std::pow(xf, 5) * report.wo_norm * report.lambda_v_bar *
                       (lq + lk) * std::exp(2.25 * xf * xf * (lq * lq + lk * lk)) * r0;
    const double den = delta * delta * report.min_abs_vwo * report.min_abs_vwo *
                       std::min(delta, lq);
    worst = std::max(worst, num / den);
  }
  return judge(worst);
}

BoundSet bound_set(KernelKind /*kind*/, const ModelParams& params, const DatasetBatch& batch) {
  const Dims& dm = params.dims;
  const double sqrt_d = std::sqrt(static_cast<double>(dm.d));
  const double n = dm.n;

  double sum_q = 0.0, sum_k = 0.0, sv_v = 0.0;
  std::vector<double> sq(dm.H), sk(dm.H);
  for (int h = 0; h < dm.H; ++h) {
    sq[h] = num::sigma_max(params.wq[h]);
    sk[h] = num::sigma_max(params.wk[h]);
    sum_q += sq[h] * sq[h];
    sum_k += sk[h] * sk[h];
    sv_v = std::max(sv_v, num::sigma_max(params.wv[h]));
  }
  const double wo = num::spectral_norm(params.wo);

  BoundSet out;
  for (int i = 0; i < dm.N; ++i) {
    const double xi = batch.sample(i).norm();
    const double x2 = xi * xi, x3 = x2 * xi;
    out.phi.push_back(n / sqrt_d * x2 * std::sqrt(sum_k));
    out.psi.push_back(n / sqrt_d * x2 * std::sqrt(sum_q));
    out.q.push_back(n * std::sqrt(static_cast<double>(dm.H)) * x3 * wo * std::sqrt(sum_k) * sv_v);
    out.k.push_back(n * std::sqrt(static_cast<double>(dm.H)) * x3 * wo * std::sqrt(sum_q) * sv_v);
    std::vector<double> qg, cg;
    for (int h = 0; h < dm.H; ++h) {
      const double pair = std::sqrt(sq[h] * sq[h] + sk[h] * sk[h]);
      qg.push_back(std::sqrt(2.0 * n / dm.d) * x3 * wo * sv_v * pair);
      cg.push_back(std::sqrt(2.0 * n / dm.d) * x2 * pair);
    }
    out.q_gauss.push_back(std::move(qg));
    out.c_gauss.push_back(std::move(cg));
    out.jac_gauss.push_back(std::sqrt(n) * x2);
  }
  return out;
}

}  // namespace attnlab
