#include "attnlab/counterexample.hpp"

#include "attnlab/errors.hpp"
#include "attnlab/gradients.hpp"

#include <algorithm>
#include <cmath>

namespace attnlab {

CounterexampleInstance build_counterexample(double a, const Vec& y, const Mat& wq0,
                                            const Mat& wk0) {
  if (!(a > 0.0) || !std::isfinite(a)) throw ConfigError("counterexample: a must be > 0");
  if (y.size() != 2) throw ConfigError("counterexample: y must have 2 entries");
  if (wq0.rows() != 2 || wq0.cols() != 2 || wk0.rows() != 2 || wk0.cols() != 2) {
    throw ConfigError("counterexample: wq0 and wk0 must be 2x2");
  }
  if ((y - Vec::Constant(2, 3.0)).cwiseAbs().maxCoeff() <= 1e-12) {
    throw HypothesisError("counterexample: y = (3, 3) makes the point a global optimum");
  }

  const Dims dims{1, 2, 2, 2, 1};
  CounterexampleInstance inst;
  inst.a = a;
  inst.params = ModelParams::zeros(dims);
  inst.params.wq[0] = wq0;
  inst.params.wk[0] = wk0;
  inst.params.wv[0] << 2 * a, a, a, 2 * a;
  inst.params.wo << 1 / a, 1 / a;
  inst.batch.dims = dims;
  inst.batch.x = Mat::Identity(2, 2);
  inst.batch.y = y;

  const AttentionState st = scores(KernelKind::Softmax, inst.params, inst.batch);
  const Vec r = predict(st, inst.params) - y;
  inst.l_matrix = residual_weight(st, r, inst.params, 0);
  return inst;
}

CounterexampleReport verify_counterexample(const CounterexampleInstance& inst) {
  CounterexampleReport rep;
  rep.a = inst.a;
  rep.y = inst.batch.y;
  const AttentionState st = scores(KernelKind::Softmax, inst.params, inst.batch);
  rep.prediction = predict(st, inst.params);
  rep.loss = half_sq(rep.prediction - inst.batch.y);

  const VariableSet qk{true, true, false};
  const GradientBundle g = assemble_bundle(KernelKind::Softmax, inst.params, inst.batch, qk);
  rep.grad_wq_norm = g.norm(Group::Q);
  rep.grad_wk_norm = g.norm(Group::K);
  rep.fd_wq_norm = fd_gradient(KernelKind::Softmax, inst.params, inst.batch, Group::Q, 0).norm();
  rep.fd_wk_norm = fd_gradient(KernelKind::Softmax, inst.params, inst.batch, Group::K, 0).norm();

  const Mat& l = inst.l_matrix;
  rep.l_row_gap = std::max(std::abs(l(0, 0) - l(0, 1)), std::abs(l(1, 0) - l(1, 1)));

  rep.gaussian_grad_wq_norm =
      assemble_bundle(KernelKind::Gaussian, inst.params, inst.batch, VariableSet::only(Group::Q))
          .norm(Group::Q);
  rep.conditions = spectral_report(KernelKind::Softmax, inst.params, inst.batch);

  rep.pass = rep.loss > 0.0 && rep.grad_wq_norm <= 1e-12 && rep.grad_wk_norm <= 1e-12 &&
             rep.fd_wq_norm <= 1e-7 && rep.fd_wk_norm <= 1e-7;
  return rep;
}

}  // namespace attnlab
