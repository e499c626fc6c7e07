#include "attnlab/gradients.hpp"

#include "attnlab/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

namespace attnlab {

std::string_view to_string(Group g) {
  switch (g) {
    case Group::Q: return "Q";
    case Group::K: return "K";
    case Group::V: return "V";
  }
  return "?";
}

VariableSet VariableSet::only(Group g) {
  VariableSet s;
  switch (g) {
    case Group::Q: s.q = true; break;
    case Group::K: s.k = true; break;
    case Group::V: s.v = true; break;
  }
  return s;
}

VariableSet VariableSet::parse(std::string_view text) {
  VariableSet s;
  if (text.empty() || text == "none" || text == "-") return s;
  for (char ch : text) {
    switch (std::toupper(static_cast<unsigned char>(ch))) {
      case 'Q': s.q = true; break;
      case 'K': s.k = true; break;
      case 'V': s.v = true; break;
      case ',': case ' ': break;
      default:
        throw ConfigError("variable set '" + std::string(text) + "': expected letters from QKV");
    }
  }
  return s;
}

bool VariableSet::contains(Group g) const {
  switch (g) {
    case Group::Q: return q;
    case Group::K: return k;
    case Group::V: return v;
  }
  return false;
}

std::string VariableSet::str() const {
  std::string out;
  if (q) out += 'Q';
  if (k) out += 'K';
  if (v) out += 'V';
  return out.empty() ? "none" : out;
}

const std::vector<Mat>& GradientBundle::group(Group g) const {
  switch (g) {
    case Group::Q: return wq;
    case Group::K: return wk;
    case Group::V: return wv;
  }
  return wv;
}

double GradientBundle::norm(Group g) const {
  double sq = 0.0;
  for (const auto& m : group(g)) sq += m.squaredNorm();
  return std::sqrt(sq);
}

double GradientBundle::squared_norm() const {
  double sq = 0.0;
  for (Group g : {Group::Q, Group::K, Group::V}) {
    for (const auto& m : group(g)) sq += m.squaredNorm();
  }
  return sq;
}

Mat& weight(ModelParams& params, Group g, int h) {
  switch (g) {
    case Group::Q: return params.wq.at(h);
    case Group::K: return params.wk.at(h);
    case Group::V: return params.wv.at(h);
  }
  return params.wv.at(h);
}

const Mat& weight(const ModelParams& params, Group g, int h) {
  return weight(const_cast<ModelParams&>(params), g, h);
}

Mat residual_weight(const AttentionState& state, const Vec& residual, const ModelParams& params,
                    int i) {
  const Dims& dm = params.dims;
  const Vec value = state.vprime.at(i) * params.wo;  // Hn
  return residual.segment(i * dm.n, dm.n) * value.transpose();
}

std::vector<Mat> grad_wv(const AttentionState& state, const Vec& residual,
                         const ModelParams& params) {
  const Dims& dm = params.dims;
  std::vector<Mat> out;
  out.reserve(dm.H);
  const Vec bt_r = state.b.transpose() * residual;  // HD
  for (int h = 0; h < dm.H; ++h) {
    out.push_back(bt_r.segment(h * dm.D, dm.D) * params.wo_head(h).transpose());
  }
  return out;
}

namespace {

void require_kind(const AttentionState& state, KernelKind kind, const char* op) {
  if (state.kind != kind || state.s.empty()) {
    throw InternalError(std::string(op) + ": attention state was not built for the " +
                        std::string(to_string(kind)) + " kernel");
  }
}

}  // namespace

Mat grad_c_softmax(const AttentionState& state, const Vec& residual, const ModelParams& params,
                   int i) {
  require_kind(state, KernelKind::Softmax, "grad_c_softmax");
  const Dims& dm = params.dims;
  const Mat r = residual_weight(state, residual, params, i);
  Mat out(dm.n, dm.H * dm.n);
  for (int h = 0; h < dm.H; ++h) {
    const Mat& s = state.s[i][h];
    const auto rh = r.middleCols(h * dm.n, dm.n);
    const Vec centre = s.cwiseProduct(rh).rowwise().sum();
    out.middleCols(h * dm.n, dm.n) = s.cwiseProduct(rh.colwise() - centre);
  }
  return out;
}

Mat grad_c_gaussian(const AttentionState& state, const Vec& residual, const ModelParams& params,
                    int i) {
  require_kind(state, KernelKind::Gaussian, "grad_c_gaussian");
  const Dims& dm = params.dims;
  const Mat r = residual_weight(state, residual, params, i);
  Mat out(dm.n, dm.H * dm.n);
  for (int h = 0; h < dm.H; ++h) {
    out.middleCols(h * dm.n, dm.n) = r.middleCols(h * dm.n, dm.n).cwiseProduct(state.s[i][h]);
  }
  return out;
}

CGradient grad_c(const AttentionState& state, const Vec& residual, const ModelParams& params) {
  CGradient g;
  g.dc.reserve(params.dims.N);
  for (int i = 0; i < params.dims.N; ++i) {
    g.dc.push_back(state.kind == KernelKind::Softmax
                       ? grad_c_softmax(state, residual, params, i)
                       : grad_c_gaussian(state, residual, params, i));
  }
  return g;
}

namespace {

// Head-h block of ∂f/∂C_i: the selection the block matrix P_h performs.
auto head_block(const CGradient& cg, const Dims& dm, int i, int h) {
  return cg.dc.at(i).middleCols(h * dm.n, dm.n);
}

}  // namespace

Mat grad_wq_softmax(const AttentionState& state, const CGradient& cgrad, const DatasetBatch& batch,
                    const ModelParams& params, int h) {
  require_kind(state, KernelKind::Softmax, "grad_wq_softmax");
  const Dims& dm = params.dims;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dm.d));
  Mat g = Mat::Zero(dm.D, dm.d);
  for (int i = 0; i < dm.N; ++i) {
    const Mat xi = batch.sample(i);
    g += inv * xi.transpose() * head_block(cgrad, dm, i, h) * (xi * params.wk[h]);
  }
  return g;
}

Mat grad_wk_softmax(const AttentionState& state, const CGradient& cgrad, const DatasetBatch& batch,
                    const ModelParams& params, int h) {
  require_kind(state, KernelKind::Softmax, "grad_wk_softmax");
  const Dims& dm = params.dims;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dm.d));
  Mat g = Mat::Zero(dm.D, dm.d);
  for (int i = 0; i < dm.N; ++i) {
    const Mat xi = batch.sample(i);
    g += inv * xi.transpose() * head_block(cgrad, dm, i, h).transpose() * (xi * params.wq[h]);
  }
  return g;
}

// ∂(C_ih)_kj/∂W^Q_h = −(1/√d) X_ikᵀ (X_ik W^Q_h − X_ij W^K_h). Summing
// G_kj times that over (k, j) gives −(1/√d) X_iᵀ (diag(G·1) A − G Bk) with
// A = X_i W^Q_h and Bk = X_i W^K_h.
Mat grad_wq_gaussian(const AttentionState& state, const CGradient& cgrad,
                     const DatasetBatch& batch, const ModelParams& params, int h) {
  require_kind(state, KernelKind::Gaussian, "grad_wq_gaussian");
  const Dims& dm = params.dims;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dm.d));
  Mat g = Mat::Zero(dm.D, dm.d);
  for (int i = 0; i < dm.N; ++i) {
    const Mat xi = batch.sample(i);
    const Mat gc = head_block(cgrad, dm, i, h);
    const Mat a = xi * params.wq[h];
    const Mat bk = xi * params.wk[h];
    const Vec rows = gc.rowwise().sum();
    g -= inv * xi.transpose() * (rows.asDiagonal() * a - gc * bk);
  }
  return g;
}

// ∂(C_ih)_kj/∂W^K_h = +(1/√d) X_ijᵀ (X_ik W^Q_h − X_ij W^K_h).
Mat grad_wk_gaussian(const AttentionState& state, const CGradient& cgrad,
                     const DatasetBatch& batch, const ModelParams& params, int h) {
  require_kind(state, KernelKind::Gaussian, "grad_wk_gaussian");
  const Dims& dm = params.dims;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dm.d));
  Mat g = Mat::Zero(dm.D, dm.d);
  for (int i = 0; i < dm.N; ++i) {
    const Mat xi = batch.sample(i);
    const Mat gc = head_block(cgrad, dm, i, h);
    const Mat a = xi * params.wq[h];
    const Mat bk = xi * params.wk[h];
    const Vec cols = gc.colwise().sum().transpose();
    g += inv * xi.transpose() * (gc.transpose() * a - cols.asDiagonal() * bk);
  }
  return g;
}

Mat fd_gradient(KernelKind kind, const ModelParams& params, const DatasetBatch& batch, Group group,
                int h) {
  ModelParams work = params;
  Mat& w = weight(work, group, h);
  Mat g(w.rows(), w.cols());
  for (Eigen::Index c = 0; c < w.cols(); ++c) {
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      const double orig = w(r, c);
      const double step = 1e-5 * std::max(1.0, std::abs(orig));
      w(r, c) = orig + step;
      const double up = loss(kind, work, batch);
      w(r, c) = orig - step;
      const double down = loss(kind, work, batch);
      w(r, c) = orig;
      g(r, c) = (up - down) / (2.0 * step);
    }
  }
  return g;
}

GradientBundle assemble_bundle(KernelKind kind, const AttentionState& state, const Vec& residual,
                               const ModelParams& params, const DatasetBatch& batch,
                               VariableSet vars) {
  if (state.kind != kind || static_cast<int>(state.s.size()) != params.dims.N ||
      state.b.rows() != params.dims.rows()) {
    throw InternalError("assemble_bundle: attention state does not match the requested " +
                        std::string(to_string(kind)) + " kernel and dims");
  }
  GradientBundle out;
  out.vars = vars;
  if (vars.v) out.wv = grad_wv(state, residual, params);
  if (!vars.q && !vars.k) return out;

  const CGradient cg = grad_c(state, residual, params);
  for (int h = 0; h < params.dims.H; ++h) {
    if (kind == KernelKind::Softmax) {
      if (vars.q) out.wq.push_back(grad_wq_softmax(state, cg, batch, params, h));
      if (vars.k) out.wk.push_back(grad_wk_softmax(state, cg, batch, params, h));
    } else {
      if (vars.q) out.wq.push_back(grad_wq_gaussian(state, cg, batch, params, h));
      if (vars.k) out.wk.push_back(grad_wk_gaussian(state, cg, batch, params, h));
    }
  }
  return out;
}

GradientBundle assemble_bundle(KernelKind kind, const ModelParams& params,
                               const DatasetBatch& batch, VariableSet vars) {
  const AttentionState st = scores(kind, params, batch);
  const Vec residual = predict(st, params) - batch.y;
  return assemble_bundle(kind, st, residual, params, batch, vars);
}

}  // namespace attnlab
