#include "attnlab/model.hpp"

#include "attnlab/errors.hpp"

#include <cmath>
#include <string>

namespace attnlab {

void Dims::validate() const {
  if (N <= 0 || n <= 0 || D <= 0 || d <= 0 || H <= 0) {
    throw ConfigError("dims must be strictly positive (N=" + std::to_string(N) +
                      " n=" + std::to_string(n) + " D=" + std::to_string(D) +
                      " d=" + std::to_string(d) + " H=" + std::to_string(H) + ")");
  }
}

std::string_view to_string(KernelKind k) {
  return k == KernelKind::Softmax ? "softmax" : "gaussian";
}

KernelKind parse_kernel(std::string_view s) {
  if (s == "softmax") return KernelKind::Softmax;
  if (s == "gaussian") return KernelKind::Gaussian;
  throw ConfigError("unknown kernel '" + std::string(s) + "' (expected softmax|gaussian)");
}

ModelParams ModelParams::zeros(const Dims& dims) {
  dims.validate();
  ModelParams p;
  p.dims = dims;
  for (int h = 0; h < dims.H; ++h) {
    p.wq.push_back(Mat::Zero(dims.D, dims.d));
    p.wk.push_back(Mat::Zero(dims.D, dims.d));
    p.wv.push_back(Mat::Zero(dims.D, dims.d));
  }
  p.wo = Mat::Zero(dims.H * dims.d, 1);
  return p;
}

namespace {

void check_group(const std::vector<Mat>& g, const Dims& dims, const char* name) {
  if (static_cast<int>(g.size()) != dims.H) {
    throw ConfigError(std::string(name) + ": expected " + std::to_string(dims.H) + " heads, got " +
                      std::to_string(g.size()));
  }
  for (const auto& m : g) {
    if (m.rows() != dims.D || m.cols() != dims.d) {
      throw ConfigError(std::string(name) + ": expected D×d = " + std::to_string(dims.D) + "x" +
                        std::to_string(dims.d));
    }
  }
}

}  // namespace

void ModelParams::validate() const {
  dims.validate();
  check_group(wq, dims, "wq");
  check_group(wk, dims, "wk");
  check_group(wv, dims, "wv");
  if (wo.rows() != dims.H * dims.d || wo.cols() != 1) {
    throw ConfigError("wo: expected Hd×1");
  }
}

void DatasetBatch::validate() const {
  dims.validate();
  if (x.rows() != dims.rows() || x.cols() != dims.D) {
    throw ConfigError("x: expected Nn×D = " + std::to_string(dims.rows()) + "x" +
                      std::to_string(dims.D));
  }
  if (y.size() != dims.rows()) {
    throw ConfigError("y: expected " + std::to_string(dims.rows()) + " labels");
  }
}

DatasetBatch DatasetBatch::slice(int i) const {
  if (i < 0 || i >= dims.N) throw ConfigError("sample index out of range");
  DatasetBatch out;
  out.dims = dims;
  out.dims.N = 1;
  out.x = sample(i);
  out.y = labels(i);
  return out;
}

Mat softmax_rows(const Mat& c) {
  Mat s(c.rows(), c.cols());
  for (Eigen::Index k = 0; k < c.rows(); ++k) {
    const double mx = c.row(k).maxCoeff();
    s.row(k) = (c.row(k).array() - mx).exp().matrix();
    s.row(k) /= s.row(k).sum();
  }
  return s;
}

namespace {

void check_pair(const ModelParams& params, const DatasetBatch& batch) {
  params.validate();
  batch.validate();
  if (!(params.dims == batch.dims)) {
    throw ConfigError("params and batch disagree on dims");
  }
}

Mat gaussian_scores(const Mat& xq, const Mat& xk, double sqrt_d) {
  const Eigen::Index n = xq.rows();
  Mat c(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    for (Eigen::Index j = 0; j < n; ++j) {
      c(k, j) = -(xq.row(k) - xk.row(j)).squaredNorm() / (2.0 * sqrt_d);
    }
  }
  return c;
}

}  // namespace

AttentionState scores(KernelKind kind, const ModelParams& params, const DatasetBatch& batch) {
  check_pair(params, batch);
  const Dims& dm = params.dims;
  const double sqrt_d = std::sqrt(static_cast<double>(dm.d));

  AttentionState st;
  st.kind = kind;
  st.c.assign(dm.N, std::vector<Mat>(dm.H));
  st.s.assign(dm.N, std::vector<Mat>(dm.H));
  st.b.resize(dm.rows(), dm.H * dm.D);
  st.vprime.resize(dm.N);

  for (int i = 0; i < dm.N; ++i) {
    const Mat xi = batch.sample(i);
    st.vprime[i] = Mat::Zero(dm.H * dm.n, dm.H * dm.d);
    for (int h = 0; h < dm.H; ++h) {
      const Mat xq = xi * params.wq[h];
      const Mat xk = xi * params.wk[h];
      if (kind == KernelKind::Softmax) {
        st.c[i][h] = xq * xk.transpose() / sqrt_d;
        st.s[i][h] = softmax_rows(st.c[i][h]);
      } else {
        st.c[i][h] = gaussian_scores(xq, xk, sqrt_d);
        st.s[i][h] = st.c[i][h].array().exp().matrix();
      }
      st.b.block(i * dm.n, h * dm.D, dm.n, dm.D) = st.s[i][h] * xi;
      st.vprime[i].block(h * dm.n, h * dm.d, dm.n, dm.d) = xi * params.wv[h];
    }
  }
  return st;
}

Vec predict(const AttentionState& state, const ModelParams& params) {
  const Dims& dm = params.dims;
  Vec out = Vec::Zero(dm.rows());
  for (int h = 0; h < dm.H; ++h) {
    const Vec value = params.wv[h] * params.wo_head(h);
    out += state.b.middleCols(h * dm.D, dm.D) * value;
  }
  return out;
}

Vec forward(KernelKind kind, const ModelParams& params, const DatasetBatch& batch) {
  return predict(scores(kind, params, batch), params);
}

double loss(KernelKind kind, const ModelParams& params, const DatasetBatch& batch) {
  return half_sq(forward(kind, params, batch) - batch.y);
}

}  // namespace attnlab
