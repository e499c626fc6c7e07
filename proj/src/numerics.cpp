#include "attnlab/numerics.hpp"

#include "attnlab/errors.hpp"

#include <cmath>
#include <string>

namespace attnlab::num {

Vec vec(const Mat& m) {
  return Eigen::Map<const Vec>(m.data(), m.size());
}

Mat unvec(const Vec& v, Eigen::Index rows, Eigen::Index cols) {
  if (v.size() != rows * cols) {
    throw ConfigError("unvec: " + std::to_string(v.size()) + " entries cannot fill " +
                      std::to_string(rows) + "x" + std::to_string(cols));
  }
  return Eigen::Map<const Mat>(v.data(), rows, cols);
}

Mat kron(const Mat& a, const Mat& b) {
  Mat out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    }
  }
  return out;
}

Mat hadamard(const Mat& a, const Mat& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ConfigError("hadamard: shape mismatch");
  }
  return a.cwiseProduct(b);
}

Mat upsilon(const Mat& m) {
  for (Eigen::Index j = 0; j < m.cols(); ++j) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
      if (!(std::abs(m(i, j)) > 1e-300)) {
        throw DomainError("upsilon: entry (" + std::to_string(i) + "," + std::to_string(j) +
                          ") is zero or denormal");
      }
    }
  }
  return m.cwiseInverse();
}

Vec singular_values(const Mat& m) {
  if (m.size() == 0) return Vec();
  if (!all_finite(m)) {
    throw NumericalError("singular_values: non-finite input");
  }
  // One-sided Jacobi is the most accurate choice at these sizes; Eigen caps
  // its sweeps internally and reports failure through info().
  Eigen::JacobiSVD<Mat> svd(m);
  if (svd.info() != Eigen::Success) {
    throw NumericalError("singular_values: SVD did not converge");
  }
  return svd.singularValues();
}

double sigma_max(const Mat& m) {
  const Vec s = singular_values(m);
  return s.size() == 0 ? 0.0 : s(0);
}

double sigma_min_rows(const Mat& m) {
  if (m.rows() == 0) return 0.0;
  if (m.cols() < m.rows()) return 0.0;
  const Vec s = singular_values(m);
  return s(s.size() - 1);
}

std::size_t numerical_rank(const Mat& m, double rel_tol) {
  const Vec s = singular_values(m);
  if (s.size() == 0 || s(0) == 0.0) return 0;
  std::size_t r = 0;
  for (Eigen::Index i = 0; i < s.size(); ++i) {
    if (s(i) > rel_tol * s(0)) ++r;
  }
  return r;
}

double frobenius(const Mat& m) { return m.norm(); }

double spectral_norm(const Mat& m) { return sigma_max(m); }

bool all_finite(const Mat& m) { return m.allFinite(); }

Mat block_diag(const std::vector<Mat>& blocks) {
  Eigen::Index rows = 0, cols = 0;
  for (const auto& b : blocks) {
    rows += b.rows();
    cols += b.cols();
  }
  Mat out = Mat::Zero(rows, cols);
  Eigen::Index r = 0, c = 0;
  for (const auto& b : blocks) {
    out.block(r, c, b.rows(), b.cols()) = b;
    r += b.rows();
    c += b.cols();
  }
  return out;
}

}  // namespace attnlab::num
