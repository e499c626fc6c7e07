#pragma once

// Dense 64-bit matrix primitives. Storage is column-major (Eigen's default),
// so vec() is plain column stacking and the Kronecker identities
//   vec(AB)  = (I ⊗ A) vec(B) = (Bᵀ ⊗ I) vec(A)
//   vec(ABC) = (Cᵀ ⊗ A) vec(B)
// hold without permutation matrices.

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace attnlab::num {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

/// Column-major stacking: column 0 first, then column 1, ...
Vec vec(const Mat& m);

/// Inverse of vec() for a rows×cols target.
Mat unvec(const Vec& v, Eigen::Index rows, Eigen::Index cols);

Mat kron(const Mat& a, const Mat& b);

Mat hadamard(const Mat& a, const Mat& b);

/// Elementwise reciprocal. Throws DomainError naming the first entry with
/// |x| <= 1e-300.
Mat upsilon(const Mat& m);

/// All min(rows, cols) singular values, descending. Throws NumericalError if
/// the input has non-finite entries or the decomposition fails.
Vec singular_values(const Mat& m);

double sigma_max(const Mat& m);

/// Smallest singular value of m viewed as a map onto its row space:
/// sqrt(λ_min(m mᵀ)). Zero whenever cols < rows, since m cannot then have
/// full row rank.
double sigma_min_rows(const Mat& m);

/// Count of singular values above rel_tol · σ_max.
std::size_t numerical_rank(const Mat& m, double rel_tol = 1e-10);

double frobenius(const Mat& m);

/// Operator 2-norm (largest singular value).
double spectral_norm(const Mat& m);

bool all_finite(const Mat& m);

/// Block-diagonal assembly of equally shaped blocks.
Mat block_diag(const std::vector<Mat>& blocks);

}  // namespace attnlab::num
