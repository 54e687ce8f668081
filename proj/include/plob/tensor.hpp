#pragma once

#include <array>
#include <functional>
#include <utility>

#include "plob/errors.hpp"

namespace plob {

/// Small dense dim x dim matrix (dim = 2 or 3), row-major.
/// Used for velocity gradients and eigenvector frames.
struct Mat {
  int dim = 0;
  std::array<double, 9> a{};

  Mat() = default;
  explicit Mat(int d);
  static Mat identity(int d);

  double operator()(int i, int j) const { return a[3 * i + j]; }
  double& operator()(int i, int j) { return a[3 * i + j]; }

  double trace() const;
  Mat transposed() const;
};

Mat operator*(const Mat& A, const Mat& B);
Mat operator+(const Mat& A, const Mat& B);

/// Symmetric dim x dim matrix, packed upper triangle.
/// 2-D order: xx, xy, yy.  3-D order: xx, xy, xz, yy, yz, zz.
class SymMat {
 public:
  SymMat() = default;
  explicit SymMat(int d);
  static SymMat identity(int d);
  static SymMat diag(int d, const std::array<double, 3>& v);

  int dim() const { return dim_; }
  int packed_size() const { return dim_ * (dim_ + 1) / 2; }

  /// packed slot of entry (i, j); order [i][j >= i] row-major
  static int packed_index(int dim, int i, int j) {
    if (i > j) std::swap(i, j);
    return i * dim - i * (i - 1) / 2 + (j - i);
  }

  double operator()(int i, int j) const { return a_[pack(i, j)]; }
  void set(int i, int j, double v) { a_[pack(i, j)] = v; }

  double packed(int c) const { return a_[c]; }
  double& packed(int c) { return a_[c]; }

  double trace() const;
  /// Frobenius inner product A:B (off-diagonal entries counted twice).
  double contract(const SymMat& other) const;
  double frobenius_sq() const { return contract(*this); }

  Mat full() const;

  SymMat& operator+=(const SymMat& o);
  SymMat& operator-=(const SymMat& o);
  SymMat& operator*=(double s);

 private:
  int pack(int i, int j) const;
  int dim_ = 0;
  std::array<double, 6> a_{};
};

SymMat operator+(SymMat a, const SymMat& b);
SymMat operator-(SymMat a, const SymMat& b);
SymMat operator*(double s, SymMat a);

/// Eigendecomposition P = Q diag(eigvals) Q^T with eigvals sorted
/// descending and Q orthogonal (columns are unit eigenvectors).
struct SpectralDecomp {
  int dim = 0;
  std::array<double, 3> eigvals{};
  Mat eigvecs;
};

/// Symmetric eigensolver: closed form in 2-D, cyclic Jacobi sweeps in 3-D
/// (off-diagonal Frobenius norm driven to 1e-13 relative to the matrix
/// scale). Deterministic for identical input.
SpectralDecomp eig_sym(const SymMat& P);

/// Reassemble Q diag(v) Q^T.
SymMat recompose(const SpectralDecomp& d, const std::array<double, 3>& v);

/// Matrix function g(P) = Q g(D) Q^T. Throws DomainError when g produces
/// a non-finite value on the spectrum.
SymMat apply_fn(const std::function<double(double)>& g, const SymMat& P);

/// Eigenvalue floor: chi_sigma(P) = Q max(sigma, D) Q^T. When no eigenvalue
/// is below sigma the input is returned unchanged.
SymMat chi_sigma(const SymMat& P, double sigma);

/// Scalar regularized logarithm:
///   G_sigma(s) = log s            for s >= sigma
///   G_sigma(s) = s/sigma + log sigma - 1   for s < sigma
/// (C^1, concave, G_sigma' = 1/chi_sigma). Requires sigma > 0.
double g_sigma(double s, double sigma);

/// Sum of G_sigma over the spectrum of P.
double trace_G_sigma(const SymMat& P, double sigma);

/// Trace of log chi_sigma(P). sigma = 0 demands a positive definite P and
/// falls back to the plain log of the spectrum.
double trace_log_chi(const SymMat& P, double sigma);

/// Symmetric part of a square matrix.
SymMat sym_part(const Mat& G);

/// Deviatoric symmetric gradient: sym(G) - (tr G / dim) I.
SymMat deviatoric(const Mat& G);

/// Oldroyd stretching term grad_u * T + T * grad_u^T (symmetric for
/// symmetric T).
SymMat stretch_term(const Mat& grad_u, const SymMat& T);

/// Smallest eigenvalue.
double min_eig(const SymMat& P);

/// Largest absolute eigenvalue (pointwise operator norm).
double op_norm(const SymMat& P);

}  // namespace plob
