#include "plob/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace plob {

namespace {

void check_dim(int d, const char* who) {
  if (d != 2 && d != 3) throw DomainError(std::string(who) + ": dim must be 2 or 3");
}

}  // namespace

Mat::Mat(int d) : dim(d) { check_dim(d, "Mat"); }

Mat Mat::identity(int d) {
  Mat m(d);
  for (int i = 0; i < d; ++i) m(i, i) = 1.0;
  return m;
}

double Mat::trace() const {
  double t = 0.0;
  for (int i = 0; i < dim; ++i) t += (*this)(i, i);
  return t;
}

Mat Mat::transposed() const {
  Mat m(dim);
  for (int i = 0; i < dim; ++i)
    for (int j = 0; j < dim; ++j) m(i, j) = (*this)(j, i);
  return m;
}

Mat operator*(const Mat& A, const Mat& B) {
  Mat C(A.dim);
  for (int i = 0; i < A.dim; ++i)
    for (int j = 0; j < A.dim; ++j) {
      double s = 0.0;
      for (int k = 0; k < A.dim; ++k) s += A(i, k) * B(k, j);
      C(i, j) = s;
    }
  return C;
}

Mat operator+(const Mat& A, const Mat& B) {
  Mat C(A.dim);
  for (int i = 0; i < A.dim; ++i)
    for (int j = 0; j < A.dim; ++j) C(i, j) = A(i, j) + B(i, j);
  return C;
}

SymMat::SymMat(int d) : dim_(d) { check_dim(d, "SymMat"); }

int SymMat::pack(int i, int j) const { return packed_index(dim_, i, j); }

SymMat SymMat::identity(int d) {
  SymMat m(d);
  for (int i = 0; i < d; ++i) m.set(i, i, 1.0);
  return m;
}

SymMat SymMat::diag(int d, const std::array<double, 3>& v) {
  SymMat m(d);
  for (int i = 0; i < d; ++i) m.set(i, i, v[i]);
  return m;
}

double SymMat::trace() const {
  double t = 0.0;
  for (int i = 0; i < dim_; ++i) t += (*this)(i, i);
  return t;
}

double SymMat::contract(const SymMat& other) const {
  double s = 0.0;
  for (int i = 0; i < dim_; ++i)
    for (int j = 0; j < dim_; ++j) s += (*this)(i, j) * other(i, j);
  return s;
}

Mat SymMat::full() const {
  Mat m(dim_);
  for (int i = 0; i < dim_; ++i)
    for (int j = 0; j < dim_; ++j) m(i, j) = (*this)(i, j);
  return m;
}

SymMat& SymMat::operator+=(const SymMat& o) {
  for (int c = 0; c < packed_size(); ++c) a_[c] += o.a_[c];
  return *this;
}

SymMat& SymMat::operator-=(const SymMat& o) {
  for (int c = 0; c < packed_size(); ++c) a_[c] -= o.a_[c];
  return *this;
}

SymMat& SymMat::operator*=(double s) {
  for (int c = 0; c < packed_size(); ++c) a_[c] *= s;
  return *this;
}

SymMat operator+(SymMat a, const SymMat& b) { return a += b; }
SymMat operator-(SymMat a, const SymMat& b) { return a -= b; }
SymMat operator*(double s, SymMat a) { return a *= s; }

namespace {

void sort_descending(SpectralDecomp& d) {
  // selection sort on at most 3 entries, swapping eigenvector columns along
  for (int i = 0; i < d.dim - 1; ++i) {
    int imax = i;
    for (int j = i + 1; j < d.dim; ++j)
      if (d.eigvals[j] > d.eigvals[imax]) imax = j;
    if (imax != i) {
      std::swap(d.eigvals[i], d.eigvals[imax]);
      for (int r = 0; r < d.dim; ++r)
        std::swap(d.eigvecs(r, i), d.eigvecs(r, imax));
    }
  }
}

SpectralDecomp eig_sym_2d(const SymMat& P) {
  SpectralDecomp d;
  d.dim = 2;
  d.eigvecs = Mat::identity(2);
  const double a = P(0, 0), b = P(0, 1), c = P(1, 1);
  if (b == 0.0) {
    d.eigvals = {a, c, 0.0};
    sort_descending(d);
    return d;
  }
  const double mean = 0.5 * (a + c);
  const double half_gap = 0.5 * (a - c);
  const double disc = std::hypot(half_gap, b);
  const double l1 = mean + disc;
  const double l2 = mean - disc;
  // eigenvector for l1: pick the better conditioned of the two row forms
  double vx, vy;
  if (std::abs(l1 - a) > std::abs(l1 - c)) {
    vx = b;
    vy = l1 - a;
  } else {
    vx = l1 - c;
    vy = b;
  }
  const double nrm = std::hypot(vx, vy);
  vx /= nrm;
  vy /= nrm;
  d.eigvals = {l1, l2, 0.0};
  d.eigvecs(0, 0) = vx;
  d.eigvecs(1, 0) = vy;
  d.eigvecs(0, 1) = -vy;  // rotation of the first column, exactly orthogonal
  d.eigvecs(1, 1) = vx;
  return d;
}

SpectralDecomp eig_sym_3d(const SymMat& P) {
  // cyclic Jacobi
  double A[3][3];
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) A[i][j] = P(i, j);
  double V[3][3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};

  double frob = 0.0;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) frob += A[i][j] * A[i][j];
  frob = std::sqrt(frob);
  const double tol = 1e-13 * std::max(1.0, frob);

  for (int sweep = 0; sweep < 64; ++sweep) {
    double off = std::sqrt(A[0][1] * A[0][1] + A[0][2] * A[0][2] +
                           A[1][2] * A[1][2]) * std::sqrt(2.0);
    if (off <= tol) break;
    for (int p = 0; p < 2; ++p) {
      for (int q = p + 1; q < 3; ++q) {
        const double apq = A[p][q];
        if (apq == 0.0) continue;
        const double theta = (A[q][q] - A[p][p]) / (2.0 * apq);
        const double t = (theta >= 0.0)
                             ? 1.0 / (theta + std::sqrt(1.0 + theta * theta))
                             : 1.0 / (theta - std::sqrt(1.0 + theta * theta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = t * c;
        const double tau = s / (1.0 + c);
        const double h = t * apq;
        A[p][p] -= h;
        A[q][q] += h;
        A[p][q] = A[q][p] = 0.0;
        for (int r = 0; r < 3; ++r) {
          if (r != p && r != q) {
            const double arp = A[r][p], arq = A[r][q];
            A[r][p] = A[p][r] = arp - s * (arq + tau * arp);
            A[r][q] = A[q][r] = arq + s * (arp - tau * arq);
          }
          const double vrp = V[r][p], vrq = V[r][q];
          V[r][p] = vrp - s * (vrq + tau * vrp);
          V[r][q] = vrq + s * (vrp - tau * vrq);
        }
      }
    }
  }

  SpectralDecomp d;
  d.dim = 3;
  d.eigvecs = Mat(3);
  d.eigvals = {A[0][0], A[1][1], A[2][2]};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) d.eigvecs(i, j) = V[i][j];
  sort_descending(d);
  return d;
}

}  // namespace

SpectralDecomp eig_sym(const SymMat& P) {
  check_dim(P.dim(), "eig_sym");
  return P.dim() == 2 ? eig_sym_2d(P) : eig_sym_3d(P);
}

SymMat recompose(const SpectralDecomp& d, const std::array<double, 3>& v) {
  SymMat R(d.dim);
  for (int i = 0; i < d.dim; ++i)
    for (int j = i; j < d.dim; ++j) {
      double s = 0.0;
      for (int k = 0; k < d.dim; ++k)
        s += d.eigvecs(i, k) * v[k] * d.eigvecs(j, k);
      R.set(i, j, s);
    }
  return R;
}

SymMat apply_fn(const std::function<double(double)>& g, const SymMat& P) {
  SpectralDecomp d = eig_sym(P);
  std::array<double, 3> v{};
  for (int k = 0; k < d.dim; ++k) {
    v[k] = g(d.eigvals[k]);
    if (!std::isfinite(v[k]))
      throw DomainError("apply_fn: function not finite on spectrum");
  }
  return recompose(d, v);
}

SymMat chi_sigma(const SymMat& P, double sigma) {
  SpectralDecomp d = eig_sym(P);
  if (d.eigvals[d.dim - 1] >= sigma) return P;
  std::array<double, 3> v{};
  for (int k = 0; k < d.dim; ++k) v[k] = std::max(sigma, d.eigvals[k]);
  return recompose(d, v);
}

double g_sigma(double s, double sigma) {
  if (!(sigma > 0.0)) throw DomainError("g_sigma: sigma must be positive");
  return s >= sigma ? std::log(s) : s / sigma + std::log(sigma) - 1.0;
}

double trace_G_sigma(const SymMat& P, double sigma) {
  SpectralDecomp d = eig_sym(P);
  double t = 0.0;
  for (int k = 0; k < d.dim; ++k) t += g_sigma(d.eigvals[k], sigma);
  return t;
}

double trace_log_chi(const SymMat& P, double sigma) {
  SpectralDecomp d = eig_sym(P);
  double t = 0.0;
  for (int k = 0; k < d.dim; ++k) {
    const double s = std::max(sigma, d.eigvals[k]);
    if (s <= 0.0) throw DomainError("trace_log_chi: nonpositive eigenvalue");
    t += std::log(s);
  }
  return t;
}

SymMat sym_part(const Mat& G) {
  SymMat S(G.dim);
  for (int i = 0; i < G.dim; ++i)
    for (int j = i; j < G.dim; ++j) S.set(i, j, 0.5 * (G(i, j) + G(j, i)));
  return S;
}

SymMat deviatoric(const Mat& G) {
  SymMat S = sym_part(G);
  const double mean = G.trace() / G.dim;
  for (int i = 0; i < G.dim; ++i) S.set(i, i, S(i, i) - mean);
  return S;
}

SymMat stretch_term(const Mat& grad_u, const SymMat& T) {
  SymMat R(T.dim());
  for (int i = 0; i < T.dim(); ++i)
    for (int j = i; j < T.dim(); ++j) {
      double s = 0.0;
      for (int k = 0; k < T.dim(); ++k)
        s += grad_u(i, k) * T(k, j) + T(i, k) * grad_u(j, k);
      R.set(i, j, s);
    }
  return R;
}

double min_eig(const SymMat& P) {
  SpectralDecomp d = eig_sym(P);
  return d.eigvals[P.dim() - 1];
}

double op_norm(const SymMat& P) {
  SpectralDecomp d = eig_sym(P);
  return std::max(std::abs(d.eigvals[0]), std::abs(d.eigvals[P.dim() - 1]));
}

}  // namespace plob
