#pragma once

#include <complex>
#include <optional>
#include <vector>

#include "plob/grid.hpp"
#include "plob/tensor.hpp"

namespace plob {

enum class Rep { Physical, Spectral };

/// Multi-component periodic field with a current representation tag.
/// Physical storage is row-major with the last axis fastest; spectral
/// storage is the half-complex r2c layout. Spectral coefficients are true
/// Fourier coefficients: f(x) = sum_k fhat(k) exp(i k.x).
class GridField {
 public:
  GridField(const Grid& g, int ncomp, Rep rep = Rep::Physical);

  const Grid& grid() const { return grid_; }
  int ncomp() const { return ncomp_; }
  Rep rep() const { return rep_; }

  double* phys(int c);
  const double* phys(int c) const;
  std::complex<double>* spec(int c);
  const std::complex<double>* spec(int c) const;

  void to_physical();
  void to_spectral();
  void set_zero();

  /// Zero every mode with any |m_axis| above the 2/3 cut. Leaves the
  /// representation spectral.
  void dealias();

  /// True when every physical value is finite.
  bool finite() const;

  GridField& operator+=(const GridField& o);
  GridField& operator-=(const GridField& o);
  GridField& operator*=(double s);

 private:
  Grid grid_;
  int ncomp_ = 0;
  Rep rep_ = Rep::Physical;
  std::vector<double> phys_;
  std::vector<std::complex<double>> spec_;
};

class ScalarField : public GridField {
 public:
  explicit ScalarField(const Grid& g, Rep rep = Rep::Physical)
      : GridField(g, 1, rep) {}
  static ScalarField constant(const Grid& g, double value);
};

class VectorField : public GridField {
 public:
  explicit VectorField(const Grid& g, Rep rep = Rep::Physical)
      : GridField(g, g.dim(), rep) {}
};

/// Symmetric tensor field, packed component order matching SymMat.
class SymTensorField : public GridField {
 public:
  explicit SymTensorField(const Grid& g, Rep rep = Rep::Physical)
      : GridField(g, g.dim() * (g.dim() + 1) / 2, rep) {}
  static SymTensorField isotropic(const Grid& g, double value);

  SymMat mat_at(std::size_t p) const;       // requires physical rep
  void set_mat(std::size_t p, const SymMat& m);
};

// --- representation helpers -----------------------------------------------

template <class F>
F as_physical(const F& f) {
  if (f.rep() == Rep::Physical) return f;
  F g = f;
  g.to_physical();
  return g;
}

template <class F>
F as_spectral(const F& f) {
  if (f.rep() == Rep::Spectral) return f;
  F g = f;
  g.to_spectral();
  return g;
}

// --- calculus --------------------------------------------------------------

/// Exact spectral gradient of a scalar. Odd derivatives zero the Nyquist
/// mode; dealiased state fields never populate it.
VectorField gradient(const ScalarField& f);

ScalarField divergence(const VectorField& v);

/// (Div T)_i = d_j T_ij for symmetric T.
VectorField tensor_divergence(const SymTensorField& T);

/// All partial derivatives d_j u_i as dim^2 physical scalars, index i*dim+j.
std::vector<ScalarField> velocity_gradient(const VectorField& u);

template <class F>
F laplacian(const F& f);

/// partial derivative along one axis for every component (spectral result)
template <class F>
F derivative(const F& f, int axis);

// --- reductions -------------------------------------------------------------

double integrate(const ScalarField& f);

/// Grid-quadrature L^p norm of the pointwise magnitude (Frobenius for
/// tensors, off-diagonal entries counted twice). p = infinity gives the max.
double lp_norm(const GridField& f, double p);

/// integral of the pointwise inner product (tensor off-diagonals doubled)
double inner_product(const GridField& a, const GridField& b);

double min_value(const ScalarField& f);
double max_abs(const GridField& f);

// --- constructions ----------------------------------------------------------

/// Band-limited random field with spectral amplitude |m|^(-decay), scaled so
/// the physical fluctuation magnitude is `amplitude`. A positivity floor
/// shifts the result to min = floor. Deterministic in (grid, seed).
ScalarField random_smooth_field(const Grid& g, unsigned long long seed,
                                double decay, double amplitude,
                                std::optional<double> positivity_floor = {});

VectorField random_smooth_vector(const Grid& g, unsigned long long seed,
                                 double decay, double amplitude);

SymTensorField random_smooth_symtensor(const Grid& g, unsigned long long seed,
                                       double decay, double amplitude);

/// Remove the compressible part: u - grad(inverse_laplacian(div u)).
void solenoidal_project(VectorField& u);

/// Spectral restriction to a coarser grid (same length). Modes at or above
/// the coarse Nyquist are dropped.
template <class F>
F restrict_to(const F& f, const Grid& coarse);

/// Spectral prolongation (zero padding) to a finer grid (same length).
template <class F>
F prolong_to(const F& f, const Grid& fine);

}  // namespace plob
