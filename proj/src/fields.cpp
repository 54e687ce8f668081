#include "plob/fields.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <mutex>
#include <random>

namespace plob {

namespace {

struct PlanSet {
  fftw_plan fwd = nullptr;
  fftw_plan bwd = nullptr;
};

// One plan pair per (dim, n). FFTW_ESTIMATE keeps planning deterministic
// (measured planning is timing-dependent); FFTW_UNALIGNED lets the plans
// run on ordinary vector storage.
PlanSet& plans_for(const Grid& g) {
  static std::map<std::pair<int, int>, PlanSet> cache;
  static std::mutex mu;
  std::lock_guard<std::mutex> lock(mu);
  const auto key = std::make_pair(g.dim(), g.n());
  auto it = cache.find(key);
  if (it != cache.end()) return it->second;

  std::vector<int> dims(g.dim(), g.n());
  double* pr = fftw_alloc_real(g.points());
  fftw_complex* pc = fftw_alloc_complex(g.modes());
  PlanSet ps;
  ps.fwd = fftw_plan_dft_r2c(g.dim(), dims.data(), pr, pc,
                             FFTW_ESTIMATE | FFTW_UNALIGNED);
  ps.bwd = fftw_plan_dft_c2r(g.dim(), dims.data(), pc, pr,
                             FFTW_ESTIMATE | FFTW_UNALIGNED);
  fftw_free(pr);
  fftw_free(pc);
  return cache.emplace(key, ps).first->second;
}

int nyquist_test(int m, int n) { return std::abs(m) == n / 2; }

}  // namespace

GridField::GridField(const Grid& g, int ncomp, Rep rep)
    : grid_(g),
      ncomp_(ncomp),
      rep_(rep),
      phys_(static_cast<std::size_t>(ncomp) * g.points(), 0.0),
      spec_(static_cast<std::size_t>(ncomp) * g.modes(), {0.0, 0.0}) {}

double* GridField::phys(int c) {
  if (rep_ != Rep::Physical)
    throw DomainError("field access: physical representation required");
  return phys_.data() + static_cast<std::size_t>(c) * grid_.points();
}

const double* GridField::phys(int c) const {
  if (rep_ != Rep::Physical)
    throw DomainError("field access: physical representation required");
  return phys_.data() + static_cast<std::size_t>(c) * grid_.points();
}

std::complex<double>* GridField::spec(int c) {
  if (rep_ != Rep::Spectral)
    throw DomainError("field access: spectral representation required");
  return spec_.data() + static_cast<std::size_t>(c) * grid_.modes();
}

const std::complex<double>* GridField::spec(int c) const {
  if (rep_ != Rep::Spectral)
    throw DomainError("field access: spectral representation required");
  return spec_.data() + static_cast<std::size_t>(c) * grid_.modes();
}

void GridField::to_spectral() {
  if (rep_ == Rep::Spectral) return;
  PlanSet& ps = plans_for(grid_);
  const double scale = 1.0 / static_cast<double>(grid_.points());
  for (int c = 0; c < ncomp_; ++c) {
    double* in = phys_.data() + static_cast<std::size_t>(c) * grid_.points();
    auto* out = reinterpret_cast<fftw_complex*>(
        spec_.data() + static_cast<std::size_t>(c) * grid_.modes());
    fftw_execute_dft_r2c(ps.fwd, in, out);
  }
  for (auto& z : spec_) z *= scale;
  rep_ = Rep::Spectral;
}

void GridField::to_physical() {
  if (rep_ == Rep::Physical) return;
  PlanSet& ps = plans_for(grid_);
  // multidimensional c2r destroys its input, so run on a scratch copy
  std::vector<std::complex<double>> scratch(grid_.modes());
  for (int c = 0; c < ncomp_; ++c) {
    std::memcpy(scratch.data(),
                spec_.data() + static_cast<std::size_t>(c) * grid_.modes(),
                grid_.modes() * sizeof(std::complex<double>));
    fftw_execute_dft_c2r(
        ps.bwd, reinterpret_cast<fftw_complex*>(scratch.data()),
        phys_.data() + static_cast<std::size_t>(c) * grid_.points());
  }
  rep_ = Rep::Physical;
}

void GridField::set_zero() {
  std::fill(phys_.begin(), phys_.end(), 0.0);
  std::fill(spec_.begin(), spec_.end(), std::complex<double>{0.0, 0.0});
}

void GridField::dealias() {
  to_spectral();
  const int cut = grid_.dealias_cut();
  const std::size_t nm = grid_.modes();
  for (std::size_t s = 0; s < nm; ++s) {
    const auto m = grid_.mode_of(s);
    bool kill = false;
    for (int d = 0; d < grid_.dim(); ++d)
      if (std::abs(m[d]) > cut) kill = true;
    if (!kill) continue;
    for (int c = 0; c < ncomp_; ++c) spec_[c * nm + s] = {0.0, 0.0};
  }
}

bool GridField::finite() const {
  if (rep_ == Rep::Physical) {
    for (double v : phys_)
      if (!std::isfinite(v)) return false;
  } else {
    for (const auto& z : spec_)
      if (!std::isfinite(z.real()) || !std::isfinite(z.imag())) return false;
  }
  return true;
}

GridField& GridField::operator+=(const GridField& o) {
  if (grid_ != o.grid_ || ncomp_ != o.ncomp_)
    throw GridMismatchError("field +=: incompatible fields");
  if (rep_ == o.rep_) {
    if (rep_ == Rep::Physical)
      for (std::size_t i = 0; i < phys_.size(); ++i) phys_[i] += o.phys_[i];
    else
      for (std::size_t i = 0; i < spec_.size(); ++i) spec_[i] += o.spec_[i];
  } else {
    GridField tmp = o;
    if (rep_ == Rep::Physical)
      tmp.to_physical();
    else
      tmp.to_spectral();
    *this += tmp;
  }
  return *this;
}

GridField& GridField::operator-=(const GridField& o) {
  GridField tmp = o;
  tmp *= -1.0;
  return *this += tmp;
}

GridField& GridField::operator*=(double s) {
  if (rep_ == Rep::Physical)
    for (double& v : phys_) v *= s;
  else
    for (auto& z : spec_) z *= s;
  return *this;
}

ScalarField ScalarField::constant(const Grid& g, double value) {
  ScalarField f(g);
  double* p = f.phys(0);
  std::fill(p, p + g.points(), value);
  return f;
}

SymTensorField SymTensorField::isotropic(const Grid& g, double value) {
  SymTensorField f(g);
  for (int i = 0; i < g.dim(); ++i) {
    SymMat probe(g.dim());  // locate the packed slot of (i,i)
    probe.set(i, i, 1.0);
    for (int c = 0; c < f.ncomp(); ++c)
      if (probe.packed(c) == 1.0)
        std::fill(f.phys(c), f.phys(c) + g.points(), value);
  }
  return f;
}

SymMat SymTensorField::mat_at(std::size_t p) const {
  SymMat m(grid().dim());
  for (int c = 0; c < ncomp(); ++c) m.packed(c) = phys(c)[p];
  return m;
}

void SymTensorField::set_mat(std::size_t p, const SymMat& m) {
  for (int c = 0; c < ncomp(); ++c) phys(c)[p] = m.packed(c);
}

// --- calculus ---------------------------------------------------------------

namespace {

// multiply component c of the spectral field by (i k_axis), zeroing Nyquist
void apply_ik(const Grid& g, const std::complex<double>* in,
              std::complex<double>* out, int axis) {
  const std::size_t nm = g.modes();
  const double dk = g.dk();
  for (std::size_t s = 0; s < nm; ++s) {
    const auto m = g.mode_of(s);
    if (nyquist_test(m[axis], g.n())) {
      out[s] = {0.0, 0.0};
      continue;
    }
    const double k = dk * m[axis];
    out[s] = std::complex<double>(0.0, k) * in[s];
  }
}

}  // namespace

template <class F>
F derivative(const F& f, int axis) {
  F g = as_spectral(f);
  const Grid& gr = g.grid();
  std::vector<std::complex<double>> tmp(gr.modes());
  for (int c = 0; c < g.ncomp(); ++c) {
    apply_ik(gr, g.spec(c), tmp.data(), axis);
    std::copy(tmp.begin(), tmp.end(), g.spec(c));
  }
  return g;
}

template ScalarField derivative(const ScalarField&, int);
template VectorField derivative(const VectorField&, int);
template SymTensorField derivative(const SymTensorField&, int);

VectorField gradient(const ScalarField& f) {
  ScalarField fs = as_spectral(f);
  const Grid& g = fs.grid();
  VectorField out(g, Rep::Spectral);
  for (int axis = 0; axis < g.dim(); ++axis)
    apply_ik(g, fs.spec(0), out.spec(axis), axis);
  return out;
}

ScalarField divergence(const VectorField& v) {
  VectorField vs = as_spectral(v);
  const Grid& g = vs.grid();
  ScalarField out(g, Rep::Spectral);
  std::vector<std::complex<double>> tmp(g.modes());
  for (int axis = 0; axis < g.dim(); ++axis) {
    apply_ik(g, vs.spec(axis), tmp.data(), axis);
    std::complex<double>* o = out.spec(0);
    for (std::size_t s = 0; s < g.modes(); ++s) o[s] += tmp[s];
  }
  return out;
}

VectorField tensor_divergence(const SymTensorField& T) {
  SymTensorField Ts = as_spectral(T);
  const Grid& g = Ts.grid();
  const int d = g.dim();
  VectorField out(g, Rep::Spectral);
  std::vector<std::complex<double>> tmp(g.modes());
  for (int i = 0; i < d; ++i) {
    for (int j = 0; j < d; ++j) {
      SymMat probe(d);
      probe.set(i, j, 1.0);
      int c = -1;
      for (int cc = 0; cc < Ts.ncomp(); ++cc)
        if (probe.packed(cc) == 1.0) c = cc;
      apply_ik(g, Ts.spec(c), tmp.data(), j);
      std::complex<double>* o = out.spec(i);
      for (std::size_t s = 0; s < g.modes(); ++s) o[s] += tmp[s];
    }
  }
  return out;
}

std::vector<ScalarField> velocity_gradient(const VectorField& u) {
  VectorField us = as_spectral(u);
  const Grid& g = us.grid();
  const int d = g.dim();
  std::vector<ScalarField> out;
  out.reserve(d * d);
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j) {
      ScalarField f(g, Rep::Spectral);
      apply_ik(g, us.spec(i), f.spec(0), j);
      f.to_physical();
      out.push_back(std::move(f));
    }
  return out;
}

template <class F>
F laplacian(const F& f) {
  F g = as_spectral(f);
  const Grid& gr = g.grid();
  const std::size_t nm = gr.modes();
  const double dk2 = gr.dk() * gr.dk();
  for (std::size_t s = 0; s < nm; ++s) {
    const auto m = gr.mode_of(s);
    double k2 = 0.0;
    for (int dd = 0; dd < gr.dim(); ++dd)
      k2 += static_cast<double>(m[dd]) * m[dd];
    k2 *= dk2;
    for (int c = 0; c < g.ncomp(); ++c) g.spec(c)[s] *= -k2;
  }
  return g;
}

template ScalarField laplacian(const ScalarField&);
template VectorField laplacian(const VectorField&);
template SymTensorField laplacian(const SymTensorField&);

// --- reductions -------------------------------------------------------------

double integrate(const ScalarField& f) {
  const Grid& g = f.grid();
  if (f.rep() == Rep::Spectral) return f.spec(0)[0].real() * g.volume();
  const double* p = f.phys(0);
  double sum = 0.0;
  for (std::size_t i = 0; i < g.points(); ++i) sum += p[i];
  return sum * g.volume() / static_cast<double>(g.points());
}

namespace {

// weight of each packed component in the Frobenius magnitude
std::vector<double> comp_weights(const GridField& f) {
  const int d = f.grid().dim();
  const int nsym = d * (d + 1) / 2;
  std::vector<double> w(f.ncomp(), 1.0);
  if (f.ncomp() == nsym && f.ncomp() != 1 && f.ncomp() != d) {
    // packed symmetric tensor: off-diagonal components count twice
    SymMat probe(d);
    for (int i = 0; i < d; ++i)
      for (int j = i + 1; j < d; ++j) {
        SymMat q(d);
        q.set(i, j, 1.0);
        for (int c = 0; c < nsym; ++c)
          if (q.packed(c) == 1.0) w[c] = 2.0;
      }
  }
  return w;
}

}  // namespace

double lp_norm(const GridField& f, double p) {
  if (!(p >= 1.0)) throw DomainError("lp_norm: p must be >= 1 or infinity");
  GridField g = f;
  g.to_physical();
  const std::size_t np = g.grid().points();
  const std::vector<double> w = comp_weights(g);
  const bool inf = std::isinf(p);
  double acc = 0.0;
  for (std::size_t i = 0; i < np; ++i) {
    double mag2 = 0.0;
    for (int c = 0; c < g.ncomp(); ++c) {
      const double v = g.phys(c)[i];
      mag2 += w[c] * v * v;
    }
    const double mag = std::sqrt(mag2);
    if (inf)
      acc = std::max(acc, mag);
    else
      acc += std::pow(mag, p);
  }
  if (inf) return acc;
  const double cell = g.grid().volume() / static_cast<double>(np);
  return std::pow(acc * cell, 1.0 / p);
}

double inner_product(const GridField& a, const GridField& b) {
  if (a.grid() != b.grid() || a.ncomp() != b.ncomp())
    throw GridMismatchError("inner_product: incompatible fields");
  GridField ap = a;
  ap.to_physical();
  GridField bp = b;
  bp.to_physical();
  const std::size_t np = ap.grid().points();
  const std::vector<double> w = comp_weights(ap);
  double acc = 0.0;
  for (int c = 0; c < ap.ncomp(); ++c) {
    const double* pa = ap.phys(c);
    const double* pb = bp.phys(c);
    double s = 0.0;
    for (std::size_t i = 0; i < np; ++i) s += pa[i] * pb[i];
    acc += w[c] * s;
  }
  return acc * ap.grid().volume() / static_cast<double>(np);
}

double min_value(const ScalarField& f) {
  ScalarField g = as_physical(f);
  const double* p = g.phys(0);
  return *std::min_element(p, p + g.grid().points());
}

double max_abs(const GridField& f) {
  return lp_norm(f, std::numeric_limits<double>::infinity());
}

// --- constructions ----------------------------------------------------------

namespace {

double unit_double(std::mt19937_64& rng) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return u > 0.0 ? u : 0x1.0p-53;
}

// explicit Box-Muller; std::normal_distribution streams are
// implementation-defined and would break cross-library reproducibility
std::pair<double, double> gauss_pair(std::mt19937_64& rng) {
  const double u1 = unit_double(rng);
  const double u2 = unit_double(rng);
  const double r = std::sqrt(-2.0 * std::log(u1));
  return {r * std::cos(kTwoPi * u2), r * std::sin(kTwoPi * u2)};
}

std::size_t full_index(const Grid& g, const std::array<int, 3>& idx) {
  std::size_t s = 0;
  for (int d = 0; d < g.dim(); ++d)
    s = s * g.n() + static_cast<std::size_t>(idx[d]);
  return s;
}

ScalarField random_scalar_core(const Grid& g, unsigned long long seed,
                               double decay, double amplitude) {
  const int n = g.n();
  const int cut = g.dealias_cut();
  std::vector<std::complex<double>> full(g.points(), {0.0, 0.0});
  std::mt19937_64 rng(seed);

  // fixed lexicographic walk over the full lattice; two draws per site keep
  // the stream position independent of which sites carry modes
  std::array<int, 3> idx{};
  const int dim = g.dim();
  const std::size_t npts = g.points();
  for (std::size_t flat = 0; flat < npts; ++flat) {
    std::size_t rest = flat;
    for (int d = dim - 1; d >= 0; --d) {
      idx[d] = static_cast<int>(rest % n);
      rest /= n;
    }
    auto [g1, g2] = gauss_pair(rng);
    std::array<int, 3> m{};
    bool inband = true;
    double m2 = 0.0;
    for (int d = 0; d < dim; ++d) {
      m[d] = idx[d] <= n / 2 ? idx[d] : idx[d] - n;
      if (std::abs(m[d]) > cut) inband = false;
      m2 += static_cast<double>(m[d]) * m[d];
    }
    if (!inband || m2 == 0.0) continue;
    const double amp = std::pow(std::sqrt(m2), -decay);
    full[flat] = amp * std::complex<double>(g1, g2) / std::sqrt(2.0);
  }

  // Hermitian symmetry: the lexicographically larger of (m, -m) wins
  for (std::size_t flat = 0; flat < npts; ++flat) {
    std::size_t rest = flat;
    std::array<int, 3> id{};
    for (int d = dim - 1; d >= 0; --d) {
      id[d] = static_cast<int>(rest % n);
      rest /= n;
    }
    std::array<int, 3> m{}, mneg{};
    for (int d = 0; d < dim; ++d) {
      m[d] = id[d] <= n / 2 ? id[d] : id[d] - n;
      mneg[d] = -m[d];
    }
    bool canonical = false;
    for (int d = 0; d < dim; ++d) {
      if (m[d] != mneg[d]) {
        canonical = m[d] > mneg[d];
        break;
      }
    }
    if (canonical) continue;
    std::array<int, 3> pidx{};
    for (int d = 0; d < dim; ++d)
      pidx[d] = mneg[d] >= 0 ? mneg[d] : mneg[d] + n;
    full[flat] = std::conj(full[full_index(g, pidx)]);
  }

  // fold the Hermitian full lattice into the r2c half storage
  ScalarField f(g, Rep::Spectral);
  std::complex<double>* sp = f.spec(0);
  for (std::size_t s = 0; s < g.modes(); ++s) {
    const auto m = g.mode_of(s);
    std::array<int, 3> fidx{};
    for (int d = 0; d < dim; ++d) fidx[d] = m[d] >= 0 ? m[d] : m[d] + n;
    sp[s] = full[full_index(g, fidx)];
  }

  const double peak = max_abs(f);
  if (peak > 0.0) f *= amplitude / peak;
  return f;
}

}  // namespace

ScalarField random_smooth_field(const Grid& g, unsigned long long seed,
                                double decay, double amplitude,
                                std::optional<double> positivity_floor) {
  ScalarField f = random_scalar_core(g, seed, decay, amplitude);
  f.to_physical();
  if (positivity_floor) {
    // small margin so rounding in the shift cannot land below the floor
    const double shift = *positivity_floor - min_value(f) +
                         1e-14 * std::max(1.0, std::abs(*positivity_floor));
    double* p = f.phys(0);
    for (std::size_t i = 0; i < g.points(); ++i) p[i] += shift;
  }
  return f;
}

namespace {
unsigned long long mix_seed(unsigned long long seed, int c) {
  return seed ^ (0x9E3779B97F4A7C15ull * static_cast<unsigned>(c + 1));
}
}  // namespace

VectorField random_smooth_vector(const Grid& g, unsigned long long seed,
                                 double decay, double amplitude) {
  VectorField v(g, Rep::Spectral);
  for (int c = 0; c < g.dim(); ++c) {
    ScalarField f = random_scalar_core(g, mix_seed(seed, c), decay, 1.0);
    std::copy(f.spec(0), f.spec(0) + g.modes(), v.spec(c));
  }
  const double peak = max_abs(v);
  if (peak > 0.0) v *= amplitude / peak;
  v.to_physical();
  return v;
}

SymTensorField random_smooth_symtensor(const Grid& g, unsigned long long seed,
                                       double decay, double amplitude) {
  SymTensorField t(g, Rep::Spectral);
  for (int c = 0; c < t.ncomp(); ++c) {
    ScalarField f = random_scalar_core(g, mix_seed(seed, 7 + c), decay, 1.0);
    std::copy(f.spec(0), f.spec(0) + g.modes(), t.spec(c));
  }
  const double peak = max_abs(t);
  if (peak > 0.0) t *= amplitude / peak;
  t.to_physical();
  return t;
}

void solenoidal_project(VectorField& u) {
  u.to_spectral();
  const Grid& g = u.grid();
  const double dk = g.dk();
  for (std::size_t s = 0; s < g.modes(); ++s) {
    const auto m = g.mode_of(s);
    double k[3] = {0.0, 0.0, 0.0};
    double k2 = 0.0;
    for (int d = 0; d < g.dim(); ++d) {
      k[d] = dk * m[d];
      k2 += k[d] * k[d];
    }
    if (k2 == 0.0) continue;
    std::complex<double> kdotu{0.0, 0.0};
    for (int d = 0; d < g.dim(); ++d) kdotu += k[d] * u.spec(d)[s];
    for (int d = 0; d < g.dim(); ++d) u.spec(d)[s] -= k[d] * kdotu / k2;
  }
}

namespace {

// storage index of signed modes in grid g, or npos when unrepresentable
std::size_t spec_index_of(const Grid& g, const std::array<int, 3>& m) {
  const int n = g.n();
  std::size_t s = 0;
  for (int d = 0; d < g.dim() - 1; ++d) {
    const int idx = m[d] >= 0 ? m[d] : m[d] + n;
    s = s * n + static_cast<std::size_t>(idx);
  }
  return s * (n / 2 + 1) + static_cast<std::size_t>(m[g.dim() - 1]);
}

}  // namespace

template <class F>
F restrict_to(const F& f, const Grid& coarse) {
  const Grid& fine = f.grid();
  if (coarse.dim() != fine.dim() || coarse.length() != fine.length())
    throw GridMismatchError("restrict_to: incompatible grids");
  if (coarse.n() > fine.n())
    throw GridMismatchError("restrict_to: target must be coarser");
  F src = as_spectral(f);
  F out(coarse, Rep::Spectral);
  const int keep = coarse.n() / 2 - 1;  // drop the coarse Nyquist plane
  for (std::size_t s = 0; s < coarse.modes(); ++s) {
    const auto m = coarse.mode_of(s);
    bool ok = true;
    for (int d = 0; d < coarse.dim(); ++d)
      if (std::abs(m[d]) > keep) ok = false;
    if (!ok) continue;
    const std::size_t sf = spec_index_of(fine, m);
    for (int c = 0; c < out.ncomp(); ++c) out.spec(c)[s] = src.spec(c)[sf];
  }
  return out;
}

template ScalarField restrict_to(const ScalarField&, const Grid&);
template VectorField restrict_to(const VectorField&, const Grid&);
template SymTensorField restrict_to(const SymTensorField&, const Grid&);

template <class F>
F prolong_to(const F& f, const Grid& fine) {
  const Grid& coarse = f.grid();
  if (coarse.dim() != fine.dim() || coarse.length() != fine.length())
    throw GridMismatchError("prolong_to: incompatible grids");
  if (fine.n() < coarse.n())
    throw GridMismatchError("prolong_to: target must be finer");
  F src = as_spectral(f);
  F out(fine, Rep::Spectral);
  const int keep = coarse.n() / 2 - 1;
  for (std::size_t s = 0; s < coarse.modes(); ++s) {
    const auto m = coarse.mode_of(s);
    bool ok = true;
    for (int d = 0; d < coarse.dim(); ++d)
      if (std::abs(m[d]) > keep) ok = false;
    if (!ok) continue;
    const std::size_t sf = spec_index_of(fine, m);
    for (int c = 0; c < out.ncomp(); ++c) out.spec(c)[sf] = src.spec(c)[s];
  }
  return out;
}

template ScalarField prolong_to(const ScalarField&, const Grid&);
template VectorField prolong_to(const VectorField&, const Grid&);
template SymTensorField prolong_to(const SymTensorField&, const Grid&);

}  // namespace plob
