#include "plob/dynamics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include "plob/errors.hpp"

namespace plob {

namespace {

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// l2 norm straight from spectral storage (Parseval; interior m_last counted
// twice in the half-complex layout).
double spectral_l2(const GridField& f) {
  const Grid& g = f.grid();
  const int nh = g.n() / 2;
  const std::size_t nm = g.modes();
  double acc = 0.0;
  for (int c = 0; c < f.ncomp(); ++c) {
    const std::complex<double>* sp = f.spec(c);
    for (std::size_t s = 0; s < nm; ++s) {
      const int last = g.mode_of(s)[g.dim() - 1];
      const double w = (last == 0 || last == nh) ? 1.0 : 2.0;
      acc += w * std::norm(sp[s]);
    }
  }
  return std::sqrt(acc * g.volume());
}

// pointwise eigenvalue floor, returned band-limited
SymTensorField chi_field(const SymTensorField& T, double sigma) {
  SymTensorField P = as_physical(T);
  const std::size_t np = P.grid().points();
  for (std::size_t p = 0; p < np; ++p)
    P.set_mat(p, chi_sigma(P.mat_at(p), sigma));
  P.dealias();
  return P;
}

// div(f u), conservative, dealiased binary product; physical inputs
ScalarField scalar_transport(const ScalarField& f, const VectorField& u) {
  const Grid& g = f.grid();
  const std::size_t np = g.points();
  VectorField fu(g);
  const double* fp = f.phys(0);
  for (int d = 0; d < g.dim(); ++d) {
    double* out = fu.phys(d);
    const double* ud = u.phys(d);
    for (std::size_t p = 0; p < np; ++p) out[p] = fp[p] * ud[p];
  }
  fu.dealias();
  return divergence(fu);
}

// Div(u T)_ij = d_l (u_l T_ij), conservative; physical inputs
SymTensorField tensor_transport(const SymTensorField& T, const VectorField& u) {
  const Grid& g = T.grid();
  const std::size_t np = g.points();
  const std::size_t nm = g.modes();
  SymTensorField out(g, Rep::Spectral);
  ScalarField comp(g);
  for (int c = 0; c < T.ncomp(); ++c) {
    std::copy_n(T.phys(c), np, comp.phys(0));
    const ScalarField d = scalar_transport(comp, u);
    std::copy_n(d.spec(0), nm, out.spec(c));
  }
  return out;
}

// grad u T + T grad u^T pointwise, dealiased; gradu from velocity_gradient
SymTensorField stretch_field(const std::vector<ScalarField>& gradu,
                             const SymTensorField& T) {
  const Grid& g = T.grid();
  const int dim = g.dim();
  const std::size_t np = g.points();
  std::vector<const double*> gp(gradu.size());
  for (std::size_t i = 0; i < gradu.size(); ++i) gp[i] = gradu[i].phys(0);
  SymTensorField out(g);
  for (std::size_t p = 0; p < np; ++p) {
    Mat G(dim);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) G(i, j) = gp[i * dim + j][p];
    out.set_mat(p, stretch_term(G, T.mat_at(p)));
  }
  out.dealias();
  return out;
}

double grid_min_eig(const SymTensorField& T) {
  const SymTensorField P = as_physical(T);
  const std::size_t np = P.grid().points();
  double m = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < np; ++p) m = std::min(m, min_eig(P.mat_at(p)));
  return m;
}

// adds coef * (field + shift) to the diagonal components, all spectral
void add_isotropic(SymTensorField& T, const ScalarField& f, double coef,
                   double shift) {
  const Grid& g = T.grid();
  const std::size_t nm = g.modes();
  for (int d = 0; d < g.dim(); ++d) {
    std::complex<double>* tc = T.spec(SymMat::packed_index(g.dim(), d, d));
    const std::complex<double>* fc = f.spec(0);
    for (std::size_t s = 0; s < nm; ++s) tc[s] += coef * fc[s];
    tc[0] += coef * shift;  // mean mode is storage index 0
  }
}

}  // namespace

ScalarField rhs_continuity(const ScalarField& rho, const VectorField& u) {
  const ScalarField rp = as_physical(rho);
  const VectorField up = as_physical(u);
  ScalarField out = scalar_transport(rp, up);
  out *= -1.0;
  return out;
}

ScalarField rhs_eta(const ScalarField& eta, const VectorField& u,
                    const ModelParams& mp) {
  const ScalarField ep = as_physical(eta);
  const VectorField up = as_physical(u);
  ScalarField out = scalar_transport(ep, up);
  out *= -1.0;
  ScalarField lap = laplacian(eta);
  lap *= mp.epsilon;
  out += lap;
  return out;
}

SymTensorField rhs_stress(const SymTensorField& T, const VectorField& u,
                          const ScalarField& eta, const ModelParams& mp) {
  SymTensorField that_s =
      mp.sigma > 0.0 ? chi_field(T, mp.sigma) : as_spectral(T);
  const SymTensorField that_p = as_physical(that_s);
  const VectorField up = as_physical(u);
  SymTensorField out = tensor_transport(that_p, up);
  out *= -1.0;
  out += stretch_field(velocity_gradient(u), that_p);
  SymTensorField lap = laplacian(T);
  lap *= mp.epsilon;
  out += lap;
  const ScalarField es = as_spectral(eta);
  add_isotropic(out, es, mp.k / (2.0 * mp.lambda), mp.alpha);
  that_s *= -1.0 / (2.0 * mp.lambda);
  out += that_s;
  return out;
}

std::pair<VectorField, double> solve_momentum(const State& s,
                                              const VectorField& u_guess,
                                              double dt, const StepConfig& cfg,
                                              const VectorField* extra_source,
                                              int* sweeps,
                                              const VectorField* mom_old) {
  const Grid& g = s.grid();
  const int dim = g.dim();
  const int nh = g.n() / 2;
  const std::size_t np = g.points();
  const std::size_t nm = g.modes();
  const ModelParams& mp = s.params;
  const bool hard = !(mp.delta > 0.0);
  const double binv = 1.0 / mp.b;
  if (!(dt > 0.0)) throw DomainError("solve_momentum: dt must be positive");

  const ScalarField rho_p = as_physical(s.rho);
  const ScalarField eta_p = as_physical(s.eta);
  const double* rp = rho_p.phys(0);
  double rho_max = 0.0;
  double rho_min = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < np; ++p) {
    rho_max = std::max(rho_max, rp[p]);
    rho_min = std::min(rho_min, rp[p]);
  }
  if (!(rho_min > 0.0))
    throw DomainError("solve_momentum: density must be positive, min = " +
                      num(rho_min));

  // fluid + polymer pressure and the trace-log potential share one gradient
  ScalarField pot(g);
  {
    double* o = pot.phys(0);
    const double* ep = eta_p.phys(0);
    if (mp.alpha > 0.0) {
      const SymTensorField Tp = as_physical(s.T);
      for (std::size_t p = 0; p < np; ++p)
        o[p] = mp.a * std::pow(rp[p], mp.gamma) + mp.k * mp.L * ep[p] +
               mp.zeta * ep[p] * ep[p] +
               0.5 * mp.alpha * trace_log_chi(Tp.mat_at(p), mp.sigma);
    } else {
      for (std::size_t p = 0; p < np; ++p)
        o[p] = mp.a * std::pow(rp[p], mp.gamma) + mp.k * mp.L * ep[p] +
               mp.zeta * ep[p] * ep[p];
    }
  }
  pot.dealias();

  // everything independent of the iterate: div T - grad(pot) + rho f + extra
  VectorField rhs_fixed = gradient(pot);
  rhs_fixed *= -1.0;
  {
    const SymTensorField Ttil =
        mp.sigma > 0.0 ? chi_field(s.T, mp.sigma) : as_spectral(s.T);
    rhs_fixed += tensor_divergence(Ttil);
  }
  if (s.forcing) {
    const VectorField fp = as_physical(*s.forcing);
    VectorField rf(g);
    for (int d = 0; d < dim; ++d) {
      double* o = rf.phys(d);
      const double* fd = fp.phys(d);
      for (std::size_t p = 0; p < np; ++p) o[p] = rp[p] * fd[p];
    }
    rf.dealias();
    rhs_fixed += rf;
  }
  if (extra_source) {
    VectorField es = as_spectral(*extra_source);
    es.dealias();
    rhs_fixed += es;
  }
  rhs_fixed.dealias();

  VectorField mold(g);
  if (mom_old) {
    mold = as_spectral(*mom_old);
    mold.dealias();
  } else {
    const VectorField uop = as_physical(s.u);
    for (int d = 0; d < dim; ++d) {
      double* o = mold.phys(d);
      const double* ud = uop.phys(d);
      for (std::size_t p = 0; p < np; ++p) o[p] = rp[p] * ud[p];
    }
    mold.dealias();
  }

  VectorField u = as_spectral(u_guess);
  u.dealias();

  double update_norm = std::numeric_limits<double>::infinity();
  int done = 0;
  for (int sweep = 1; sweep <= cfg.picard_max; ++sweep) {
    const VectorField up = as_physical(u);
    const std::vector<ScalarField> gradu = velocity_gradient(u);
    std::vector<const double*> gp(gradu.size());
    for (std::size_t i = 0; i < gradu.size(); ++i) gp[i] = gradu[i].phys(0);

    ScalarField divu(g);
    double divmax = 0.0;
    {
      double* o = divu.phys(0);
      for (std::size_t p = 0; p < np; ++p) {
        double tr = 0.0;
        for (int d = 0; d < dim; ++d) tr += gp[d * dim + d][p];
        o[p] = tr;
        divmax = std::max(divmax, std::abs(tr));
      }
    }
    if (hard && divmax >= binv)
      throw BarrierError("momentum iterate hit the divergence barrier: max "
                         "|div u| = " +
                         num(divmax) + ", 1/b = " + num(binv));

    SymTensorField S(g);
    double cmax = 0.0;
    double betamax = 0.0;
    {
      const double* dv = divu.phys(0);
      for (std::size_t p = 0; p < np; ++p) {
        Mat G(dim);
        for (int i = 0; i < dim; ++i)
          for (int j = 0; j < dim; ++j) G(i, j) = gp[i * dim + j][p];
        SymMat Dd = deviatoric(G);
        const double c = power_law_factor(Dd.frobenius_sq(), mp);
        const BarrierEval be = barrier(dv[p], mp, !hard);
        cmax = std::max(cmax, c);
        betamax = std::max(betamax, be.beta);
        Dd *= c;
        for (int i = 0; i < dim; ++i) Dd.set(i, i, Dd(i, i) + be.Lambda_p);
        S.set_mat(p, Dd);
      }
    }
    S.dealias();
    const VectorField divS = tensor_divergence(S);

    VectorField mom(g);
    for (int d = 0; d < dim; ++d) {
      double* o = mom.phys(d);
      const double* ud = up.phys(d);
      for (std::size_t p = 0; p < np; ++p) o[p] = rp[p] * ud[p];
    }
    mom.dealias();
    const VectorField mom_p = as_physical(mom);

    VectorField conv(g, Rep::Spectral);
    for (int i = 0; i < dim; ++i) {
      VectorField miu(g);
      const double* mi = mom_p.phys(i);
      for (int j = 0; j < dim; ++j) {
        double* o = miu.phys(j);
        const double* uj = up.phys(j);
        for (std::size_t p = 0; p < np; ++p) o[p] = mi[p] * uj[p];
      }
      miu.dealias();
      const ScalarField di = divergence(miu);
      std::copy_n(di.spec(0), nm, conv.spec(i));
    }

    VectorField R = mom;
    R -= mold;
    R *= 1.0 / dt;
    R += conv;
    R -= divS;
    R -= rhs_fixed;
    R.dealias();

    // damped update through the constant-coefficient symbol
    //   A(k) = (rho_max/dt + mu_eff k^2) I + (mu_eff (1 - 2/dim) + beta_max) kk^T
    // inverted in closed form per mode
    const double a0 = rho_max / dt;
    const double mu_eff = 0.5 * cmax;
    const double bco = mu_eff * (1.0 - 2.0 / dim) + betamax;
    const double dk = g.dk();
    std::complex<double>* us[3] = {nullptr, nullptr, nullptr};
    const std::complex<double>* Rs[3] = {nullptr, nullptr, nullptr};
    for (int d = 0; d < dim; ++d) {
      us[d] = u.spec(d);
      Rs[d] = R.spec(d);
    }
    double acc = 0.0;
    for (std::size_t sIdx = 0; sIdx < nm; ++sIdx) {
      const auto m = g.mode_of(sIdx);
      double kv[3] = {0.0, 0.0, 0.0};
      double k2 = 0.0;
      for (int d = 0; d < dim; ++d) {
        kv[d] = dk * m[d];
        k2 += kv[d] * kv[d];
      }
      const double a = a0 + mu_eff * k2;
      const double denom = a + bco * k2;
      std::complex<double> kR(0.0, 0.0);
      for (int d = 0; d < dim; ++d) kR += kv[d] * Rs[d][sIdx];
      const double w = (m[dim - 1] == 0 || m[dim - 1] == nh) ? 1.0 : 2.0;
      for (int d = 0; d < dim; ++d) {
        const std::complex<double> du =
            cfg.damping * (Rs[d][sIdx] - bco * kv[d] * kR / denom) / a;
        us[d][sIdx] -= du;
        acc += w * std::norm(du);
      }
    }
    update_norm = std::sqrt(acc * g.volume());
    done = sweep;
    if (update_norm <= cfg.picard_tol) break;
  }
  if (update_norm > cfg.picard_tol)
    throw NonconvergenceError("momentum solve stalled: update " +
                              num(update_norm) + " after " + num(done) +
                              " sweeps, tol " + num(cfg.picard_tol));
  if (sweeps) *sweeps = done;
  u.dealias();
  return {std::move(u), update_norm};
}

std::pair<State, StepReport> step(const State& s, const StepConfig& cfg,
                                  const ManufacturedSources* src) {
  const Grid& g = s.grid();
  const ModelParams& mp = s.params;
  const std::size_t nm = g.modes();
  const double dt = adaptive_dt(s, cfg);
  const double t_new = s.time + dt;

  const ScalarField rho_p = as_physical(s.rho);
  const ScalarField eta_p = as_physical(s.eta);
  const SymTensorField T_p = as_physical(s.T);
  const ScalarField rho_s = as_spectral(s.rho);
  const ScalarField eta_s = as_spectral(s.eta);
  const SymTensorField T_s = as_spectral(s.T);

  const double min_eig_in = grid_min_eig(T_p);

  // floored tensor driving transport, stretch, and relaxation
  SymTensorField that_s = T_s;
  SymTensorField that_p = T_p;
  if (mp.sigma > 0.0) {
    that_s = chi_field(T_p, mp.sigma);
    that_p = as_physical(that_s);
  }

  std::optional<ScalarField> src_rho;
  std::optional<ScalarField> src_eta;
  std::optional<VectorField> src_mom;
  std::optional<SymTensorField> src_T;
  if (src) {
    if (src->rho) {
      src_rho = as_spectral(src->rho(t_new));
      src_rho->dealias();
    }
    if (src->eta) {
      src_eta = as_spectral(src->eta(t_new));
      src_eta->dealias();
    }
    if (src->momentum) src_mom = src->momentum(t_new);
    if (src->stress) {
      src_T = as_spectral(src->stress(t_new));
      src_T->dealias();
    }
  }

  // exact diffusion factor for eta, implicit factor for the stress
  std::vector<double> eta_fac(nm);
  std::vector<double> T_fac(nm);
  {
    const double dk2 = g.dk() * g.dk();
    for (std::size_t sIdx = 0; sIdx < nm; ++sIdx) {
      const auto m = g.mode_of(sIdx);
      double k2 = 0.0;
      for (int d = 0; d < g.dim(); ++d)
        k2 += static_cast<double>(m[d]) * m[d];
      k2 *= dk2;
      eta_fac[sIdx] = std::exp(-mp.epsilon * k2 * dt);
      T_fac[sIdx] = 1.0 / (1.0 + dt * (mp.epsilon * k2 + 0.5 / mp.lambda));
    }
  }

  VectorField w = as_spectral(s.u);
  w.dealias();

  VectorField mom_n(g);
  {
    const VectorField u_p = as_physical(s.u);
    const double* rp = rho_p.phys(0);
    for (int d = 0; d < g.dim(); ++d) {
      double* o = mom_n.phys(d);
      const double* ud = u_p.phys(d);
      for (std::size_t p = 0; p < g.points(); ++p) o[p] = rp[p] * ud[p];
    }
    mom_n.dealias();
  }

  ScalarField rho_new(g, Rep::Spectral);
  ScalarField eta_new(g, Rep::Spectral);
  SymTensorField T_new(g, Rep::Spectral);
  StepReport rep;
  rep.dt_used = dt;
  bool converged = false;

  for (int outer = 0; outer < cfg.picard_max && !converged; ++outer) {
    const VectorField wp = as_physical(w);

    rho_new = rho_s;
    {
      ScalarField tr = scalar_transport(rho_p, wp);
      tr *= -dt;
      rho_new += tr;
      if (src_rho) {
        ScalarField sc = *src_rho;
        sc *= dt;
        rho_new += sc;
      }
    }

    eta_new = eta_s;
    {
      ScalarField tr = scalar_transport(eta_p, wp);
      tr *= -dt;
      eta_new += tr;
      if (src_eta) {
        ScalarField sc = *src_eta;
        sc *= dt;
        eta_new += sc;
      }
      std::complex<double>* ec = eta_new.spec(0);
      for (std::size_t sIdx = 0; sIdx < nm; ++sIdx) ec[sIdx] *= eta_fac[sIdx];
    }

    {
      SymTensorField E = tensor_transport(that_p, wp);
      E *= -1.0;
      E += stretch_field(velocity_gradient(w), that_p);
      add_isotropic(E, eta_new, mp.k / (2.0 * mp.lambda), mp.alpha);
      if (mp.sigma > 0.0) {
        // the implicit relaxation acts on T; this correction shifts the
        // total to the floored target -(1/2lambda) chi(T)
        SymTensorField corr = T_s;
        corr -= that_s;
        corr *= 0.5 / mp.lambda;
        E += corr;
      }
      if (src_T) E += *src_T;
      T_new = T_s;
      for (int c = 0; c < T_new.ncomp(); ++c) {
        std::complex<double>* tc = T_new.spec(c);
        const std::complex<double>* ecmp = E.spec(c);
        for (std::size_t sIdx = 0; sIdx < nm; ++sIdx)
          tc[sIdx] = (tc[sIdx] + dt * ecmp[sIdx]) * T_fac[sIdx];
      }
    }

    {
      const ScalarField rnp = as_physical(rho_new);
      if (!(min_value(rnp) > 0.0))
        throw StepRejected("density lost positivity at dt = " + num(dt) +
                           ", min = " + num(min_value(rnp)));
    }

    State trial(g, mp);
    trial.time = t_new;
    trial.rho = rho_new;
    trial.eta = eta_new;
    trial.T = T_new;
    trial.u = s.u;
    trial.forcing = s.forcing;

    int sweeps = 0;
    std::pair<VectorField, double> solved =
        solve_momentum(trial, w, dt, cfg, src_mom ? &*src_mom : nullptr,
                       &sweeps, &mom_n);
    rep.picard_iterations += sweeps;

    VectorField diff = solved.first;
    diff -= w;
    rep.final_residual = spectral_l2(diff);
    w = std::move(solved.first);
    if (rep.final_residual <= cfg.picard_tol) converged = true;
  }
  if (!converged)
    throw NonconvergenceError("velocity fixed point stalled at change " +
                              num(rep.final_residual) + ", tol " +
                              num(cfg.picard_tol));

  ScalarField rho_np = as_physical(rho_new);
  ScalarField eta_np = as_physical(eta_new);
  SymTensorField T_np = as_physical(T_new);
  VectorField u_np = as_physical(w);
  if (!rho_np.finite() || !eta_np.finite() || !T_np.finite() || !u_np.finite())
    throw StepRejected("non-finite field after step at dt = " + num(dt));
  const double rmin = min_value(rho_np);
  if (!(rmin > 0.0))
    throw StepRejected("density lost positivity at dt = " + num(dt) +
                       ", min = " + num(rmin));
  const double emin = min_value(eta_np);
  if (emin < 0.0)
    throw StepRejected("eta lost nonnegativity at dt = " + num(dt) +
                       ", min = " + num(emin));
  if (min_eig_in > 0.0) {
    const double me = grid_min_eig(T_np);
    if (!(me > 0.0))
      throw StepRejected("stress lost positive definiteness at dt = " +
                         num(dt) + ", min eigenvalue = " + num(me));
  }
  const ScalarField dv = as_physical(divergence(w));
  const double divmax = max_abs(dv);
  rep.barrier_margin = 1.0 / mp.b - divmax;
  if (!(mp.delta > 0.0) && rep.barrier_margin <= 0.0)
    throw BarrierError("accepted velocity would violate the barrier: max "
                       "|div u| = " +
                       num(divmax) + ", 1/b = " + num(1.0 / mp.b));

  State out(g, mp);
  out.time = t_new;
  out.rho = std::move(rho_np);
  out.u = std::move(u_np);
  out.eta = std::move(eta_np);
  out.T = std::move(T_np);
  out.forcing = s.forcing;
  return {std::move(out), rep};
}

std::pair<State, StepReport> advance_with_retries(
    const State& s, const StepConfig& cfg, int max_halvings,
    const ManufacturedSources* src) {
  StepConfig local = cfg;
  for (int attempt = 0;; ++attempt) {
    try {
      return step(s, local, src);
    } catch (const StepRejected&) {
      if (attempt >= max_halvings) throw;
      local.dt *= 0.5;
    }
  }
}

State equilibrium_state(double rho_bar, double eta_bar, const ModelParams& mp,
                        const Grid& g) {
  if (!(rho_bar > 0.0) || !(eta_bar > 0.0))
    throw DomainError("equilibrium_state: means must be positive");
  State s(g, mp);
  s.rho = ScalarField::constant(g, rho_bar);
  s.eta = ScalarField::constant(g, eta_bar);
  s.T = SymTensorField::isotropic(g, mp.k * eta_bar);
  return s;
}

double adaptive_dt(const State& s, const StepConfig& cfg) {
  if (!(cfg.dt > 0.0)) throw DomainError("adaptive_dt: dt must be positive");
  const Grid& g = s.grid();
  const int dim = g.dim();
  const std::size_t np = g.points();
  double dt = cfg.dt;

  const double umax = max_abs(s.u);
  if (umax > 1e-13) dt = std::min(dt, 0.5 * g.spacing() / umax);

  const std::vector<ScalarField> gradu = velocity_gradient(s.u);
  std::vector<const double*> gp(gradu.size());
  for (std::size_t i = 0; i < gradu.size(); ++i) gp[i] = gradu[i].phys(0);
  double divmax = 0.0;
  double g2max = 0.0;
  for (std::size_t p = 0; p < np; ++p) {
    double tr = 0.0;
    double fro2 = 0.0;
    for (int i = 0; i < dim; ++i) {
      tr += gp[i * dim + i][p];
      for (int j = 0; j < dim; ++j) {
        const double v = gp[i * dim + j][p];
        fro2 += v * v;
      }
    }
    divmax = std::max(divmax, std::abs(tr));
    g2max = std::max(g2max, fro2);
  }
  const double margin = 1.0 / s.params.b - divmax;
  if (margin > 0.0)
    dt = std::min(dt, 0.5 * margin / (g2max + 1e-12));
  else
    dt = std::min(dt, 1e-12);
  return dt;
}

}  // namespace plob
