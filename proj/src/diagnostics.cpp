#include "plob/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "plob/errors.hpp"

namespace plob {

EnergyLedger energy_ledger(const State& s) {
  const Grid& g = s.grid();
  const int dim = g.dim();
  const std::size_t np = g.points();
  const ModelParams& mp = s.params;

  const ScalarField rho = as_physical(s.rho);
  const ScalarField eta = as_physical(s.eta);
  const VectorField u = as_physical(s.u);
  const SymTensorField T = as_physical(s.T);
  const VectorField grad_eta = as_physical(gradient(s.eta));
  const std::vector<ScalarField> gradu = velocity_gradient(s.u);
  std::vector<const double*> gp(gradu.size());
  for (std::size_t i = 0; i < gradu.size(); ++i) gp[i] = gradu[i].phys(0);

  const double* rp = rho.phys(0);
  const double* ep = eta.phys(0);

  EnergyLedger led;
  led.time = s.time;

  ScalarField kin(g), press(g), poly(g), half_tr(g), ediss(g), vdiss(g),
      bdiss(g), relax(g), esrc(g);
  for (std::size_t p = 0; p < np; ++p) {
    double u2 = 0.0;
    for (int d = 0; d < dim; ++d) {
      const double v = u.phys(d)[p];
      u2 += v * v;
    }
    kin.phys(0)[p] = 0.5 * rp[p] * u2;
    press.phys(0)[p] = fluid_pressure(rp[p], mp).H;
    poly.phys(0)[p] = polymer_laws(ep[p], mp).G;

    const SymMat Tm = T.mat_at(p);
    half_tr.phys(0)[p] = 0.5 * Tm.trace();
    relax.phys(0)[p] = Tm.trace() / (4.0 * mp.lambda);
    esrc.phys(0)[p] = dim * mp.k / (4.0 * mp.lambda) * ep[p];

    // 2 eps (2 k L |grad sqrt(eta)|^2 + zeta |grad eta|^2), written through
    // |grad sqrt(eta)|^2 = |grad eta|^2 / (4 eta)
    double ge2 = 0.0;
    for (int d = 0; d < dim; ++d) {
      const double v = grad_eta.phys(d)[p];
      ge2 += v * v;
    }
    ediss.phys(0)[p] =
        mp.epsilon * (mp.k * mp.L / ep[p] + 2.0 * mp.zeta) * ge2;

    Mat G(dim);
    double div = 0.0;
    for (int i = 0; i < dim; ++i) {
      for (int j = 0; j < dim; ++j) G(i, j) = gp[i * dim + j][p];
      div += G(i, i);
    }
    const SymMat Dd = deviatoric(G);
    const double s2 = Dd.frobenius_sq();
    vdiss.phys(0)[p] = power_law_factor(s2, mp) * s2;
    bdiss.phys(0)[p] = barrier(div, mp, mp.delta > 0.0).Lambda;
  }
  led.kinetic = integrate(kin);
  led.pressure_potential = integrate(press);
  led.polymer = integrate(poly);
  led.stress_trace = integrate(half_tr);
  led.eta_dissipation = integrate(ediss);
  led.viscous_dissipation = integrate(vdiss);
  led.barrier_dissipation = integrate(bdiss);
  led.stress_relaxation = integrate(relax);
  led.eta_source = integrate(esrc);
  if (s.forcing) {
    const VectorField f = as_physical(*s.forcing);
    ScalarField power(g);
    for (std::size_t p = 0; p < np; ++p) {
      double fu = 0.0;
      for (int d = 0; d < dim; ++d) fu += f.phys(d)[p] * u.phys(d)[p];
      power.phys(0)[p] = rp[p] * fu;
    }
    led.forcing = integrate(power);
  }
  return led;
}

double energy_budget_residual(const EnergyLedger& prev,
                              const EnergyLedger& next, double dt) {
  if (!(dt > 0.0))
    throw DomainError("energy_budget_residual: dt must be positive");
  return (next.total_energy() - prev.total_energy()) / dt +
         next.total_dissipation() - next.forcing - next.eta_source;
}

double trace_balance_residual(const State& prev, const State& next,
                              double dt) {
  if (prev.grid() != next.grid())
    throw GridMismatchError("trace_balance_residual: states on different grids");
  if (!(dt > 0.0))
    throw DomainError("trace_balance_residual: dt must be positive");
  const Grid& g = next.grid();
  const int dim = g.dim();
  const std::size_t np = g.points();
  const ModelParams& mp = next.params;

  auto half_trace = [&](const State& s) {
    const SymTensorField T = as_physical(s.T);
    ScalarField f(g);
    for (std::size_t p = 0; p < np; ++p)
      f.phys(0)[p] = 0.5 * T.mat_at(p).trace();
    return integrate(f);
  };

  const SymTensorField T = as_physical(next.T);
  const std::vector<ScalarField> gradu = velocity_gradient(next.u);
  std::vector<const double*> gp(gradu.size());
  for (std::size_t i = 0; i < gradu.size(); ++i) gp[i] = gradu[i].phys(0);
  ScalarField relax(g), work(g);
  for (std::size_t p = 0; p < np; ++p) {
    const SymMat Tm = T.mat_at(p);
    relax.phys(0)[p] = Tm.trace() / (4.0 * mp.lambda);
    Mat G(dim);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) G(i, j) = gp[i * dim + j][p];
    work.phys(0)[p] = Tm.contract(sym_part(G));
  }
  const double source = dim * mp.k / (4.0 * mp.lambda) * integrate(next.eta);
  return (half_trace(next) - half_trace(prev)) / dt + integrate(relax) -
         source - integrate(work);
}

RelEntropyReport relative_entropy(const State& s, const State& ref) {
  if (s.grid() != ref.grid())
    throw GridMismatchError("relative_entropy: states on different grids");
  const Grid& g = s.grid();
  const int dim = g.dim();
  const std::size_t np = g.points();
  const ModelParams& mp = s.params;

  const ScalarField rho = as_physical(s.rho);
  const ScalarField rho_r = as_physical(ref.rho);
  const ScalarField eta = as_physical(s.eta);
  const ScalarField eta_r = as_physical(ref.eta);
  const VectorField u = as_physical(s.u);
  const VectorField u_r = as_physical(ref.u);

  ScalarField e1(g), e2(g);
  for (std::size_t p = 0; p < np; ++p) {
    double du2 = 0.0;
    for (int d = 0; d < dim; ++d) {
      const double dv = u.phys(d)[p] - u_r.phys(d)[p];
      du2 += dv * dv;
    }
    const double r = rho.phys(0)[p];
    const double rr = rho_r.phys(0)[p];
    const PressureEval pe = fluid_pressure(r, mp);
    const PressureEval pr = fluid_pressure(rr, mp);
    e1.phys(0)[p] = 0.5 * r * du2 + pe.H - pr.H - pr.Hp * (r - rr);
    const double e = eta.phys(0)[p];
    const double er = eta_r.phys(0)[p];
    const PolymerEval qe = polymer_laws(e, mp);
    const PolymerEval qr = polymer_laws(er, mp);
    e2.phys(0)[p] = qe.G - qr.G - qr.Gp * (e - er);
  }
  RelEntropyReport rep;
  rep.e1 = integrate(e1);
  rep.e2 = integrate(e2);
  SymTensorField diff = as_physical(s.T);
  SymTensorField dref = as_physical(ref.T);
  diff -= dref;
  rep.stress_gap = 0.5 * inner_product(diff, diff);
  rep.total = rep.e1 + rep.e2 + rep.stress_gap;
  return rep;
}

std::pair<double, double> convexity_gap(double x, double x_ref,
                                        ConvexFamily which,
                                        const ModelParams& mp) {
  if (!(x > 0.0) || !(x_ref > 0.0))
    throw DomainError("convexity_gap: arguments must be positive");
  const double lo = std::min(x, x_ref);
  const double hi = std::max(x, x_ref);
  double gap = 0.0;
  double curv = 0.0;
  if (which == ConvexFamily::Fluid) {
    const PressureEval fx = fluid_pressure(x, mp);
    const PressureEval fr = fluid_pressure(x_ref, mp);
    gap = fx.H - fr.H - fr.Hp * (x - x_ref);
    // H'' monotone in rho, so the interval minimum sits at an endpoint
    curv = std::min(fluid_pressure(lo, mp).Hpp, fluid_pressure(hi, mp).Hpp);
  } else {
    const PolymerEval fx = polymer_laws(x, mp);
    const PolymerEval fr = polymer_laws(x_ref, mp);
    gap = fx.G - fr.G - fr.Gp * (x - x_ref);
    curv = std::min(polymer_laws(lo, mp).Gpp, polymer_laws(hi, mp).Gpp);
  }
  return {gap, 0.5 * curv * (x - x_ref) * (x - x_ref)};
}

double korn_ratio(const VectorField& v, double p) {
  if (!(p >= 1.0) || !std::isfinite(p))
    throw DomainError("korn_ratio: p must be finite and >= 1");
  const Grid& g = v.grid();
  const int dim = g.dim();
  const std::size_t np = g.points();

  const VectorField vs = as_spectral(v);
  double mean = 0.0;
  for (int d = 0; d < dim; ++d)
    mean = std::max(mean, std::abs(vs.spec(d)[0]));
  const double scale = std::max(1.0, max_abs(v));
  if (mean > 1e-12 * scale)
    throw DomainError("korn_ratio: field must be mean-zero");

  const std::vector<ScalarField> gradu = velocity_gradient(v);
  GridField grad(g, dim * dim);
  for (int c = 0; c < dim * dim; ++c)
    std::copy_n(gradu[c].phys(0), np, grad.phys(c));
  SymTensorField dd(g);
  for (std::size_t q = 0; q < np; ++q) {
    Mat G(dim);
    for (int i = 0; i < dim; ++i)
      for (int j = 0; j < dim; ++j) G(i, j) = gradu[i * dim + j].phys(0)[q];
    dd.set_mat(q, deviatoric(G));
  }
  const double dnorm = lp_norm(dd, p);
  if (dnorm < 1e-14)
    throw DegenerateFieldError("korn_ratio: deviatoric strain vanishes");
  const double sobolev =
      std::pow(std::pow(lp_norm(v, p), p) + std::pow(lp_norm(grad, p), p),
               1.0 / p);
  return sobolev / dnorm;
}

TraceLogReport trace_log_inequality_check(const SymTensorField& P,
                                          double sigma) {
  if (!(sigma > 0.0))
    throw DomainError("trace_log_inequality_check: sigma must be positive");
  const Grid& g = P.grid();
  const int dim = g.dim();
  const std::size_t np = g.points();

  const SymTensorField Pp = as_physical(P);
  SymTensorField W(g);
  ScalarField tau(g);
  for (std::size_t q = 0; q < np; ++q) {
    const SymMat m = Pp.mat_at(q);
    W.set_mat(q, apply_fn(
                     [sigma](double lam) { return 1.0 / std::max(lam, sigma); },
                     m));
    tau.phys(0)[q] = trace_log_chi(m, sigma);
  }

  const SymTensorField Ps = as_spectral(Pp);
  const SymTensorField Ws = as_spectral(W);
  TraceLogReport rep;
  for (int axis = 0; axis < dim; ++axis) {
    const SymTensorField dP = derivative(Ps, axis);
    const SymTensorField dW = derivative(Ws, axis);
    rep.lhs -= inner_product(dP, dW);
  }
  const VectorField gt = gradient(tau);
  rep.rhs = inner_product(gt, gt) / dim;
  rep.margin = rep.lhs - rep.rhs;
  return rep;
}

PositivityReport positivity_report(const State& s) {
  const Grid& g = s.grid();
  const std::size_t np = g.points();
  PositivityReport rep;
  rep.min_rho = min_value(as_physical(s.rho));
  rep.min_eta = min_value(as_physical(s.eta));
  const SymTensorField T = as_physical(s.T);
  ScalarField opn(g);
  double me = std::numeric_limits<double>::infinity();
  for (std::size_t p = 0; p < np; ++p) {
    const SymMat m = T.mat_at(p);
    me = std::min(me, min_eig(m));
    opn.phys(0)[p] = op_norm(m);
  }
  rep.min_eig_T = me;
  rep.max_divu_times_b = max_abs(divergence(s.u)) * s.params.b;
  rep.stress_l3a = lp_norm(opn, 3.75);
  return rep;
}

}  // namespace plob
