#include <cmath>
#include <complex>
#include <vector>

#include "doctest.h"
#include "plob/dynamics.hpp"
#include "plob/errors.hpp"

using namespace plob;

namespace {

// admissible smooth random state with SPD stress
State random_state(const Grid& g, unsigned long long seed,
                   const ModelParams& mp) {
  State s(g, mp);
  s.rho = random_smooth_field(g, seed, 3.0, 0.2, 0.7);
  s.eta = random_smooth_field(g, seed + 1, 3.0, 0.15, 0.5);
  s.u = random_smooth_vector(g, seed + 2, 3.0, 0.05);
  SymTensorField P = random_smooth_symtensor(g, seed + 3, 3.0, 0.05);
  const ScalarField ep = as_physical(s.eta);
  const double* e = ep.phys(0);
  SymTensorField T(g);
  for (std::size_t p = 0; p < g.points(); ++p) {
    SymMat m = P.mat_at(p);
    for (int d = 0; d < g.dim(); ++d) m.set(d, d, m(d, d) + mp.k * e[p]);
    T.set_mat(p, m);
  }
  T.dealias();
  s.T = as_physical(T);
  REQUIRE(min_value(as_physical(s.rho)) > 0.0);
  REQUIRE(min_value(ep) > 0.0);
  return s;
}

double field_linf_diff(const GridField& a, const GridField& b) {
  GridField d = as_physical(a);
  GridField e = as_physical(b);
  d -= e;
  return max_abs(d);
}

double state_linf_diff(const State& a, const State& b) {
  double m = field_linf_diff(a.rho, b.rho);
  m = std::max(m, field_linf_diff(a.u, b.u));
  m = std::max(m, field_linf_diff(a.eta, b.eta));
  m = std::max(m, field_linf_diff(a.T, b.T));
  return m;
}

// solves the 2x2 real system M x = r
void solve2(const double M[2][2], const double r[2], double x[2]) {
  const double det = M[0][0] * M[1][1] - M[0][1] * M[1][0];
  REQUIRE(std::abs(det) > 1e-300);
  x[0] = (r[0] * M[1][1] - r[1] * M[0][1]) / det;
  x[1] = (M[0][0] * r[1] - M[1][0] * r[0]) / det;
}

}  // namespace

TEST_SUITE_BEGIN("dynamics");

TEST_CASE("equilibrium rhs terms vanish") {
  const Grid g(2, 16);
  ModelParams mp;
  mp.k = 1.0;
  const State s = equilibrium_state(1.0, 1.0, mp, g);

  CHECK(max_abs(s.T) == doctest::Approx(std::sqrt(2.0)));  // I everywhere
  CHECK(min_value(as_physical(s.rho)) == doctest::Approx(1.0));

  CHECK(max_abs(rhs_continuity(s.rho, s.u)) <= 1e-14);
  CHECK(max_abs(rhs_eta(s.eta, s.u, mp)) <= 1e-14);
  CHECK(max_abs(rhs_stress(s.T, s.u, s.eta, mp)) <= 1e-14);

  CHECK_THROWS_AS(equilibrium_state(-1.0, 1.0, mp, g), DomainError);
  CHECK_THROWS_AS(equilibrium_state(1.0, 0.0, mp, g), DomainError);
}

TEST_CASE("rhs_continuity constant density gives -c div u") {
  const Grid g(2, 16);
  const ScalarField rho = ScalarField::constant(g, 3.0);
  const VectorField u = random_smooth_vector(g, 11, 3.0, 0.4);
  ScalarField r = rhs_continuity(rho, u);
  ScalarField oracle = divergence(u);
  oracle *= -3.0;
  CHECK(field_linf_diff(r, oracle) <= 1e-12);
}

TEST_CASE("rhs_continuity matches symbolic divergence") {
  const Grid g(2, 32);
  ScalarField rho(g);
  VectorField u(g);
  for (std::size_t p = 0; p < g.points(); ++p) {
    const auto ij = g.point_of(p);
    const double x = ij[0] * g.spacing();
    const double y = ij[1] * g.spacing();
    rho.phys(0)[p] = 2.0 + 0.3 * std::cos(x) * std::sin(y);
    u.phys(0)[p] = 0.2 * std::sin(x);
    u.phys(1)[p] = 0.1 * std::cos(y);
  }
  ScalarField r = as_physical(rhs_continuity(rho, u));
  // -div(rho u) expanded symbolically
  double err = 0.0;
  for (std::size_t p = 0; p < g.points(); ++p) {
    const auto ij = g.point_of(p);
    const double x = ij[0] * g.spacing();
    const double y = ij[1] * g.spacing();
    const double rh = 2.0 + 0.3 * std::cos(x) * std::sin(y);
    const double rx = -0.3 * std::sin(x) * std::sin(y);
    const double ry = 0.3 * std::cos(x) * std::cos(y);
    const double ux = 0.2 * std::sin(x), uxp = 0.2 * std::cos(x);
    const double uy = 0.1 * std::cos(y), uyp = -0.1 * std::sin(y);
    const double want = -(rx * ux + rh * uxp + ry * uy + rh * uyp);
    err = std::max(err, std::abs(r.phys(0)[p] - want));
  }
  CHECK(err <= 1e-12);
}

TEST_CASE("rhs_eta heat limit") {
  const Grid g(2, 16);
  ModelParams mp;
  mp.epsilon = 0.25;
  ScalarField eta(g);
  for (std::size_t p = 0; p < g.points(); ++p) {
    const auto ij = g.point_of(p);
    eta.phys(0)[p] = 1.5 + std::sin(ij[0] * g.spacing());
  }
  VectorField u(g);  // zero
  ScalarField r = as_physical(rhs_eta(eta, u, mp));
  double err = 0.0;
  for (std::size_t p = 0; p < g.points(); ++p) {
    const auto ij = g.point_of(p);
    const double want = -0.25 * std::sin(ij[0] * g.spacing());
    err = std::max(err, std::abs(r.phys(0)[p] - want));
  }
  CHECK(err <= 1e-12);
}

TEST_CASE("rhs_stress relaxation and stretch forms") {
  const Grid g(2, 16);

  SUBCASE("zero tensor sources isotropically") {
    ModelParams mp;
    mp.k = 2.0;
    mp.lambda = 0.5;
    mp.alpha = 0.3;
    const ScalarField eta = ScalarField::constant(g, 0.7);
    const SymTensorField T(g);
    const VectorField u(g);
    SymTensorField r = as_physical(rhs_stress(T, u, eta, mp));
    const double want = mp.k / (2.0 * mp.lambda) * (0.7 + 0.3);
    for (std::size_t p = 0; p < g.points(); p += 37) {
      const SymMat m = r.mat_at(p);
      CHECK(m(0, 0) == doctest::Approx(want).epsilon(1e-12));
      CHECK(m(1, 1) == doctest::Approx(want).epsilon(1e-12));
      CHECK(std::abs(m(0, 1)) <= 1e-13);
    }
  }

  SUBCASE("shear stretch of the identity") {
    ModelParams mp;
    mp.lambda = 1e12;  // disable relaxation and production
    mp.epsilon = 0.0;
    mp.k = 0.0;
    const ScalarField eta = ScalarField::constant(g, 0.0);
    const SymTensorField T = SymTensorField::isotropic(g, 1.0);
    VectorField u(g);
    for (std::size_t p = 0; p < g.points(); ++p) {
      const auto ij = g.point_of(p);
      u.phys(0)[p] = std::sin(ij[1] * g.spacing());
      u.phys(1)[p] = 0.0;
    }
    // T = I, div u = 0: transport vanishes, rhs = grad u + grad u^T
    SymTensorField r = as_physical(rhs_stress(T, u, eta, mp));
    double err = 0.0;
    for (std::size_t p = 0; p < g.points(); ++p) {
      const auto ij = g.point_of(p);
      const double c = std::cos(ij[1] * g.spacing());
      const SymMat m = r.mat_at(p);
      err = std::max(err, std::abs(m(0, 0)));
      err = std::max(err, std::abs(m(1, 1)));
      err = std::max(err, std::abs(m(0, 1) - c));
    }
    CHECK(err <= 1e-12);
  }

  SUBCASE("sigma floor drives relaxation toward the floored tensor") {
    ModelParams mp;
    mp.sigma = 0.5;
    mp.alpha = 1.0;  // sigma < alpha keeps params coherent
    mp.k = 0.0;
    mp.lambda = 1.0;
    const ScalarField eta = ScalarField::constant(g, 0.0);
    const VectorField u(g);
    SymTensorField T(g);
    for (std::size_t p = 0; p < g.points(); ++p) {
      SymMat m(2);
      m.set(0, 0, 0.1);  // below the floor
      m.set(1, 1, 2.0);
      T.set_mat(p, m);
    }
    SymTensorField r = as_physical(rhs_stress(T, u, eta, mp));
    // relaxation -(1/2) chi(T) = -(1/2) diag(0.5, 2)
    const SymMat m = r.mat_at(5);
    CHECK(m(0, 0) == doctest::Approx(-0.25).epsilon(1e-12));
    CHECK(m(1, 1) == doctest::Approx(-1.0).epsilon(1e-12));
  }
}

TEST_CASE("solve_momentum at equilibrium returns zero velocity") {
  const Grid g(2, 16);
  ModelParams mp;
  const State s = equilibrium_state(1.3, 0.8, mp, g);
  VectorField guess(g);
  StepConfig cfg;
  int sweeps = -1;
  auto [u, res] = solve_momentum(s, guess, 1e-3, cfg, nullptr, &sweeps);
  CHECK(max_abs(u) <= 1e-12);
  CHECK(res <= 1e-12);
  CHECK(sweeps == 1);
}

TEST_CASE("solve_momentum matches the linearized Stokes solution") {
  // r = 2 makes the power-law factor exactly 2 mu0; the barrier slope
  // linearizes to beta(0) = 2. Per mode the linear problem reads
  //   (rho/dt + mu0 k^2) u + (mu0 (1 - 2/d) + 2) k (k.u) = rho f
  // and is solved directly as the oracle.
  const Grid g(2, 16);
  ModelParams mp;
  mp.r = 2.0;
  mp.mu0 = 1.0;
  mp.b = 1.0;
  const double rho_bar = 2.0;
  const double amp = 1e-8;
  State s = equilibrium_state(rho_bar, 1.0, mp, g);
  s.forcing = random_smooth_vector(g, 99, 3.0, amp);

  StepConfig cfg;
  cfg.picard_tol = 1e-19;
  cfg.picard_max = 100;
  cfg.damping = 1.0;
  const double dt = 1e6;
  VectorField guess(g);
  auto [u, res] = solve_momentum(s, guess, dt, cfg);

  const VectorField us = as_spectral(u);
  const VectorField fs = as_spectral(*s.forcing);
  const int cut = g.dealias_cut();
  const double bco = mp.mu0 * (1.0 - 2.0 / g.dim()) + 2.0;
  double num = 0.0, den = 0.0;
  for (std::size_t sm = 0; sm < g.modes(); ++sm) {
    const auto m = g.mode_of(sm);
    const double kx = g.dk() * m[0], ky = g.dk() * m[1];
    const double k2 = kx * kx + ky * ky;
    std::complex<double> want0(0.0, 0.0), want1(0.0, 0.0);
    if (std::abs(m[0]) <= cut && std::abs(m[1]) <= cut && k2 > 0.0) {
      const double M[2][2] = {
          {rho_bar / dt + mp.mu0 * k2 + bco * kx * kx, bco * kx * ky},
          {bco * kx * ky, rho_bar / dt + mp.mu0 * k2 + bco * ky * ky}};
      double re[2] = {rho_bar * fs.spec(0)[sm].real(),
                      rho_bar * fs.spec(1)[sm].real()};
      double im[2] = {rho_bar * fs.spec(0)[sm].imag(),
                      rho_bar * fs.spec(1)[sm].imag()};
      double xr[2], xi[2];
      solve2(M, re, xr);
      solve2(M, im, xi);
      want0 = {xr[0], xi[0]};
      want1 = {xr[1], xi[1]};
    }
    num = std::max(num, std::abs(us.spec(0)[sm] - want0));
    num = std::max(num, std::abs(us.spec(1)[sm] - want1));
    den = std::max(den, std::max(std::abs(want0), std::abs(want1)));
  }
  CHECK(den > 0.0);
  CHECK(num / den <= 1e-6);
  CHECK(res <= 1e-19);
}

TEST_CASE("forcing and extra_source assemble identically for constant rho") {
  const Grid g(2, 16);
  ModelParams mp;
  const double rho_bar = 1.7;
  State sf = equilibrium_state(rho_bar, 1.0, mp, g);
  sf.forcing = random_smooth_vector(g, 21, 3.0, 1e-4);

  State se = equilibrium_state(rho_bar, 1.0, mp, g);
  VectorField scaled = *sf.forcing;
  scaled *= rho_bar;

  StepConfig cfg;
  cfg.picard_tol = 1e-14;
  VectorField guess(g);
  auto [u1, r1] = solve_momentum(sf, guess, 1e-2, cfg);
  auto [u2, r2] = solve_momentum(se, guess, 1e-2, cfg, &scaled);
  CHECK(field_linf_diff(u1, u2) <= 1e-14);
}

TEST_CASE("step holds the equilibrium fixed point") {
  const Grid g(2, 16);
  ModelParams mp;
  const State s0 = equilibrium_state(1.0, 1.0, mp, g);
  StepConfig cfg;
  cfg.dt = 1e-3;
  State s = s0;
  StepReport rep;
  for (int i = 0; i < 100; ++i) {
    auto [next, r] = step(s, cfg);
    s = std::move(next);
    rep = r;
  }
  CHECK(state_linf_diff(s, s0) <= 1e-11);
  CHECK(s.time == doctest::Approx(0.1));
  CHECK(rep.dt_used == doctest::Approx(1e-3));
  CHECK(rep.barrier_margin == doctest::Approx(1.0));
  CHECK(rep.final_residual <= cfg.picard_tol);
}

TEST_CASE("step conserves mass, eta mass, and momentum") {
  const Grid g(2, 32);
  ModelParams mp;
  State s = random_state(g, 7, mp);
  const double mass0 = integrate(s.rho);
  const double eta0 = integrate(s.eta);
  ScalarField mx0(g), my0(g);
  {
    const ScalarField rp = as_physical(s.rho);
    const VectorField up = as_physical(s.u);
    for (std::size_t p = 0; p < g.points(); ++p) {
      mx0.phys(0)[p] = rp.phys(0)[p] * up.phys(0)[p];
      my0.phys(0)[p] = rp.phys(0)[p] * up.phys(1)[p];
    }
  }
  const double px0 = integrate(mx0);
  const double py0 = integrate(my0);

  StepConfig cfg;
  cfg.dt = 5e-3;
  cfg.picard_tol = 1e-12;
  for (int i = 0; i < 20; ++i) {
    auto [next, rep] = step(s, cfg);
    CHECK(rep.dt_used == doctest::Approx(5e-3));
    s = std::move(next);
  }
  CHECK(std::abs(integrate(s.rho) - mass0) <= 1e-12 * std::abs(mass0));
  CHECK(std::abs(integrate(s.eta) - eta0) <= 1e-12 * std::abs(eta0));
  ScalarField mx(g), my(g);
  const ScalarField rp = as_physical(s.rho);
  const VectorField up = as_physical(s.u);
  for (std::size_t p = 0; p < g.points(); ++p) {
    mx.phys(0)[p] = rp.phys(0)[p] * up.phys(0)[p];
    my.phys(0)[p] = rp.phys(0)[p] * up.phys(1)[p];
  }
  // mean momentum leaks only through the finite Picard tolerance
  const double scale = std::abs(mass0);
  CHECK(std::abs(integrate(mx) - px0) <= 1e-9 * scale);
  CHECK(std::abs(integrate(my) - py0) <= 1e-9 * scale);
}

TEST_CASE("step is locally second order against the continuum rhs") {
  const Grid g(2, 16);
  ModelParams mp;
  State s = random_state(g, 13, mp);

  const ScalarField drho = rhs_continuity(s.rho, s.u);
  const ScalarField deta = rhs_eta(s.eta, s.u, mp);
  const SymTensorField dT = rhs_stress(s.T, s.u, s.eta, mp);

  auto local_error = [&](double dt) {
    StepConfig cfg;
    cfg.dt = dt;
    cfg.picard_tol = 1e-13;
    auto [next, rep] = step(s, cfg);
    REQUIRE(rep.dt_used == doctest::Approx(dt));
    ScalarField r = as_spectral(s.rho);
    ScalarField e = as_spectral(s.eta);
    SymTensorField t = as_spectral(s.T);
    ScalarField dr = drho;
    dr *= dt;
    r += dr;
    ScalarField de = deta;
    de *= dt;
    e += de;
    SymTensorField dtt = dT;
    dtt *= dt;
    t += dtt;
    double err = field_linf_diff(next.rho, r);
    err = std::max(err, field_linf_diff(next.eta, e));
    err = std::max(err, field_linf_diff(next.T, t));
    return err;
  };

  const double e1 = local_error(4e-3);
  const double e2 = local_error(2e-3);
  const double e3 = local_error(1e-3);
  CHECK(e1 / e2 > 3.0);
  CHECK(e1 / e2 < 5.0);
  CHECK(e2 / e3 > 3.0);
  CHECK(e2 / e3 < 5.0);
}

TEST_CASE("velocity converges first order in dt") {
  const Grid g(2, 16);
  ModelParams mp;
  const State s0 = random_state(g, 29, mp);
  const double t_end = 0.08;

  auto run = [&](double dt) {
    StepConfig cfg;
    cfg.dt = dt;
    cfg.picard_tol = 1e-12;
    State s = s0;
    const int steps = static_cast<int>(std::lround(t_end / dt));
    for (int i = 0; i < steps; ++i) {
      auto [next, rep] = step(s, cfg);
      REQUIRE(rep.dt_used == doctest::Approx(dt));
      s = std::move(next);
    }
    return s;
  };

  const State a = run(0.01);
  const State b = run(0.005);
  const State c = run(0.0025);
  const double d1 = field_linf_diff(a.u, b.u);
  const double d2 = field_linf_diff(b.u, c.u);
  CHECK(d1 / d2 > 1.5);
  CHECK(d1 / d2 < 2.8);
}

TEST_CASE("renormalized continuity consistency for b = rho^2") {
  // d/dt int rho^2 + int rho^2 div u = O(dt) for the discrete step
  const Grid g(2, 16);
  ModelParams mp;
  const State s0 = random_state(g, 43, mp);

  auto defect = [&](double dt) {
    StepConfig cfg;
    cfg.dt = dt;
    auto [next, rep] = step(s0, cfg);
    const ScalarField r0 = as_physical(s0.rho);
    const ScalarField r1 = as_physical(next.rho);
    const ScalarField dv = as_physical(divergence(s0.u));
    ScalarField b0(g), b1(g), bdiv(g);
    for (std::size_t p = 0; p < g.points(); ++p) {
      b0.phys(0)[p] = r0.phys(0)[p] * r0.phys(0)[p];
      b1.phys(0)[p] = r1.phys(0)[p] * r1.phys(0)[p];
      bdiv.phys(0)[p] = b0.phys(0)[p] * dv.phys(0)[p];
    }
    return std::abs((integrate(b1) - integrate(b0)) / dt + integrate(bdiv));
  };

  const double d1 = defect(2e-3);
  const double d2 = defect(1e-3);
  CHECK(d1 / d2 > 1.5);
  CHECK(d1 / d2 < 2.8);
}

TEST_CASE("adaptive_dt respects the cap and the CFL scaling") {
  const Grid g(2, 32);
  ModelParams mp;
  StepConfig cfg;
  cfg.dt = 2.0;

  State still = equilibrium_state(1.0, 1.0, mp, g);
  CHECK(adaptive_dt(still, cfg) == doctest::Approx(2.0));

  // solenoidal shear: div u = 0, |grad u| = c
  auto shear = [&](double c) {
    State s = equilibrium_state(1.0, 1.0, mp, g);
    VectorField u(g);
    for (std::size_t p = 0; p < g.points(); ++p) {
      const auto ij = g.point_of(p);
      u.phys(0)[p] = c * std::sin(ij[1] * g.spacing());
      u.phys(1)[p] = 0.0;
    }
    s.u = u;
    return s;
  };
  const double dt1 = adaptive_dt(shear(0.1), cfg);
  const double dt2 = adaptive_dt(shear(0.2), cfg);
  CHECK(dt1 == doctest::Approx(0.5 * g.spacing() / 0.1).epsilon(1e-9));
  CHECK(dt1 / dt2 == doctest::Approx(2.0).epsilon(1e-6));
}

TEST_CASE("adaptive_dt shrinks near the barrier") {
  const Grid g(2, 32);
  ModelParams mp;  // b = 1
  State s = equilibrium_state(1.0, 1.0, mp, g);
  VectorField u(g);
  for (std::size_t p = 0; p < g.points(); ++p) {
    const auto ij = g.point_of(p);
    u.phys(0)[p] = 0.95 * std::sin(ij[0] * g.spacing());
    u.phys(1)[p] = 0.0;
  }
  s.u = u;
  StepConfig cfg;
  cfg.dt = 0.5;
  const double dt = adaptive_dt(s, cfg);
  // margin 0.05, squared gradient 0.95^2
  CHECK(dt == doctest::Approx(0.5 * 0.05 / (0.95 * 0.95 + 1e-12)).epsilon(1e-6));
  CHECK(dt < 0.03);
}

TEST_CASE("barrier violation raises BarrierError") {
  const Grid g(2, 16);
  ModelParams mp;  // b = 1, delta = 0: hard barrier
  State s = equilibrium_state(1.0, 1.0, mp, g);
  VectorField u(g);
  for (std::size_t p = 0; p < g.points(); ++p) {
    const auto ij = g.point_of(p);
    u.phys(0)[p] = 1.2 * std::sin(ij[0] * g.spacing());
    u.phys(1)[p] = 0.0;
  }
  s.u = u;  // div u peaks at 1.2
  StepConfig cfg;
  CHECK_THROWS_AS(step(s, cfg), BarrierError);
  CHECK_THROWS_AS(step(s, cfg), StepRejected);  // hierarchy
  CHECK_THROWS_AS(advance_with_retries(s, cfg, 3), BarrierError);

  // the regularized barrier accepts the same state
  ModelParams soft = mp;
  soft.delta = 0.2;
  State s2 = s;
  s2.params = soft;
  StepConfig small;
  small.dt = 1e-4;
  auto [next, rep] = step(s2, small);
  CHECK(next.rho.finite());
}

TEST_CASE("advance_with_retries halves dt past a rejection") {
  const Grid g(2, 16);
  ModelParams mp;
  const State s = equilibrium_state(1.0, 1.0, mp, g);
  ManufacturedSources src;
  src.rho = [&](double) { return ScalarField::constant(g, -30.0); };

  StepConfig cfg;
  cfg.dt = 0.1;
  CHECK_THROWS_AS(step(s, cfg, &src), StepRejected);
  CHECK_THROWS_AS(advance_with_retries(s, cfg, 1, &src), StepRejected);

  auto [next, rep] = advance_with_retries(s, cfg, 10, &src);
  CHECK(rep.dt_used == doctest::Approx(0.025));
  CHECK(min_value(as_physical(next.rho)) > 0.0);
  CHECK(integrate(next.rho) ==
        doctest::Approx((1.0 - 0.025 * 30.0) * g.volume()));
}

TEST_CASE("nonconvergence surfaces with an exhausted sweep budget") {
  const Grid g(2, 16);
  ModelParams mp;
  State s = random_state(g, 51, mp);
  StepConfig cfg;
  cfg.picard_max = 1;
  cfg.picard_tol = 1e-14;
  VectorField guess(g);
  CHECK_THROWS_AS(solve_momentum(s, s.u, 1e-3, cfg), NonconvergenceError);
}

TEST_CASE("step is deterministic") {
  const Grid g(2, 16);
  ModelParams mp;
  const State s0 = random_state(g, 77, mp);
  StepConfig cfg;
  cfg.dt = 2e-3;
  State a = s0;
  State b = s0;
  for (int i = 0; i < 3; ++i) {
    a = step(a, cfg).first;
    b = step(b, cfg).first;
  }
  CHECK(state_linf_diff(a, b) == 0.0);
}

TEST_CASE("manufactured momentum source recovers the target velocity") {
  // force u toward u_star with S = rho du_star/dt at equilibrium background;
  // a single small step must land on dt * du_star/dt to first order
  const Grid g(2, 16);
  ModelParams mp;
  const State s = equilibrium_state(1.0, 1.0, mp, g);
  const VectorField ustar_rate = random_smooth_vector(g, 101, 3.0, 0.01);

  ManufacturedSources src;
  src.momentum = [&](double) { return ustar_rate; };  // rho = 1

  auto err_at = [&](double dt) {
    StepConfig cfg;
    cfg.dt = dt;
    cfg.picard_tol = 1e-13;
    auto [next, rep] = step(s, cfg, &src);
    VectorField want = ustar_rate;
    want *= dt;
    return field_linf_diff(next.u, want) / dt;
  };
  const double e1 = err_at(2e-3);
  const double e2 = err_at(1e-3);
  CHECK(e1 <= 1e-2);
  CHECK(e1 / e2 == doctest::Approx(2.0).epsilon(0.3));
}

TEST_CASE("3d equilibrium and a random step") {
  const Grid g(3, 8);
  ModelParams mp;
  const State s0 = equilibrium_state(1.0, 1.0, mp, g);
  StepConfig cfg;
  cfg.dt = 1e-3;
  State s = s0;
  for (int i = 0; i < 3; ++i) s = step(s, cfg).first;
  CHECK(state_linf_diff(s, s0) <= 1e-12);

  State r = random_state(g, 5, mp);
  const double mass0 = integrate(r.rho);
  auto [next, rep] = step(r, cfg);
  CHECK(next.rho.finite());
  CHECK(next.T.finite());
  CHECK(std::abs(integrate(next.rho) - mass0) <= 1e-12 * std::abs(mass0));
  CHECK(rep.barrier_margin > 0.0);
}

TEST_SUITE_END();
