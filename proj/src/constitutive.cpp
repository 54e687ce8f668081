#include "plob/constitutive.hpp"

#include <cmath>
#include <limits>
#include <sstream>

namespace plob {

void ModelParams::validate() const {
  std::ostringstream bad;
  if (!(r >= 2.5)) bad << "power-law exponent r must be >= 2.5; ";
  if (!(b > 0.0)) bad << "barrier scale b must be positive; ";
  if (!(mu0 > 0.0)) bad << "mu0 must be positive; ";
  if (!(a > 0.0)) bad << "pressure coefficient a must be positive; ";
  if (!(gamma >= 2.0)) bad << "pressure exponent gamma must be >= 2; ";
  if (!(k > 0.0)) bad << "k must be positive; ";
  if (!(L > 0.0)) bad << "L must be positive; ";
  if (!(lambda > 0.0)) bad << "lambda must be positive; ";
  if (!(zeta > 0.0)) bad << "zeta must be positive; ";
  if (!(epsilon > 0.0)) bad << "epsilon must be positive; ";
  if (alpha < 0.0) bad << "alpha must be >= 0; ";
  if (sigma < 0.0) bad << "sigma must be >= 0; ";
  if (theta < 0.0) bad << "theta must be >= 0; ";
  if (delta < 0.0) bad << "delta must be >= 0; ";
  if (b > 0.0 && delta > 0.0 && !(delta < 1.0 / b))
    bad << "delta must be < 1/b; ";
  if (sigma > 0.0 && std::max(alpha, theta) > 0.0 &&
      !(sigma < std::max(alpha, theta)))
    bad << "sigma must be < max(alpha, theta) when both regularizations are active; ";
  const std::string msg = bad.str();
  if (!msg.empty()) throw ConfigError("invalid parameters: " + msg);
}

PressureEval fluid_pressure(double rho, const ModelParams& mp) {
  if (!(rho > 0.0)) throw DomainError("fluid_pressure: rho must be positive");
  PressureEval e;
  const double rg = std::pow(rho, mp.gamma);
  e.p = mp.a * rg;
  e.H = mp.a * rg / (mp.gamma - 1.0);
  e.Hp = mp.a * mp.gamma * std::pow(rho, mp.gamma - 1.0) / (mp.gamma - 1.0);
  e.Hpp = mp.a * mp.gamma * std::pow(rho, mp.gamma - 2.0);
  return e;
}

PolymerEval polymer_laws(double eta, const ModelParams& mp) {
  if (eta < 0.0) throw DomainError("polymer_laws: eta must be >= 0");
  PolymerEval e;
  const double kL = mp.k * mp.L;
  if (eta == 0.0) {
    e.q = 0.0;
    e.G = 0.0;  // eta log eta -> 0
    e.Gp = -std::numeric_limits<double>::infinity();
    e.Gpp = std::numeric_limits<double>::infinity();
    return e;
  }
  e.q = kL * eta + mp.zeta * eta * eta;
  e.G = kL * eta * std::log(eta) + mp.zeta * eta * eta;
  e.Gp = kL * (std::log(eta) + 1.0) + 2.0 * mp.zeta * eta;
  e.Gpp = kL / eta + 2.0 * mp.zeta;
  return e;
}

BarrierEval barrier(double z, const ModelParams& mp, bool regularized) {
  const double b = mp.b;
  const double zmax = 1.0 / b;
  const bool affine = regularized && mp.delta > 0.0;
  const double seam = zmax - mp.delta;

  auto core = [b](double y) {
    BarrierEval e;
    const double w = 1.0 - b * b * y * y;
    e.Lambda = -std::log(w) / (b * b);
    e.beta = 2.0 / w;
    e.Lambda_p = y * e.beta;
    return e;
  };

  if (affine && std::abs(z) > seam) {
    BarrierEval s = core(z >= 0.0 ? seam : -seam);
    BarrierEval e;
    e.Lambda = s.Lambda + s.Lambda_p * (z - (z >= 0.0 ? seam : -seam));
    e.Lambda_p = s.Lambda_p;
    e.beta = z != 0.0 ? e.Lambda_p / z : s.beta;
    return e;
  }
  if (!(std::abs(z) < zmax))
    throw BarrierError("barrier: |div u| reached 1/b");
  return core(z);
}

double power_law_factor(double s2, const ModelParams& mp) {
  return 2.0 * mp.mu0 * std::pow(1.0 + s2, 0.5 * (mp.r - 2.0));
}

SymMat viscous_stress(const SymMat& Dd, double div_u, const ModelParams& mp) {
  const double f = power_law_factor(Dd.frobenius_sq(), mp);
  BarrierEval be = barrier(div_u, mp, mp.delta > 0.0);
  SymMat S = Dd;
  S *= f;
  for (int i = 0; i < S.dim(); ++i) S.set(i, i, S(i, i) + be.Lambda_p);
  return S;
}

}  // namespace plob
