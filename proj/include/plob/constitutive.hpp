#pragma once

#include "plob/tensor.hpp"

namespace plob {

/// Model constants. validate() enforces the ranges a run configuration must
/// satisfy; tests may construct out-of-range values (e.g. the Newtonian
/// limit r = 2) to probe individual formulas.
struct ModelParams {
  double r = 2.5;       // power-law exponent, runs require r >= 2.5
  double b = 1.0;       // barrier scale, div u confined to (-1/b, 1/b)
  double mu0 = 1.0;     // base viscosity
  double a = 1.0;       // pressure coefficient
  double gamma = 2.0;   // pressure exponent, >= 2
  double k = 1.0;       // polymer elastic constant
  double L = 1.0;       // polymer length constant
  double lambda = 1.0;  // relaxation time
  double zeta = 1.0;    // quadratic polymer pressure coefficient
  double epsilon = 0.1; // center-of-mass diffusion
  double alpha = 0.0;   // trace-log regularization weight (>= 0)
  double sigma = 0.0;   // eigenvalue floor for the stress (>= 0)
  double delta = 0.0;   // barrier regularization width (0 = hard barrier)
  double theta = 0.0;   // entropic stress weight (>= 0, reserved)

  void validate() const;  // throws ConfigError
};

/// Pressure package: p, the potential H with p = rho H' - H, and its
/// first two derivatives.
struct PressureEval {
  double p;
  double H;
  double Hp;
  double Hpp;
};
PressureEval fluid_pressure(double rho, const ModelParams& mp);

/// Polymer package: the polymer pressure q and entropy-like potential G
/// with q = eta G' - G. G'(0+) and G''(0+) diverge; at eta = 0 the struct
/// carries the limits q = G = 0 and infinite derivatives.
struct PolymerEval {
  double q;
  double G;
  double Gp;
  double Gpp;
};
PolymerEval polymer_laws(double eta, const ModelParams& mp);

/// Logarithmic divergence barrier
///   Lambda(z) = -b^-2 log(1 - b^2 z^2),
/// even, convex, Lambda(0) = 0, blows up as |z| -> 1/b. The slope factors
/// as Lambda'(z) = z beta(z) with beta(z) = 2/(1 - b^2 z^2) >= 2.
/// regularized = true with delta > 0 evaluates the affine continuation
/// outside |z| <= 1/b - delta instead of throwing.
struct BarrierEval {
  double Lambda;
  double Lambda_p;
  double beta;
};
BarrierEval barrier(double z, const ModelParams& mp, bool regularized);

/// Power-law viscous stress with the isotropic barrier contribution:
///   S = 2 mu0 (1 + |Dd|^2)^{(r-2)/2} Dd + Lambda'(div u) I.
/// Dd must be trace-free. Uses the regularized barrier when delta > 0.
SymMat viscous_stress(const SymMat& Dd, double div_u, const ModelParams& mp);

/// Scalar power-law factor 2 mu0 (1 + s2)^{(r-2)/2} for s2 = |Dd|^2.
double power_law_factor(double s2, const ModelParams& mp);

}  // namespace plob
