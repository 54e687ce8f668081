#pragma once

#include <utility>

#include "plob/dynamics.hpp"

namespace plob {

/// Integral energy bookkeeping of one state. Storage entries feed the
/// discrete budget; the dissipation entries are nonnegative for admissible
/// states.
struct EnergyLedger {
  double time = 0.0;
  double kinetic = 0.0;             // int 1/2 rho |u|^2
  double pressure_potential = 0.0;  // int H(rho)
  double polymer = 0.0;             // int (k L eta log eta + zeta eta^2)
  double stress_trace = 0.0;        // 1/2 int Tr T
  double eta_dissipation = 0.0;     // 2 eps int (2 k L |grad sqrt(eta)|^2 + zeta |grad eta|^2)
  double viscous_dissipation = 0.0; // int 2 mu0 (1+|Dd|^2)^((r-2)/2) |Dd|^2
  double barrier_dissipation = 0.0; // int Lambda(div u)
  double stress_relaxation = 0.0;   // (1/4 lambda) int Tr T
  double forcing = 0.0;             // int rho f . u
  double eta_source = 0.0;          // (d k / 4 lambda) int eta

  double total_energy() const {
    return kinetic + pressure_potential + polymer + stress_trace;
  }
  double total_dissipation() const {
    return eta_dissipation + viscous_dissipation + barrier_dissipation +
           stress_relaxation;
  }
};

EnergyLedger energy_ledger(const State& s);

/// Discrete budget between two consecutive ledgers:
///   [E(next) - E(prev)]/dt + dissipation(next) - forcing(next)
///     - eta_source(next)
/// Zero at equilibrium; <= O(dt) for smooth accepted runs.
double energy_budget_residual(const EnergyLedger& prev,
                              const EnergyLedger& next, double dt);

/// Discrete residual of the stress-trace balance
///   d/dt 1/2 int Tr T + (1/4 lambda) int Tr T
///     - (d k / 4 lambda) int eta - int T : grad u = O(dt)
/// evaluated with the flux terms at the next state.
double trace_balance_residual(const State& prev, const State& next, double dt);

/// Distance functional between a state and a reference state: kinetic and
/// Bregman parts (E1 for rho/u, E2 for eta) plus the quadratic stress gap.
struct RelEntropyReport {
  double e1 = 0.0;          // int (1/2 rho|u-u_ref|^2 + H-Bregman)
  double e2 = 0.0;          // int G-Bregman
  double stress_gap = 0.0;  // 1/2 int |T-T_ref|^2
  double total = 0.0;
};

RelEntropyReport relative_entropy(const State& s, const State& ref);

enum class ConvexFamily { Fluid, Polymer };

/// Bregman gap of H (fluid) or G (polymer) at scalar arguments, paired with
/// its quadratic lower bound 1/2 min F'' (x - x_ref)^2 over the enclosing
/// interval. gap >= bound - 1e-12 for positive arguments.
std::pair<double, double> convexity_gap(double x, double x_ref,
                                        ConvexFamily which,
                                        const ModelParams& mp);

/// ||v||_{1,p} / ||Dd(v)||_p for mean-zero v; the empirical constant of the
/// deviatoric Korn inequality on the torus.
double korn_ratio(const VectorField& v, double p);

struct TraceLogReport {
  double lhs = 0.0;     // -int grad P :: grad [chi_sigma(P)]^{-1}
  double rhs = 0.0;     // (1/d) int |grad Tr log chi_sigma(P)|^2
  double margin = 0.0;  // lhs - rhs
};

TraceLogReport trace_log_inequality_check(const SymTensorField& P,
                                          double sigma);

/// Pointwise admissibility monitors; values are reported, never clamped.
struct PositivityReport {
  double min_rho = 0.0;
  double min_eta = 0.0;
  double min_eig_T = 0.0;
  double max_divu_times_b = 0.0;
  double stress_l3a = 0.0;  // L^{3.75} norm of the pointwise operator norm
};

PositivityReport positivity_report(const State& s);

}  // namespace plob
