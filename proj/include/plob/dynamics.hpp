#pragma once

#include <functional>
#include <optional>
#include <utility>

#include "plob/constitutive.hpp"
#include "plob/fields.hpp"

namespace plob {

/// Full simulation state. Fields are kept inside the 2/3 dealias band by the
/// stepper. The optional forcing is the body force f in the momentum balance.
struct State {
  double time = 0.0;
  ScalarField rho;
  VectorField u;
  ScalarField eta;
  SymTensorField T;
  ModelParams params;
  std::optional<VectorField> forcing;

  State(const Grid& g, const ModelParams& mp)
      : rho(g), u(g), eta(g), T(g), params(mp) {}
  const Grid& grid() const { return rho.grid(); }
};

struct StepConfig {
  double dt = 1e-3;
  double picard_tol = 1e-10;  // l2 norm of the velocity update
  int picard_max = 50;
  double damping = 0.7;  // relaxation factor of the momentum Picard sweep
};

struct StepReport {
  int picard_iterations = 0;  // momentum sweeps summed over the outer loop
  double final_residual = 0.0;
  double dt_used = 0.0;
  double barrier_margin = 0.0;  // 1/b - max |div u| at the accepted state
};

/// Time-dependent source hooks for the manufactured-solution harness. Each
/// callback receives the evaluation time; empty functions mean zero.
struct ManufacturedSources {
  std::function<ScalarField(double)> rho;
  std::function<ScalarField(double)> eta;
  std::function<VectorField(double)> momentum;
  std::function<SymTensorField(double)> stress;
};

/// Transport right-hand side -div(rho u), conservative and dealiased.
/// Result is spectral; its mean mode is exactly zero.
ScalarField rhs_continuity(const ScalarField& rho, const VectorField& u);

/// -div(eta u) + epsilon Laplace(eta), dealiased, spectral.
ScalarField rhs_eta(const ScalarField& eta, const VectorField& u,
                    const ModelParams& mp);

/// Stress right-hand side:
///   -Div(u That) + (grad u That + That grad u^T) + epsilon Laplace(T)
///   + (k/2lambda)(eta + alpha) I - (1/2lambda) That
/// with That = chi_sigma(T) when sigma > 0 and That = T otherwise; only the
/// diffusion acts on the raw tensor.
SymTensorField rhs_stress(const SymTensorField& T, const VectorField& u,
                          const ScalarField& eta, const ModelParams& mp);

/// Implicit Galerkin momentum update. Solves, on the retained modes,
///   (rho u - mom_old)/dt + div(rho u x u) + grad p(rho) + grad q(eta)
///     + (alpha/2) grad tr log chi_sigma(T) - div S(grad u) - div T
///     = rho f + extra_source
/// for u by damped Picard sweeps preconditioned with the constant
/// coefficient symbol. The conservative difference quotient conserves the
/// mean momentum exactly; mom_old defaults to rho u_old of the state.
/// Returns the velocity and the l2 norm of the last update. Throws
/// BarrierError when an iterate's divergence reaches 1/b (hard barrier
/// only) and NonconvergenceError past the sweep budget.
std::pair<VectorField, double> solve_momentum(
    const State& s, const VectorField& u_guess, double dt,
    const StepConfig& cfg, const VectorField* extra_source = nullptr,
    int* sweeps = nullptr, const VectorField* mom_old = nullptr);

/// One IMEX time advance: density and eta move explicitly in transport with
/// exact diffusion, the stress diffusion and relaxation are implicit per
/// mode, the momentum solve is implicit; the composition is iterated to a
/// fixed point in the velocity. Throws StepRejected (or BarrierError) when
/// the result violates positivity or the barrier; callers halve dt and
/// retry.
std::pair<State, StepReport> step(const State& s, const StepConfig& cfg,
                                  const ManufacturedSources* src = nullptr);

/// step() with up to max_halvings dt halvings on StepRejected.
std::pair<State, StepReport> advance_with_retries(
    const State& s, const StepConfig& cfg, int max_halvings = 10,
    const ManufacturedSources* src = nullptr);

/// Spatially constant equilibrium: rho = rho_bar, u = 0, eta = eta_bar,
/// T = k eta_bar I. An exact fixed point of every sub-update.
State equilibrium_state(double rho_bar, double eta_bar, const ModelParams& mp,
                        const Grid& g);

/// min(config.dt, CFL bound, barrier bound); strictly positive.
double adaptive_dt(const State& s, const StepConfig& cfg);

}  // namespace plob
