#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>

#include "plob/diagnostics.hpp"

namespace plob {

/// Static band-limited random body force, built once per run from
/// random_smooth_vector(grid, seed, decay, amplitude).
struct ForcingSpec {
  double amplitude = 0.0;
  double decay = 3.0;
  unsigned long long seed = 1;
};

/// Full run description. parse_config fills defaults and validates; the
/// documented JSON schema mirrors the member names:
///   {"scenario": ..., "grid": {"dim","n","length"}, "params": {...},
///    "step": {"dt","picard_tol","picard_max","damping"}, "end_time",
///    "cadence", "seed", "twin_run", "fine_n", "data_n", "out_dir",
///    "forcing": {"amplitude","decay","seed"}}
struct RunConfig {
  std::string scenario;  // equilibrium | shear-perturbation | random-smooth |
                         // twin-run | manufactured
  int dim = 2;
  int n = 32;
  double length = kTwoPi;
  ModelParams params;
  StepConfig step;
  double end_time = 0.1;
  long cadence = 10;  // accepted steps between CSV rows / snapshots
  unsigned long long seed = 1;
  bool twin_run = false;  // implied by scenario twin-run
  int fine_n = 0;         // twin reference resolution; 0 means 2n
  int data_n = 0;         // band limit of the shared twin data; 0 means
                          // min(n, fine_n)
  std::string out_dir = "out";
  std::optional<ForcingSpec> forcing;

  Grid grid() const { return Grid(dim, n, length); }
};

/// Parse a JSON document into a RunConfig. Unknown keys and invariant
/// violations raise ConfigError naming the offending path.
RunConfig parse_config(const std::string& text);

/// Canonical JSON form: every field explicit, keys sorted, stable across
/// parse/serialize round trips.
std::string serialize_config(const RunConfig& cfg);

struct SnapshotHeader {
  int dim = 0;
  int n = 0;
  double length = 0.0;
  std::string field_name;
  int components = 0;
  double time = 0.0;
  std::string byte_order = "little";
  int format_version = 1;
};

/// Raw float64 payload at `path` (components in order, each laid out like
/// GridField physical storage) plus a JSON sidecar at `path` + ".json".
/// The field is written in physical representation.
void write_snapshot(const GridField& f, const SnapshotHeader& h,
                    const std::string& path);

/// Inverse of write_snapshot; FormatError on sidecar/payload mismatch,
/// foreign byte order, or unsupported version. Bit-exact round trip.
std::pair<GridField, SnapshotHeader> read_snapshot(const std::string& path);

/// Writes rho, u, eta, T under prefix_{rho,u,eta,T}.f64 (+ sidecars).
void write_state_snapshot(const State& s, const std::string& prefix);

/// Rebuilds a State from a bundle written by write_state_snapshot. Params
/// are not stored in snapshots and must be supplied.
State read_state_snapshot(const std::string& prefix, const ModelParams& mp);

/// Initial data for a named scenario on the given grid:
///   equilibrium        constant balance state (rho = eta = 1)
///   shear-perturbation equilibrium plus a solenoidal band-limited velocity
///                      of amplitude 1e-2
///   random-smooth      random rho, eta floored at 0.5, u = 0, and
///                      T = k eta I plus a small symmetric perturbation
///                      kept positive definite
///   twin-run           same construction as random-smooth (the driver
///                      prolongs it to the paired grids)
///   manufactured       exact trigonometric fields at t = 0
State preset(const std::string& scenario, const Grid& g, const ModelParams& mp,
             unsigned long long seed);

/// Manufactured-solution harness: closed-form fields with sources chosen so
/// they solve the forced system exactly. Sources are assembled spectrally on
/// a fine auxiliary grid and restricted, so their truncation error is far
/// below the run grid's own. 2D only.
struct ManufacturedCase {
  State initial;
  ManufacturedSources sources;
  std::function<State(double)> exact;
};
ManufacturedCase make_manufactured(const Grid& g, const ModelParams& mp);

struct RunReport {
  std::string status = "ok";  // ok | config-error | nonconvergence | barrier
  int exit_code = 0;          // 0 ok, 2 config, 3 nonconvergence, 4 barrier
  long steps_completed = 0;
  double final_time = 0.0;
  double wall_time_s = 0.0;
  std::map<std::string, double> metrics;  // scenario extras (e.g. errors)
};

/// Drive a full simulation: writes series.csv, periodic state snapshots,
/// and a terminal status.json into cfg.out_dir. Deterministic artifacts for
/// identical (config, seed). Errors are reported in the returned status and
/// status file rather than thrown.
RunReport run(const RunConfig& cfg);

/// CSV column names for the time series, in file order. Twin-run files
/// append the relative-entropy columns.
const std::vector<std::string>& csv_columns(bool twin);

}  // namespace plob
