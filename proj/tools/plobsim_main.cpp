#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "plob/errors.hpp"
#include "plob/io.hpp"

namespace {

using nlohmann::json;

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw plob::ConfigError("cannot read config file " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// key=value with a dotted key; the value is parsed as a JSON literal when
// possible and kept as a string otherwise
void apply_override(json& doc, const std::string& spec) {
  const auto eq = spec.find('=');
  if (eq == std::string::npos || eq == 0)
    throw plob::ConfigError("override must look like key=value: " + spec);
  const std::string key = spec.substr(0, eq);
  const std::string raw = spec.substr(eq + 1);
  json value;
  try {
    value = json::parse(raw);
  } catch (const json::parse_error&) {
    value = raw;
  }
  json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const std::size_t dot = key.find('.', start);
    const std::string part = key.substr(start, dot - start);
    if (part.empty())
      throw plob::ConfigError("override has an empty path segment: " + spec);
    if (dot == std::string::npos) {
      (*node)[part] = value;
      return;
    }
    node = &(*node)[part];
    if (!node->is_object() && !node->is_null())
      throw plob::ConfigError("override path crosses a scalar: " + spec);
    start = dot + 1;
  }
}

int cmd_run(const std::string& config_path, const std::string& scenario,
            const std::string& out_dir, std::optional<long long> seed,
            const std::vector<std::string>& overrides) {
  json doc;
  if (!config_path.empty()) {
    doc = json::parse(read_file(config_path));  // rethrown as exit 2 below
  } else if (!scenario.empty()) {
    doc = json{{"scenario", scenario}};
  } else {
    throw plob::ConfigError("run needs --config or --scenario");
  }
  if (!out_dir.empty()) doc["out_dir"] = out_dir;
  if (seed) doc["seed"] = *seed;
  for (const std::string& o : overrides) apply_override(doc, o);

  const plob::RunConfig cfg = plob::parse_config(doc.dump());
  const plob::RunReport rep = plob::run(cfg);
  std::printf("status=%s steps=%ld final_time=%.6g wall=%.3gs\n",
              rep.status.c_str(), rep.steps_completed, rep.final_time,
              rep.wall_time_s);
  for (const auto& [name, value] : rep.metrics)
    std::printf("%s=%.17g\n", name.c_str(), value);
  return rep.exit_code;
}

int cmd_check(const std::string& prefix, const std::string& config_path) {
  plob::ModelParams mp;
  if (!config_path.empty())
    mp = plob::parse_config(read_file(config_path)).params;
  const plob::State s = plob::read_state_snapshot(prefix, mp);
  const plob::PositivityReport rep = plob::positivity_report(s);

  const bool finite = s.rho.finite() && s.u.finite() && s.eta.finite() &&
                      s.T.finite();
  struct Line {
    const char* name;
    double value;
    bool ok;
  };
  const Line lines[] = {
      {"fields_finite", finite ? 1.0 : 0.0, finite},
      {"min_rho", rep.min_rho, rep.min_rho > 0.0},
      {"min_eta", rep.min_eta, rep.min_eta >= 0.0},
      {"min_eig_T", rep.min_eig_T, rep.min_eig_T > 0.0},
      {"max_divu_times_b", rep.max_divu_times_b, rep.max_divu_times_b < 1.0},
      {"stress_l3a", rep.stress_l3a, std::isfinite(rep.stress_l3a)},
  };
  bool all = true;
  for (const Line& l : lines) {
    std::printf("%s %s = %.17g\n", l.ok ? "PASS" : "FAIL", l.name, l.value);
    all = all && l.ok;
  }
  return all ? 0 : 4;
}

int cmd_entropy(const std::string& first, const std::string& second,
                const std::string& config_path) {
  plob::ModelParams mp;
  if (!config_path.empty())
    mp = plob::parse_config(read_file(config_path)).params;
  const plob::State a = plob::read_state_snapshot(first, mp);
  const plob::State b = plob::read_state_snapshot(second, mp);
  const plob::RelEntropyReport rep = plob::relative_entropy(a, b);
  std::printf("e1=%.17g\ne2=%.17g\nstress_gap=%.17g\ntotal=%.17g\n", rep.e1,
              rep.e2, rep.stress_gap, rep.total);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"periodic viscoelastic flow laboratory"};
  app.require_subcommand(1);

  std::string config_path, scenario, out_dir, prefix, first, second;
  std::optional<long long> seed;
  std::vector<std::string> overrides;

  CLI::App* runc = app.add_subcommand("run", "drive a configured simulation");
  runc->add_option("--config", config_path, "JSON run configuration");
  runc->add_option("--scenario", scenario,
                   "scenario preset when no config file is given");
  runc->add_option("--out", out_dir, "output directory (overrides config)");
  runc->add_option("--seed", seed, "seed (overrides config)");
  runc->add_option("--override", overrides,
                   "dotted key=value applied to the config document");

  CLI::App* checkc =
      app.add_subcommand("check", "invariant suite on a state snapshot");
  checkc->add_option("--prefix", prefix, "snapshot bundle prefix")->required();
  checkc->add_option("--config", config_path,
                     "config supplying model parameters");

  CLI::App* entc = app.add_subcommand(
      "entropy", "relative entropy between two state snapshots");
  entc->add_option("--first", first, "snapshot bundle prefix")->required();
  entc->add_option("--second", second, "reference snapshot bundle prefix")
      ->required();
  entc->add_option("--config", config_path,
                   "config supplying model parameters");

  CLI11_PARSE(app, argc, argv);

  try {
    if (runc->parsed())
      return cmd_run(config_path, scenario, out_dir, seed, overrides);
    if (checkc->parsed()) return cmd_check(prefix, config_path);
    return cmd_entropy(first, second, config_path);
  } catch (const plob::NonconvergenceError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  } catch (const plob::BarrierError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const plob::StepRejected& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 4;
  } catch (const nlohmann::json::parse_error& e) {
    std::fprintf(stderr, "error: invalid JSON: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
}
