#include "plob/io.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "plob/errors.hpp"

namespace plob {

using nlohmann::json;

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// --- config ------------------------------------------------------------------

void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                    const std::string& scope) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("unknown key: " + (scope.empty() ? "" : scope + ".") +
                        it.key());
}

double get_double(const json& obj, const char* key, double fallback,
                  const std::string& scope) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number())
    throw ConfigError(scope + key + ": expected a number");
  return v.get<double>();
}

long get_integer(const json& obj, const char* key, long fallback,
                 const std::string& scope) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer())
    throw ConfigError(scope + key + ": expected an integer");
  return v.get<long>();
}

ModelParams parse_params(const json& obj) {
  reject_unknown(obj,
                 {"r", "b", "mu0", "a", "gamma", "k", "L", "lambda", "zeta",
                  "epsilon", "alpha", "sigma", "delta", "theta"},
                 "params");
  ModelParams mp;
  mp.r = get_double(obj, "r", mp.r, "params.");
  mp.b = get_double(obj, "b", mp.b, "params.");
  mp.mu0 = get_double(obj, "mu0", mp.mu0, "params.");
  mp.a = get_double(obj, "a", mp.a, "params.");
  mp.gamma = get_double(obj, "gamma", mp.gamma, "params.");
  mp.k = get_double(obj, "k", mp.k, "params.");
  mp.L = get_double(obj, "L", mp.L, "params.");
  mp.lambda = get_double(obj, "lambda", mp.lambda, "params.");
  mp.zeta = get_double(obj, "zeta", mp.zeta, "params.");
  mp.epsilon = get_double(obj, "epsilon", mp.epsilon, "params.");
  mp.alpha = get_double(obj, "alpha", mp.alpha, "params.");
  mp.sigma = get_double(obj, "sigma", mp.sigma, "params.");
  mp.delta = get_double(obj, "delta", mp.delta, "params.");
  mp.theta = get_double(obj, "theta", mp.theta, "params.");
  try {
    mp.validate();
  } catch (const ConfigError& e) {
    throw ConfigError(std::string("params: ") + e.what());
  }
  return mp;
}

const std::set<std::string> kScenarios = {
    "equilibrium", "shear-perturbation", "random-smooth", "twin-run",
    "manufactured"};

}  // namespace

RunConfig parse_config(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  if (!doc.is_object()) throw ConfigError("config: document must be an object");
  reject_unknown(doc,
                 {"scenario", "grid", "params", "step", "end_time", "cadence",
                  "seed", "twin_run", "fine_n", "data_n", "out_dir",
                  "forcing"},
                 "");

  RunConfig cfg;
  if (!doc.contains("scenario"))
    throw ConfigError("scenario: missing (one of equilibrium, "
                      "shear-perturbation, random-smooth, twin-run, "
                      "manufactured)");
  if (!doc.at("scenario").is_string())
    throw ConfigError("scenario: expected a string");
  cfg.scenario = doc.at("scenario").get<std::string>();
  if (!kScenarios.count(cfg.scenario))
    throw ConfigError("scenario: unknown scenario '" + cfg.scenario + "'");

  if (doc.contains("grid")) {
    const json& g = doc.at("grid");
    if (!g.is_object()) throw ConfigError("grid: expected an object");
    reject_unknown(g, {"dim", "n", "length"}, "grid");
    cfg.dim = static_cast<int>(get_integer(g, "dim", cfg.dim, "grid."));
    cfg.n = static_cast<int>(get_integer(g, "n", cfg.n, "grid."));
    cfg.length = get_double(g, "length", cfg.length, "grid.");
  }
  if (cfg.dim != 2 && cfg.dim != 3)
    throw ConfigError("grid.dim: must be 2 or 3");
  if (cfg.n < 8 || cfg.n % 2 != 0)
    throw ConfigError("grid.n: must be even and >= 8");
  if (!(cfg.length > 0.0)) throw ConfigError("grid.length: must be positive");

  if (doc.contains("params")) {
    if (!doc.at("params").is_object())
      throw ConfigError("params: expected an object");
    cfg.params = parse_params(doc.at("params"));
  }

  if (doc.contains("step")) {
    const json& s = doc.at("step");
    if (!s.is_object()) throw ConfigError("step: expected an object");
    reject_unknown(s, {"dt", "picard_tol", "picard_max", "damping"}, "step");
    cfg.step.dt = get_double(s, "dt", cfg.step.dt, "step.");
    cfg.step.picard_tol =
        get_double(s, "picard_tol", cfg.step.picard_tol, "step.");
    cfg.step.picard_max = static_cast<int>(
        get_integer(s, "picard_max", cfg.step.picard_max, "step."));
    cfg.step.damping = get_double(s, "damping", cfg.step.damping, "step.");
  }
  if (!(cfg.step.dt > 0.0)) throw ConfigError("step.dt: must be positive");
  if (!(cfg.step.picard_tol > 0.0))
    throw ConfigError("step.picard_tol: must be positive");
  if (cfg.step.picard_max < 1)
    throw ConfigError("step.picard_max: must be >= 1");
  if (!(cfg.step.damping > 0.0) || cfg.step.damping > 1.0)
    throw ConfigError("step.damping: must be in (0, 1]");

  cfg.end_time = get_double(doc, "end_time", cfg.end_time, "");
  if (!(cfg.end_time > 0.0)) throw ConfigError("end_time: must be positive");
  cfg.cadence = get_integer(doc, "cadence", cfg.cadence, "");
  if (cfg.cadence < 1) throw ConfigError("cadence: must be >= 1");

  if (doc.contains("seed")) {
    const json& v = doc.at("seed");
    if (!v.is_number_integer() || (v.is_number_integer() && v.get<long long>() < 0 &&
                                   !v.is_number_unsigned()))
      throw ConfigError("seed: expected a nonnegative integer");
    cfg.seed = v.get<unsigned long long>();
  }

  if (doc.contains("twin_run")) {
    if (!doc.at("twin_run").is_boolean())
      throw ConfigError("twin_run: expected a boolean");
    cfg.twin_run = doc.at("twin_run").get<bool>();
  }
  if (cfg.scenario == "twin-run") cfg.twin_run = true;
  if (cfg.twin_run && cfg.scenario != "twin-run")
    throw ConfigError("twin_run: only the twin-run scenario runs twinned");

  cfg.fine_n = static_cast<int>(get_integer(doc, "fine_n", cfg.fine_n, ""));
  cfg.data_n = static_cast<int>(get_integer(doc, "data_n", cfg.data_n, ""));
  if (cfg.twin_run) {
    if (cfg.fine_n == 0) cfg.fine_n = 2 * cfg.n;
    if (cfg.fine_n <= cfg.n || cfg.fine_n % 2 != 0)
      throw ConfigError("fine_n: must be even and exceed grid.n");
    if (cfg.data_n == 0) cfg.data_n = cfg.n;
    if (cfg.data_n < 8 || cfg.data_n % 2 != 0 || cfg.data_n > cfg.n)
      throw ConfigError("data_n: must be even, >= 8, and <= grid.n");
  } else if (cfg.fine_n != 0 || cfg.data_n != 0) {
    throw ConfigError("fine_n: meaningful only for the twin-run scenario");
  }

  if (doc.contains("out_dir")) {
    if (!doc.at("out_dir").is_string())
      throw ConfigError("out_dir: expected a string");
    cfg.out_dir = doc.at("out_dir").get<std::string>();
    if (cfg.out_dir.empty()) throw ConfigError("out_dir: must be nonempty");
  }

  if (doc.contains("forcing")) {
    const json& f = doc.at("forcing");
    if (!f.is_object()) throw ConfigError("forcing: expected an object");
    reject_unknown(f, {"amplitude", "decay", "seed"}, "forcing");
    ForcingSpec fs;
    fs.amplitude = get_double(f, "amplitude", fs.amplitude, "forcing.");
    fs.decay = get_double(f, "decay", fs.decay, "forcing.");
    fs.seed = static_cast<unsigned long long>(
        get_integer(f, "seed", static_cast<long>(fs.seed), "forcing."));
    if (fs.amplitude < 0.0)
      throw ConfigError("forcing.amplitude: must be >= 0");
    if (!(fs.decay > 0.0)) throw ConfigError("forcing.decay: must be positive");
    cfg.forcing = fs;
  }

  if (cfg.scenario == "manufactured") {
    if (cfg.dim != 2)
      throw ConfigError("scenario: manufactured supports grid.dim = 2 only");
    if (std::abs(cfg.length - kTwoPi) > 1e-12)
      throw ConfigError("scenario: manufactured requires the default length");
  }
  return cfg;
}

std::string serialize_config(const RunConfig& cfg) {
  json doc;
  doc["scenario"] = cfg.scenario;
  doc["grid"] = {{"dim", cfg.dim}, {"n", cfg.n}, {"length", cfg.length}};
  const ModelParams& mp = cfg.params;
  doc["params"] = {{"r", mp.r},         {"b", mp.b},
                   {"mu0", mp.mu0},     {"a", mp.a},
                   {"gamma", mp.gamma}, {"k", mp.k},
                   {"L", mp.L},         {"lambda", mp.lambda},
                   {"zeta", mp.zeta},   {"epsilon", mp.epsilon},
                   {"alpha", mp.alpha}, {"sigma", mp.sigma},
                   {"delta", mp.delta}, {"theta", mp.theta}};
  doc["step"] = {{"dt", cfg.step.dt},
                 {"picard_tol", cfg.step.picard_tol},
                 {"picard_max", cfg.step.picard_max},
                 {"damping", cfg.step.damping}};
  doc["end_time"] = cfg.end_time;
  doc["cadence"] = cfg.cadence;
  doc["seed"] = cfg.seed;
  doc["twin_run"] = cfg.twin_run;
  doc["fine_n"] = cfg.fine_n;
  doc["data_n"] = cfg.data_n;
  doc["out_dir"] = cfg.out_dir;
  if (cfg.forcing)
    doc["forcing"] = {{"amplitude", cfg.forcing->amplitude},
                      {"decay", cfg.forcing->decay},
                      {"seed", cfg.forcing->seed}};
  return doc.dump(2) + "\n";
}

// --- snapshots ---------------------------------------------------------------

namespace {

json header_to_json(const SnapshotHeader& h) {
  json doc;
  doc["dim"] = h.dim;
  doc["n"] = h.n;
  doc["length"] = h.length;
  doc["field_name"] = h.field_name;
  doc["components"] = h.components;
  doc["time"] = h.time;
  doc["byte_order"] = h.byte_order;
  doc["format_version"] = h.format_version;
  return doc;
}

}  // namespace

void write_snapshot(const GridField& f, const SnapshotHeader& h,
                    const std::string& path) {
  const Grid& g = f.grid();
  if (h.dim != g.dim() || h.n != g.n() ||
      std::abs(h.length - g.length()) > 1e-12 || h.components != f.ncomp())
    throw FormatError("write_snapshot: header does not describe the field");
  if (h.byte_order != "little")
    throw FormatError("write_snapshot: format v1 is little-endian only");
  if (h.format_version != 1)
    throw FormatError("write_snapshot: unsupported format version");

  const GridField p = as_physical(f);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("write_snapshot: cannot open " + path);
  for (int c = 0; c < p.ncomp(); ++c)
    out.write(reinterpret_cast<const char*>(p.phys(c)),
              static_cast<std::streamsize>(g.points() * sizeof(double)));
  if (!out) throw FormatError("write_snapshot: short write on " + path);
  out.close();

  std::ofstream side(path + ".json", std::ios::trunc);
  if (!side) throw FormatError("write_snapshot: cannot open " + path + ".json");
  side << header_to_json(h).dump(2) << "\n";
}

std::pair<GridField, SnapshotHeader> read_snapshot(const std::string& path) {
  std::ifstream side(path + ".json");
  if (!side) throw FormatError("read_snapshot: missing sidecar " + path + ".json");
  json doc;
  try {
    side >> doc;
  } catch (const json::parse_error& e) {
    throw FormatError(std::string("read_snapshot: bad sidecar: ") + e.what());
  }
  if (!doc.is_object()) throw FormatError("read_snapshot: bad sidecar");
  reject_unknown(doc,
                 {"dim", "n", "length", "field_name", "components", "time",
                  "byte_order", "format_version"},
                 "sidecar");
  SnapshotHeader h;
  try {
    h.dim = doc.at("dim").get<int>();
    h.n = doc.at("n").get<int>();
    h.length = doc.at("length").get<double>();
    h.field_name = doc.at("field_name").get<std::string>();
    h.components = doc.at("components").get<int>();
    h.time = doc.at("time").get<double>();
    h.byte_order = doc.at("byte_order").get<std::string>();
    h.format_version = doc.at("format_version").get<int>();
  } catch (const json::exception& e) {
    throw FormatError(std::string("read_snapshot: bad sidecar: ") + e.what());
  } catch (const ConfigError& e) {
    throw FormatError(std::string("read_snapshot: ") + e.what());
  }
  if (h.format_version != 1)
    throw FormatError("read_snapshot: unsupported format version");
  if (h.byte_order != "little")
    throw FormatError("read_snapshot: foreign byte order (no byte swap in v1)");
  if ((h.dim != 2 && h.dim != 3) || h.n < 8 || h.n % 2 != 0 ||
      !(h.length > 0.0) || h.components < 1)
    throw FormatError("read_snapshot: sidecar describes no valid grid");

  const Grid g(h.dim, h.n, h.length);
  GridField f(g, h.components, Rep::Physical);
  const std::uintmax_t expect =
      static_cast<std::uintmax_t>(g.points()) * h.components * sizeof(double);
  std::error_code ec;
  const std::uintmax_t actual = std::filesystem::file_size(path, ec);
  if (ec) throw FormatError("read_snapshot: missing payload " + path);
  if (actual != expect)
    throw FormatError("read_snapshot: payload holds " + std::to_string(actual) +
                      " bytes, header implies " + std::to_string(expect));
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("read_snapshot: cannot open " + path);
  for (int c = 0; c < h.components; ++c)
    in.read(reinterpret_cast<char*>(f.phys(c)),
            static_cast<std::streamsize>(g.points() * sizeof(double)));
  if (!in) throw FormatError("read_snapshot: short read on " + path);
  return {std::move(f), std::move(h)};
}

namespace {

SnapshotHeader make_header(const Grid& g, const std::string& name, int comps,
                           double time) {
  SnapshotHeader h;
  h.dim = g.dim();
  h.n = g.n();
  h.length = g.length();
  h.field_name = name;
  h.components = comps;
  h.time = time;
  return h;
}

void copy_into(GridField& dst, const GridField& src) {
  const GridField p = as_physical(src);
  for (int c = 0; c < dst.ncomp(); ++c)
    std::copy_n(p.phys(c), dst.grid().points(), dst.phys(c));
}

}  // namespace

void write_state_snapshot(const State& s, const std::string& prefix) {
  const Grid& g = s.grid();
  write_snapshot(s.rho, make_header(g, "rho", 1, s.time), prefix + "_rho.f64");
  write_snapshot(s.u, make_header(g, "u", g.dim(), s.time), prefix + "_u.f64");
  write_snapshot(s.eta, make_header(g, "eta", 1, s.time), prefix + "_eta.f64");
  write_snapshot(s.T, make_header(g, "T", g.dim() * (g.dim() + 1) / 2, s.time),
                 prefix + "_T.f64");
}

State read_state_snapshot(const std::string& prefix, const ModelParams& mp) {
  auto [rho, hr] = read_snapshot(prefix + "_rho.f64");
  auto [u, hu] = read_snapshot(prefix + "_u.f64");
  auto [eta, he] = read_snapshot(prefix + "_eta.f64");
  auto [T, ht] = read_snapshot(prefix + "_T.f64");
  const Grid g(hr.dim, hr.n, hr.length);
  for (const SnapshotHeader* h : {&hu, &he, &ht})
    if (h->dim != hr.dim || h->n != hr.n ||
        std::abs(h->length - hr.length) > 1e-12 || h->time != hr.time)
      throw FormatError("read_state_snapshot: bundle headers disagree");
  const int sym = g.dim() * (g.dim() + 1) / 2;
  if (hr.components != 1 || hu.components != g.dim() || he.components != 1 ||
      ht.components != sym)
    throw FormatError("read_state_snapshot: unexpected component counts");
  State s(g, mp);
  s.time = hr.time;
  copy_into(s.rho, rho);
  copy_into(s.u, u);
  copy_into(s.eta, eta);
  copy_into(s.T, T);
  return s;
}

// --- presets -----------------------------------------------------------------

State preset(const std::string& scenario, const Grid& g, const ModelParams& mp,
             unsigned long long seed) {
  if (scenario == "equilibrium") return equilibrium_state(1.0, 1.0, mp, g);

  if (scenario == "shear-perturbation") {
    State s = equilibrium_state(1.0, 1.0, mp, g);
    VectorField u = random_smooth_vector(g, seed, 3.0, 1.0);
    solenoidal_project(u);
    const double peak = max_abs(u);
    if (peak > 0.0) u *= 1e-2 / peak;
    u.to_physical();
    s.u = std::move(u);
    return s;
  }

  if (scenario == "random-smooth" || scenario == "twin-run") {
    State s(g, mp);
    s.rho = random_smooth_field(g, seed, 3.0, 0.2, 0.5);
    s.eta = random_smooth_field(g, seed + 1, 3.0, 0.15, 0.5);
    const ScalarField ep = as_physical(s.eta);
    // T = k eta I plus a perturbation halved until positive definiteness
    // holds on the whole grid
    SymTensorField pert = random_smooth_symtensor(g, seed + 2, 3.0, 0.05);
    for (int tries = 0; tries < 40; ++tries) {
      SymTensorField T(g);
      double worst = std::numeric_limits<double>::infinity();
      for (std::size_t p = 0; p < g.points(); ++p) {
        SymMat m = pert.mat_at(p);
        for (int d = 0; d < g.dim(); ++d)
          m.set(d, d, m(d, d) + mp.k * ep.phys(0)[p]);
        worst = std::min(worst, min_eig(m));
        T.set_mat(p, m);
      }
      if (worst > 0.0) {
        s.T = std::move(T);
        return s;
      }
      pert *= 0.5;
      pert.to_physical();
    }
    throw DegenerateFieldError("preset: could not keep the stress positive");
  }

  if (scenario == "manufactured") return make_manufactured(g, mp).initial;

  throw ConfigError("scenario: unknown scenario '" + scenario + "'");
}

// --- manufactured solution ---------------------------------------------------

namespace {

// Closed-form fields with per-axis modes up to 3, so a 16-point grid (cut 5)
// truncates real quadratic-product content while 32 points (cut 10) keep it:
//   rho = 1 + c (0.10 sin x cos y + 0.04 cos 3x sin 2y)
//   eta = 1 + c (0.10 cos x sin y + 0.04 sin 2x sin 3y)
//   u   = c (0.10 sin x cos y + 0.05 sin 3x cos y,
//            0.10 cos x sin y + 0.05 cos 2x sin 2y)
//   T   = I + c [0.10 sin x sin y I + diag(0.05 cos x + 0.04 cos 3x cos y,
//            -0.05 cos y + 0.04 sin x sin 3y)], off-diagonal
//            c (0.05 sin x sin y + 0.03 sin 2x cos 3y)
// with c = cos t. Margins: rho, eta >= 0.86, min eig T >= 0.7,
// |div u| <= 0.45.
struct ManufacturedEval {
  ScalarField rho, eta;
  VectorField u;
  SymTensorField T;
};

ManufacturedEval eval_manufactured(const Grid& g, double base, double c) {
  ManufacturedEval e{ScalarField(g), ScalarField(g), VectorField(g),
                     SymTensorField(g)};
  for (std::size_t p = 0; p < g.points(); ++p) {
    const auto ij = g.point_of(p);
    const double x = ij[0] * g.spacing();
    const double y = ij[1] * g.spacing();
    const double sx = std::sin(x), cx = std::cos(x);
    const double sy = std::sin(y), cy = std::cos(y);
    const double s2x = std::sin(2 * x), c2x = std::cos(2 * x);
    const double s2y = std::sin(2 * y), c2y = std::cos(2 * y);
    const double s3x = std::sin(3 * x), c3x = std::cos(3 * x);
    const double s3y = std::sin(3 * y), c3y = std::cos(3 * y);
    e.rho.phys(0)[p] = base + c * (0.10 * sx * cy + 0.04 * c3x * s2y);
    e.eta.phys(0)[p] = base + c * (0.10 * cx * sy + 0.04 * s2x * s3y);
    e.u.phys(0)[p] = c * (0.10 * sx * cy + 0.05 * s3x * cy);
    e.u.phys(1)[p] = c * (0.10 * cx * sy + 0.05 * c2x * s2y);
    SymMat m(2);
    m.set(0, 0, base + c * (0.10 * sx * sy + 0.05 * cx + 0.04 * c3x * cy));
    m.set(1, 1, base + c * (0.10 * sx * sy - 0.05 * cy + 0.04 * sx * s3y));
    m.set(0, 1, c * (0.05 * sx * sy + 0.03 * s2x * c3y));
    e.T.set_mat(p, m);
  }
  return e;
}

State exact_manufactured(const Grid& g, const ModelParams& mp, double t) {
  ManufacturedEval e = eval_manufactured(g, 1.0, std::cos(t));
  State s(g, mp);
  s.time = t;
  s.rho = std::move(e.rho);
  s.eta = std::move(e.eta);
  s.u = std::move(e.u);
  s.T = std::move(e.T);
  return s;
}

// momentum operator pieces assembled analytically on the auxiliary grid:
// source = d_t(rho u) + Div(rho u x u) + grad(pot) - Div S - Div T
VectorField momentum_source_aux(const Grid& ga, const ModelParams& mp,
                                double t) {
  const ManufacturedEval v = eval_manufactured(ga, 1.0, std::cos(t));
  const ManufacturedEval r = eval_manufactured(ga, 0.0, -std::sin(t));
  const std::size_t np = ga.points();
  const int dim = ga.dim();

  VectorField src(ga);
  for (int i = 0; i < dim; ++i)
    for (std::size_t p = 0; p < np; ++p)
      src.phys(i)[p] = r.rho.phys(0)[p] * v.u.phys(i)[p] +
                       v.rho.phys(0)[p] * r.u.phys(i)[p];
  src.to_spectral();

  for (int i = 0; i < dim; ++i) {
    VectorField w(ga);
    for (int j = 0; j < dim; ++j)
      for (std::size_t p = 0; p < np; ++p)
        w.phys(j)[p] =
            v.rho.phys(0)[p] * v.u.phys(i)[p] * v.u.phys(j)[p];
    const ScalarField conv = divergence(w);
    for (std::size_t m = 0; m < ga.modes(); ++m) src.spec(i)[m] += conv.spec(0)[m];
  }

  ScalarField pot(ga);
  for (std::size_t p = 0; p < np; ++p) {
    const double rho = v.rho.phys(0)[p];
    const double eta = v.eta.phys(0)[p];
    pot.phys(0)[p] = mp.a * std::pow(rho, mp.gamma) + mp.k * mp.L * eta +
                     mp.zeta * eta * eta;
  }
  const VectorField gp = gradient(pot);
  src += gp;

  const std::vector<ScalarField> gradu = velocity_gradient(v.u);
  SymTensorField S(ga);
  for (std::size_t p = 0; p < np; ++p) {
    Mat G(dim);
    double div = 0.0;
    for (int i = 0; i < dim; ++i) {
      for (int j = 0; j < dim; ++j) G(i, j) = gradu[i * dim + j].phys(0)[p];
      div += G(i, i);
    }
    S.set_mat(p, viscous_stress(deviatoric(G), div, mp));
  }
  src -= tensor_divergence(S);
  src -= tensor_divergence(v.T);
  return src;
}

}  // namespace

ManufacturedCase make_manufactured(const Grid& g, const ModelParams& mp) {
  if (g.dim() != 2)
    throw DomainError("make_manufactured: 2D only");
  if (std::abs(g.length() - kTwoPi) > 1e-12)
    throw DomainError("make_manufactured: requires the default torus length");
  if (mp.sigma > 0.5)
    throw DomainError("make_manufactured: sigma would clip the exact stress");
  if (mp.alpha != 0.0)
    throw DomainError("make_manufactured: alpha term not represented");

  const Grid ga(2, std::max(128, 2 * g.n()), g.length());

  ManufacturedCase mc{exact_manufactured(g, mp, 0.0), {}, {}};
  mc.exact = [g, mp](double t) { return exact_manufactured(g, mp, t); };
  mc.sources.rho = [g, ga](double t) {
    const ManufacturedEval v = eval_manufactured(ga, 1.0, std::cos(t));
    ManufacturedEval r = eval_manufactured(ga, 0.0, -std::sin(t));
    ScalarField src = as_spectral(r.rho);
    src -= rhs_continuity(v.rho, v.u);
    return restrict_to(src, g);
  };
  mc.sources.eta = [g, ga, mp](double t) {
    const ManufacturedEval v = eval_manufactured(ga, 1.0, std::cos(t));
    ManufacturedEval r = eval_manufactured(ga, 0.0, -std::sin(t));
    ScalarField src = as_spectral(r.eta);
    src -= rhs_eta(v.eta, v.u, mp);
    return restrict_to(src, g);
  };
  mc.sources.stress = [g, ga, mp](double t) {
    const ManufacturedEval v = eval_manufactured(ga, 1.0, std::cos(t));
    ManufacturedEval r = eval_manufactured(ga, 0.0, -std::sin(t));
    SymTensorField src = as_spectral(r.T);
    src -= rhs_stress(v.T, v.u, v.eta, mp);
    return restrict_to(src, g);
  };
  mc.sources.momentum = [g, ga, mp](double t) {
    return restrict_to(momentum_source_aux(ga, mp, t), g);
  };
  return mc;
}

// --- driver ------------------------------------------------------------------

const std::vector<std::string>& csv_columns(bool twin) {
  static const std::vector<std::string> base = {
      "step",          "time",
      "kinetic",       "pressure_potential",
      "polymer",       "stress_trace",
      "eta_dissipation", "viscous_dissipation",
      "barrier_dissipation", "stress_relaxation",
      "forcing",       "eta_source",
      "min_rho",       "min_eta",
      "min_eig_T",     "max_divu_times_b",
      "stress_l3a",    "picard_iterations",
      "final_residual", "dt_used",
      "barrier_margin"};
  static const std::vector<std::string> twinned = [] {
    std::vector<std::string> v = base;
    v.insert(v.end(), {"e1", "e2", "stress_gap", "total"});
    return v;
  }();
  return twin ? twinned : base;
}

namespace {

std::string csv_header(bool twin) {
  std::string line;
  for (const std::string& c : csv_columns(twin)) {
    if (!line.empty()) line += ",";
    line += c;
  }
  return line + "\n";
}

std::string csv_row(long step, const State& s, const StepReport& srep,
                    const RelEntropyReport* ent) {
  const EnergyLedger led = energy_ledger(s);
  const PositivityReport pos = positivity_report(s);
  std::ostringstream row;
  row << step << "," << fmt17(s.time) << "," << fmt17(led.kinetic) << ","
      << fmt17(led.pressure_potential) << "," << fmt17(led.polymer) << ","
      << fmt17(led.stress_trace) << "," << fmt17(led.eta_dissipation) << ","
      << fmt17(led.viscous_dissipation) << ","
      << fmt17(led.barrier_dissipation) << ","
      << fmt17(led.stress_relaxation) << "," << fmt17(led.forcing) << ","
      << fmt17(led.eta_source) << "," << fmt17(pos.min_rho) << ","
      << fmt17(pos.min_eta) << "," << fmt17(pos.min_eig_T) << ","
      << fmt17(pos.max_divu_times_b) << "," << fmt17(pos.stress_l3a) << ","
      << srep.picard_iterations << "," << fmt17(srep.final_residual) << ","
      << fmt17(srep.dt_used) << "," << fmt17(srep.barrier_margin);
  if (ent)
    row << "," << fmt17(ent->e1) << "," << fmt17(ent->e2) << ","
        << fmt17(ent->stress_gap) << "," << fmt17(ent->total);
  return row.str() + "\n";
}

std::string snap_prefix(const std::string& dir, long step) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "snap_%06ld", step);
  return dir + "/" + buf;
}

State prolong_state(const State& s, const Grid& fine, const ModelParams& mp) {
  State out(fine, mp);
  out.time = s.time;
  out.rho = as_physical(prolong_to(as_spectral(s.rho), fine));
  out.u = as_physical(prolong_to(as_spectral(s.u), fine));
  out.eta = as_physical(prolong_to(as_spectral(s.eta), fine));
  out.T = as_physical(prolong_to(as_spectral(s.T), fine));
  if (s.forcing)
    out.forcing = as_physical(prolong_to(as_spectral(*s.forcing), fine));
  return out;
}

State restrict_state(const State& s, const Grid& coarse,
                     const ModelParams& mp) {
  State out(coarse, mp);
  out.time = s.time;
  out.rho = as_physical(restrict_to(as_spectral(s.rho), coarse));
  out.u = as_physical(restrict_to(as_spectral(s.u), coarse));
  out.eta = as_physical(restrict_to(as_spectral(s.eta), coarse));
  out.T = as_physical(restrict_to(as_spectral(s.T), coarse));
  return out;
}

}  // namespace

RunReport run(const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  RunReport rep;
  long steps = 0;
  double final_time = 0.0;
  std::string error_text;

  try {
    std::filesystem::create_directories(cfg.out_dir);
    const Grid g = cfg.grid();
    const bool twin = cfg.twin_run;

    State s = [&] {
      if (!twin) return preset(cfg.scenario, g, cfg.params, cfg.seed);
      const Grid gd(cfg.dim, cfg.data_n, cfg.length);
      return prolong_state(preset("random-smooth", gd, cfg.params, cfg.seed),
                           g, cfg.params);
    }();
    std::optional<State> fine;
    if (twin) {
      const Grid gd(cfg.dim, cfg.data_n, cfg.length);
      const Grid gf(cfg.dim, cfg.fine_n, cfg.length);
      fine = prolong_state(preset("random-smooth", gd, cfg.params, cfg.seed),
                           gf, cfg.params);
    }
    if (cfg.forcing && cfg.forcing->amplitude > 0.0) {
      s.forcing = random_smooth_vector(g, cfg.forcing->seed,
                                       cfg.forcing->decay,
                                       cfg.forcing->amplitude);
      if (fine)
        fine->forcing = as_physical(prolong_to(
            as_spectral(*s.forcing), fine->grid()));
    }

    ManufacturedSources msrc;
    const ManufacturedSources* srcp = nullptr;
    std::function<State(double)> exact;
    if (cfg.scenario == "manufactured") {
      ManufacturedCase mc = make_manufactured(g, cfg.params);
      msrc = std::move(mc.sources);
      exact = std::move(mc.exact);
      srcp = &msrc;
    }

    std::ofstream csv(cfg.out_dir + "/series.csv", std::ios::trunc);
    if (!csv) throw ConfigError("out_dir: cannot write " + cfg.out_dir);
    csv << csv_header(twin);
    write_state_snapshot(s, snap_prefix(cfg.out_dir, 0));

    const long budget =
        10 * static_cast<long>(std::ceil(cfg.end_time / cfg.step.dt)) + 100;
    const double horizon = cfg.end_time - 1e-9 * cfg.step.dt;
    while (s.time < horizon) {
      auto [next, srep] = advance_with_retries(s, cfg.step, 10, srcp);
      s = std::move(next);
      if (twin) {
        auto [fnext, frep] = advance_with_retries(*fine, cfg.step, 10);
        *fine = std::move(fnext);
        if (fine->time != s.time)
          throw NonconvergenceError(
              "twin runs took different adaptive steps; "
              "lower step.dt to keep them aligned");
      }
      ++steps;
      final_time = s.time;
      const bool last = !(s.time < horizon);
      if (steps % cfg.cadence == 0 || last) {
        if (twin) {
          const RelEntropyReport ent =
              relative_entropy(s, restrict_state(*fine, g, cfg.params));
          csv << csv_row(steps, s, srep, &ent);
        } else {
          csv << csv_row(steps, s, srep, nullptr);
        }
        write_state_snapshot(s, snap_prefix(cfg.out_dir, steps));
        csv.flush();
      }
      if (steps > budget)
        throw NonconvergenceError("step budget exhausted before end_time");
    }

    if (exact) {
      const State ref = exact(s.time);
      auto linf = [](const GridField& a, const GridField& b) {
        GridField d = as_physical(a);
        d -= as_physical(b);
        return max_abs(d);
      };
      rep.metrics["rho_error"] = linf(s.rho, ref.rho);
      rep.metrics["u_error"] = linf(s.u, ref.u);
      rep.metrics["eta_error"] = linf(s.eta, ref.eta);
      rep.metrics["T_error"] = linf(s.T, ref.T);
    }
  } catch (const ConfigError& e) {
    rep.status = "config-error";
    rep.exit_code = 2;
    error_text = e.what();
  } catch (const FormatError& e) {
    rep.status = "config-error";
    rep.exit_code = 2;
    error_text = e.what();
  } catch (const BarrierError& e) {
    rep.status = "barrier";
    rep.exit_code = 4;
    error_text = e.what();
  } catch (const NonconvergenceError& e) {
    rep.status = "nonconvergence";
    rep.exit_code = 3;
    error_text = e.what();
  } catch (const StepRejected& e) {
    rep.status = "nonconvergence";
    rep.exit_code = 3;
    error_text = e.what();
  } catch (const DomainError& e) {
    rep.status = "config-error";
    rep.exit_code = 2;
    error_text = e.what();
  }

  rep.steps_completed = steps;
  rep.final_time = final_time;
  rep.wall_time_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  json status;
  status["status"] = rep.status;
  status["complete"] = rep.status == "ok";
  status["steps_completed"] = rep.steps_completed;
  status["final_time"] = rep.final_time;
  status["wall_time_s"] = rep.wall_time_s;
  if (!error_text.empty()) status["error"] = error_text;
  if (!rep.metrics.empty()) status["metrics"] = rep.metrics;
  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  std::ofstream out(cfg.out_dir + "/status.json", std::ios::trunc);
  if (out) out << status.dump(2) << "\n";
  return rep;
}

}  // namespace plob
