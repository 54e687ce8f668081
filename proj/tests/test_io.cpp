#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "plob/errors.hpp"
#include "plob/io.hpp"

using namespace plob;

namespace {

namespace fs = std::filesystem;

std::string temp_dir(const std::string& tag) {
  const fs::path p = fs::temp_directory_path() / ("plob_io_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

double field_linf_diff(const GridField& a, const GridField& b) {
  GridField d = as_physical(a);
  d -= as_physical(b);
  return max_abs(d);
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, sep)) out.push_back(tok);
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in);
  std::vector<std::string> lines;
  std::string l;
  while (std::getline(in, l)) lines.push_back(l);
  return lines;
}

}  // namespace

TEST_SUITE_BEGIN("io");

TEST_CASE("parse_config applies defaults to a minimal document") {
  const RunConfig cfg = parse_config(R"({"scenario":"equilibrium"})");
  CHECK(cfg.scenario == "equilibrium");
  CHECK(cfg.dim == 2);
  CHECK(cfg.n == 32);
  CHECK(cfg.length == doctest::Approx(kTwoPi));
  CHECK(cfg.params.r == 2.5);
  CHECK(cfg.params.gamma == 2.0);
  CHECK(cfg.step.dt == 1e-3);
  CHECK(cfg.step.picard_max == 50);
  CHECK(cfg.end_time == 0.1);
  CHECK(cfg.cadence == 10);
  CHECK(cfg.seed == 1);
  CHECK(!cfg.twin_run);
  CHECK(cfg.out_dir == "out");
  CHECK(!cfg.forcing);
}

TEST_CASE("parse_config rejections name the offending path") {
  auto expect_error = [](const std::string& doc, const std::string& needle) {
    try {
      parse_config(doc);
      FAIL_CHECK("expected ConfigError for " << doc);
    } catch (const ConfigError& e) {
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  expect_error(R"({"scenario":"equilibrium","params":{"r":2.0}})", "r");
  expect_error(R"({"scenario":"equilibrium","bogus":1})", "bogus");
  expect_error(R"({"scenario":"equilibrium","params":{"foo":1}})",
               "params.foo");
  expect_error(R"({"scenario":"equilibrium","grid":{"m":8}})", "grid.m");
  expect_error(R"({"scenario":"equilibrium","step":{"Dt":1}})", "step.Dt");
  expect_error(R"({"scenario":"nope"})", "scenario");
  expect_error(R"({})", "scenario");
  expect_error(R"({"scenario":"equilibrium","grid":{"n":17}})", "grid.n");
  expect_error(R"({"scenario":"equilibrium","grid":{"n":4}})", "grid.n");
  expect_error(R"({"scenario":"equilibrium","grid":{"dim":4}})", "grid.dim");
  expect_error(R"({"scenario":"equilibrium","grid":{"length":-1}})",
               "grid.length");
  expect_error(R"({"scenario":"equilibrium","end_time":0})", "end_time");
  expect_error(R"({"scenario":"equilibrium","cadence":0})", "cadence");
  expect_error(R"({"scenario":"equilibrium","step":{"damping":0}})",
               "step.damping");
  expect_error(R"({"scenario":"equilibrium","step":{"dt":-1}})", "step.dt");
  expect_error(R"({"scenario":"equilibrium","seed":-3})", "seed");
  expect_error(R"({"scenario":"equilibrium","grid":{"n":16.5}})", "grid.n");
  expect_error(R"({"scenario":"equilibrium","twin_run":true})", "twin_run");
  expect_error(R"({"scenario":"twin-run","fine_n":32,"grid":{"n":32}})",
               "fine_n");
  expect_error(R"({"scenario":"twin-run","data_n":48,"grid":{"n":32}})",
               "data_n");
  expect_error(R"({"scenario":"equilibrium","fine_n":64})", "fine_n");
  expect_error(R"({"scenario":"manufactured","grid":{"dim":3}})", "dim");
  expect_error(R"({"scenario":"equilibrium","forcing":{"amplitude":-1}})",
               "forcing.amplitude");
  expect_error(R"({"scenario":"equilibrium","forcing":{"level":2}})",
               "forcing.level");
  expect_error("{", "JSON");
}

TEST_CASE("twin-run scenario resolves its companion resolutions") {
  const RunConfig cfg =
      parse_config(R"({"scenario":"twin-run","grid":{"n":16}})");
  CHECK(cfg.twin_run);
  CHECK(cfg.fine_n == 32);
  CHECK(cfg.data_n == 16);
  const RunConfig explicit_cfg = parse_config(
      R"({"scenario":"twin-run","grid":{"n":48},"fine_n":64,"data_n":32})");
  CHECK(explicit_cfg.fine_n == 64);
  CHECK(explicit_cfg.data_n == 32);
}

TEST_CASE("serialize-parse round trip is idempotent") {
  const std::vector<std::string> docs = {
      R"({"scenario":"equilibrium"})",
      R"({"scenario":"shear-perturbation","grid":{"n":16,"dim":3},"seed":42})",
      R"({"scenario":"random-smooth","params":{"r":3.5,"b":2.0,"sigma":0.05},
          "step":{"dt":5e-4,"damping":1.0},"end_time":0.25,"cadence":3})",
      R"({"scenario":"twin-run","grid":{"n":16},"fine_n":48,
          "forcing":{"amplitude":0.5,"decay":2.5,"seed":7}})",
      R"({"scenario":"manufactured","grid":{"n":16},"out_dir":"x/y"})",
  };
  for (const std::string& doc : docs) {
    const std::string norm = serialize_config(parse_config(doc));
    CHECK(serialize_config(parse_config(norm)) == norm);
  }
  const std::string norm =
      serialize_config(parse_config(R"({"scenario":"equilibrium"})"));
  CHECK(norm.find("\"r\": 2.5") != std::string::npos);
  CHECK(norm.find("\"picard_max\": 50") != std::string::npos);
  CHECK(norm.find("\"out_dir\": \"out\"") != std::string::npos);
}

TEST_CASE("snapshot round trip is bit exact") {
  const std::string dir = temp_dir("snap");
  const Grid g(2, 16);

  SUBCASE("symmetric tensor field") {
    const SymTensorField f = random_smooth_symtensor(g, 5, 3.0, 1.3);
    const std::string path = dir + "/T.f64";
    SnapshotHeader h;
    h.dim = 2;
    h.n = 16;
    h.length = g.length();
    h.field_name = "T";
    h.components = 3;
    h.time = 0.125;
    write_snapshot(f, h, path);
    auto [back, hb] = read_snapshot(path);
    CHECK(hb.field_name == "T");
    CHECK(hb.time == 0.125);
    CHECK(hb.components == 3);
    const GridField fp = as_physical(f);
    for (int c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < g.points(); ++p) {
        if (fp.phys(c)[p] != back.phys(c)[p]) {
          FAIL("payload not bit exact");
          break;
        }
      }
  }

  SUBCASE("header must describe the field") {
    const ScalarField f = random_smooth_field(g, 6, 3.0, 1.0);
    SnapshotHeader h;
    h.dim = 2;
    h.n = 16;
    h.length = g.length();
    h.field_name = "rho";
    h.components = 2;  // lies
    CHECK_THROWS_AS(write_snapshot(f, h, dir + "/bad.f64"), FormatError);
  }

  SUBCASE("truncated payload is rejected") {
    const ScalarField f = random_smooth_field(g, 7, 3.0, 1.0);
    const std::string path = dir + "/trunc.f64";
    SnapshotHeader h;
    h.dim = 2;
    h.n = 16;
    h.length = g.length();
    h.field_name = "rho";
    h.components = 1;
    write_snapshot(f, h, path);
    fs::resize_file(path, fs::file_size(path) - 8);
    CHECK_THROWS_AS(read_snapshot(path), FormatError);
  }

  SUBCASE("foreign byte order is rejected, not swapped") {
    const ScalarField f = random_smooth_field(g, 8, 3.0, 1.0);
    const std::string path = dir + "/big.f64";
    SnapshotHeader h;
    h.dim = 2;
    h.n = 16;
    h.length = g.length();
    h.field_name = "rho";
    h.components = 1;
    write_snapshot(f, h, path);
    std::string side = slurp(path + ".json");
    const auto at = side.find("little");
    REQUIRE(at != std::string::npos);
    side.replace(at, 6, "big");
    std::ofstream(path + ".json", std::ios::trunc) << side;
    CHECK_THROWS_AS(read_snapshot(path), FormatError);
  }

  SUBCASE("missing files are format errors") {
    CHECK_THROWS_AS(read_snapshot(dir + "/absent.f64"), FormatError);
  }
}

TEST_CASE("state snapshot bundle round trip") {
  const std::string dir = temp_dir("bundle");
  const Grid g(2, 16);
  ModelParams mp;
  State s = equilibrium_state(1.0, 1.0, mp, g);
  s.rho = random_smooth_field(g, 11, 3.0, 0.2, 0.6);
  s.u = random_smooth_vector(g, 12, 3.0, 0.1);
  s.time = 0.75;
  write_state_snapshot(s, dir + "/snap");
  const State back = read_state_snapshot(dir + "/snap", mp);
  CHECK(back.time == 0.75);
  CHECK(field_linf_diff(back.rho, s.rho) == 0.0);
  CHECK(field_linf_diff(back.u, s.u) == 0.0);
  CHECK(field_linf_diff(back.eta, s.eta) == 0.0);
  CHECK(field_linf_diff(back.T, s.T) == 0.0);

  // a bundle stitched from different times must be refused
  State other = s;
  other.time = 0.5;
  write_state_snapshot(other, dir + "/mix");
  fs::copy_file(dir + "/snap_rho.f64.json", dir + "/mix_rho.f64.json",
                fs::copy_options::overwrite_existing);
  fs::copy_file(dir + "/snap_rho.f64", dir + "/mix_rho.f64",
                fs::copy_options::overwrite_existing);
  CHECK_THROWS_AS(read_state_snapshot(dir + "/mix", mp), FormatError);
}

TEST_CASE("presets") {
  const Grid g(2, 16);
  ModelParams mp;
  mp.k = 0.8;

  SUBCASE("equilibrium") {
    const State s = preset("equilibrium", g, mp, 1);
    const PositivityReport rep = positivity_report(s);
    CHECK(rep.min_eig_T == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(rep.min_rho == doctest::Approx(1.0));
    CHECK(rep.max_divu_times_b == doctest::Approx(0.0));
  }

  SUBCASE("shear perturbation is solenoidal with amplitude 1e-2") {
    const State s = preset("shear-perturbation", g, mp, 3);
    CHECK(max_abs(divergence(s.u)) <= 1e-12);
    CHECK(max_abs(s.u) == doctest::Approx(1e-2).epsilon(1e-12));
    CHECK(field_linf_diff(s.rho, ScalarField::constant(g, 1.0)) <= 1e-14);
    CHECK(field_linf_diff(s.eta, ScalarField::constant(g, 1.0)) <= 1e-14);
  }

  SUBCASE("random smooth floors and positive stress") {
    const State s = preset("random-smooth", g, mp, 9);
    const PositivityReport rep = positivity_report(s);
    CHECK(rep.min_rho >= 0.5);
    CHECK(rep.min_rho <= 0.5 + 1e-10);
    CHECK(rep.min_eta >= 0.5);
    CHECK(rep.min_eig_T > 0.0);
    CHECK(max_abs(s.u) == 0.0);
    // deterministic in (grid, seed)
    const State again = preset("random-smooth", g, mp, 9);
    CHECK(field_linf_diff(again.rho, s.rho) == 0.0);
    CHECK(field_linf_diff(again.T, s.T) == 0.0);
    const State shifted = preset("random-smooth", g, mp, 10);
    CHECK(field_linf_diff(shifted.rho, s.rho) > 1e-3);
  }

  SUBCASE("unknown scenario") {
    CHECK_THROWS_AS(preset("vortex", g, mp, 1), ConfigError);
  }
}

TEST_CASE("manufactured case") {
  const Grid g(2, 32);
  ModelParams mp;

  SUBCASE("initial fields keep their stated margins") {
    const ManufacturedCase mc = make_manufactured(g, mp);
    const PositivityReport rep = positivity_report(mc.initial);
    CHECK(rep.min_rho >= 0.85);
    CHECK(rep.min_eta >= 0.85);
    CHECK(rep.min_eig_T >= 0.7);
    CHECK(rep.max_divu_times_b <= 0.46);
    CHECK(mc.initial.time == 0.0);
    CHECK(field_linf_diff(mc.exact(0.0).rho, mc.initial.rho) == 0.0);
  }

  SUBCASE("one sourced step tracks the exact solution at second order") {
    const ManufacturedCase mc = make_manufactured(g, mp);
    const double t0 = 0.3;
    const State start = mc.exact(t0);
    auto local_error = [&](double dt) {
      StepConfig cfg;
      cfg.dt = dt;
      cfg.picard_tol = 1e-13;
      cfg.picard_max = 200;
      auto [next, rep] = step(start, cfg, &mc.sources);
      REQUIRE(rep.dt_used == doctest::Approx(dt));
      const State ref = mc.exact(next.time);
      double err = field_linf_diff(next.rho, ref.rho);
      err = std::max(err, field_linf_diff(next.u, ref.u));
      err = std::max(err, field_linf_diff(next.eta, ref.eta));
      err = std::max(err, field_linf_diff(next.T, ref.T));
      return err;
    };
    const double e1 = local_error(2e-3);
    const double e2 = local_error(1e-3);
    CHECK(e1 <= 5e-5);
    CHECK(e1 / e2 > 3.0);
    CHECK(e1 / e2 < 5.0);
  }

  SUBCASE("guards") {
    CHECK_THROWS_AS(make_manufactured(Grid(3, 8), mp), DomainError);
    CHECK_THROWS_AS(make_manufactured(Grid(2, 16, 1.0), mp), DomainError);
    ModelParams clipped = mp;
    clipped.sigma = 0.6;
    CHECK_THROWS_AS(make_manufactured(g, clipped), DomainError);
    ModelParams traced = mp;
    traced.alpha = 0.2;
    CHECK_THROWS_AS(make_manufactured(g, traced), DomainError);
  }
}

TEST_CASE("csv column sets") {
  const std::vector<std::string> base = csv_columns(false);
  CHECK(base.front() == "step");
  CHECK(base.back() == "barrier_margin");
  CHECK(base.size() == 21);
  const std::vector<std::string> twin = csv_columns(true);
  CHECK(twin.size() == 25);
  CHECK(twin[21] == "e1");
  CHECK(twin.back() == "total");
}

TEST_CASE("run: equilibrium scenario is a fixed point of the artifacts") {
  const std::string dir = temp_dir("eqrun");
  RunConfig cfg = parse_config(R"({"scenario":"equilibrium"})");
  cfg.n = 16;
  cfg.end_time = 0.02;
  cfg.cadence = 5;
  cfg.out_dir = dir;
  const RunReport rep = run(cfg);
  CHECK(rep.status == "ok");
  CHECK(rep.exit_code == 0);
  CHECK(rep.steps_completed == 20);
  CHECK(rep.final_time == doctest::Approx(0.02));

  const State initial = read_state_snapshot(dir + "/snap_000000", cfg.params);
  for (long idx : {5L, 10L, 15L, 20L}) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "/snap_%06ld", idx);
    const State s = read_state_snapshot(dir + buf, cfg.params);
    CHECK(field_linf_diff(s.rho, initial.rho) <= 1e-11);
    CHECK(field_linf_diff(s.u, initial.u) <= 1e-11);
    CHECK(field_linf_diff(s.eta, initial.eta) <= 1e-11);
    CHECK(field_linf_diff(s.T, initial.T) <= 1e-11);
  }

  const std::vector<std::string> lines = read_lines(dir + "/series.csv");
  REQUIRE(lines.size() == 5);  // header + rows at steps 5, 10, 15, 20
  std::string header = csv_columns(false)[0];
  for (std::size_t c = 1; c < csv_columns(false).size(); ++c)
    header += "," + csv_columns(false)[c];
  CHECK(lines[0] == header);
  const std::vector<std::string> row = split(lines[1], ',');
  REQUIRE(row.size() == csv_columns(false).size());
  CHECK(row[0] == "5");
  CHECK(std::stod(row[2]) == doctest::Approx(0.0));  // kinetic

  const std::string status = slurp(dir + "/status.json");
  CHECK(status.find("\"status\": \"ok\"") != std::string::npos);
  CHECK(status.find("\"complete\": true") != std::string::npos);
  CHECK(status.find("\"steps_completed\": 20") != std::string::npos);
}

TEST_CASE("run: identical config and seed give byte-identical artifacts") {
  RunConfig cfg = parse_config(
      R"({"scenario":"random-smooth","grid":{"n":16},"end_time":5e-3,
          "cadence":2,"seed":77})");
  const std::string d1 = temp_dir("det1");
  const std::string d2 = temp_dir("det2");
  cfg.out_dir = d1;
  const RunReport r1 = run(cfg);
  cfg.out_dir = d2;
  const RunReport r2 = run(cfg);
  REQUIRE(r1.status == "ok");
  REQUIRE(r2.status == "ok");
  CHECK(slurp(d1 + "/series.csv") == slurp(d2 + "/series.csv"));
  CHECK(slurp(d1 + "/snap_000004_T.f64") == slurp(d2 + "/snap_000004_T.f64"));
  CHECK(slurp(d1 + "/snap_000004_u.f64") == slurp(d2 + "/snap_000004_u.f64"));
}

TEST_CASE("run: adversarial forcing never lands an accepted state beyond the barrier") {
  const std::string dir = temp_dir("adv");
  RunConfig cfg = parse_config(
      R"({"scenario":"random-smooth","grid":{"n":16},"end_time":0.02,
          "cadence":1,"seed":5,"params":{"b":3.0},
          "step":{"dt":5e-3,"picard_max":40},
          "forcing":{"amplitude":40.0,"decay":3.0,"seed":6}})");
  cfg.out_dir = dir;
  const RunReport rep = run(cfg);
  // the forcing drives div u toward the barrier; whatever way the run ends,
  // no accepted row may violate the invariant
  CHECK((rep.status == "barrier" || rep.status == "nonconvergence" ||
         rep.status == "ok"));
  const std::vector<std::string> lines = read_lines(dir + "/series.csv");
  REQUIRE(lines.size() >= 2);
  const std::size_t div_col = 15;  // max_divu_times_b
  const std::size_t margin_col = 20;
  REQUIRE(csv_columns(false)[div_col] == "max_divu_times_b");
  REQUIRE(csv_columns(false)[margin_col] == "barrier_margin");
  bool rejection_seen = rep.status != "ok";
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::vector<std::string> row = split(lines[i], ',');
    CHECK(std::stod(row[div_col]) < 1.0);
    CHECK(std::stod(row[margin_col]) > 0.0);
    if (std::stod(row[19]) < 0.99 * cfg.step.dt) rejection_seen = true;
  }
  CHECK(rejection_seen);
  const std::string status = slurp(dir + "/status.json");
  if (rep.status != "ok")
    CHECK(status.find("\"complete\": false") != std::string::npos);
}

TEST_CASE("run: twin mode appends relative entropy columns") {
  const std::string dir = temp_dir("twin");
  RunConfig cfg = parse_config(
      R"({"scenario":"twin-run","grid":{"n":16},"fine_n":32,
          "end_time":5e-3,"cadence":2,"seed":3})");
  cfg.out_dir = dir;
  const RunReport rep = run(cfg);
  REQUIRE(rep.status == "ok");
  const std::vector<std::string> lines = read_lines(dir + "/series.csv");
  REQUIRE(lines.size() == 4);  // header + steps 2, 4, 5
  CHECK(split(lines[0], ',').size() == 25);
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::vector<std::string> row = split(lines[i], ',');
    REQUIRE(row.size() == 25);
    const double e1 = std::stod(row[21]);
    const double e2 = std::stod(row[22]);
    const double gap = std::stod(row[23]);
    const double total = std::stod(row[24]);
    CHECK(e1 >= 0.0);
    CHECK(e2 >= 0.0);
    CHECK(gap >= 0.0);
    CHECK(total == doctest::Approx(e1 + e2 + gap).epsilon(1e-12));
    CHECK(total > 0.0);  // resolutions genuinely differ
  }
}

TEST_CASE("run: manufactured scenario reports its errors") {
  const std::string dir = temp_dir("mmsrun");
  RunConfig cfg = parse_config(
      R"({"scenario":"manufactured","grid":{"n":16},"end_time":2e-3,
          "cadence":2,"step":{"dt":1e-3,"picard_tol":1e-12}})");
  cfg.out_dir = dir;
  const RunReport rep = run(cfg);
  REQUIRE(rep.status == "ok");
  REQUIRE(rep.metrics.count("u_error") == 1);
  CHECK(rep.metrics.at("u_error") <= 1e-4);
  CHECK(rep.metrics.at("rho_error") <= 1e-4);
  const std::string status = slurp(dir + "/status.json");
  CHECK(status.find("\"metrics\"") != std::string::npos);
}

TEST_SUITE_END();
