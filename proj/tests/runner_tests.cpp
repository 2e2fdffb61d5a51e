#include <doctest.h>
#include <unistd.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "cltlab/runner.hpp"

using namespace cltlab;
using namespace cltlab::cli;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json minimal_config() {
  return json{{"id", "eps-quad"},
              {"op", "epsilon_n"},
              {"distribution", "rademacher"},
              {"test_function",
               json{{"name", "quadratic"},
                    {"c0", 0.0},
                    {"b", {0.0}},
                    {"Q", {{2.0}}}}},
              {"n_schedule", json{{"start", 4}, {"factor", 4}, {"count", 1}}},
              {"box", json{{"half_width", 2.0}, {"step", 0.25}}},
              {"horizon", 1.0}};
}

fs::path scratch_dir(const std::string& tag) {
  auto p = fs::temp_directory_path() /
           ("cltlab_runner_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

bool contains_issue(const ConfigError& e, const std::string& needle) {
  for (const auto& s : e.issues())
    if (s.find(needle) != std::string::npos) return true;
  return false;
}

}  // namespace

TEST_CASE("config parsing: defaults and explicit fields") {
  auto cfg = parse_config(minimal_config());
  CHECK(cfg.id == "eps-quad");
  CHECK(cfg.op == "epsilon_n");
  CHECK(cfg.dist_name == "rademacher");
  CHECK(cfg.fn_name == "quadratic");
  REQUIRE(cfg.n_schedule.size() == 1);
  CHECK(cfg.n_schedule[0] == 4);
  CHECK(cfg.gamma == 1.0);
  CHECK(cfg.seed == 1);
  CHECK(cfg.mc_samples == 0);
  CHECK(cfg.horizon == 1.0);
  CHECK(cfg.degenerate_tol == 1e-9);
  REQUIRE(cfg.box.has_value());
  CHECK(cfg.box->half_width == 2.0);
  CHECK(cfg.box->step == 0.25);

  auto sched = parse_config(json{
      {"id", "s"},
      {"op", "sup_gap"},
      {"distribution", "rademacher"},
      {"test_function", "gauss_bump"},
      {"n_schedule", json{{"start", 8}, {"factor", 2}, {"count", 3}}}});
  CHECK(sched.n_schedule == std::vector<int>{8, 16, 32});
}

TEST_CASE("config parsing: every violation is collected before the reject") {
  json bad = minimal_config();
  bad["gamma"] = 1.5;
  bad["op"] = "frobnicate";
  bad["n_schedule"]["factor"] = 1;
  bad["surprise"] = true;
  try {
    parse_config(bad);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.issues().size() >= 4);
    CHECK(contains_issue(e, "gamma must lie in (0,1]"));
    CHECK(contains_issue(e, "frobnicate"));
    CHECK(contains_issue(e, "factor must be >= 2"));
    CHECK(contains_issue(e, "unknown key \"surprise\""));
  }

  // dimension mismatch between distribution and test function
  json mism = minimal_config();
  mism["distribution"] = "lattice2d";
  CHECK_THROWS_AS(parse_config(mism), ConfigError);

  json noid = minimal_config();
  noid.erase("id");
  CHECK_THROWS_AS(parse_config(noid), ConfigError);
}

TEST_CASE("document parsing: duplicate ids are named with both positions") {
  json doc = json{{"experiments", json::array({minimal_config(), minimal_config()})}};
  try {
    parse_experiments(doc);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(contains_issue(e, "duplicate id \"eps-quad\""));
    CHECK(contains_issue(e, "experiments[0]"));
    CHECK(contains_issue(e, "experiments[1]"));
  }
  CHECK_THROWS_AS(parse_experiments(json{{"experiments", json::array()}}),
                  ConfigError);
  CHECK_THROWS_AS(parse_experiments(json::array()), ConfigError);
}

TEST_CASE("canonical form and hash: stable across parses, sensitive to content") {
  auto a = parse_config(minimal_config());
  auto b = parse_config(minimal_config());
  CHECK(canonical_config(a) == canonical_config(b));
  CHECK(config_hash(a) == config_hash(b));

  json other = minimal_config();
  other["seed"] = 99;
  auto c = parse_config(other);
  CHECK(config_hash(a) != config_hash(c));

  CHECK(document_hash({a, c}) != document_hash({a}));
}

TEST_CASE("csv layout: fixed header, one row per n, blanks for absent columns") {
  auto cfg = parse_config(minimal_config());
  auto res = run_experiment(cfg);
  CHECK(res.ok);
  CHECK(res.status == "pass");
  REQUIRE(res.rows.size() == 1);
  REQUIRE(res.rows[0].epsilon_n.has_value());
  CHECK(*res.rows[0].epsilon_n <= 1e-12);
  CHECK(!res.rows[0].gap_sup.has_value());

  std::string csv = csv_text(res);
  std::string header = csv.substr(0, csv.find('\n'));
  CHECK(header ==
        "experiment_id,n,gap_sup,sigma_n,sigma_tilde_n,epsilon_n,c_n,C_n,"
        "k0_over_n_minus_s0,slope,r2,status");
  CHECK(csv.find("eps-quad,4,,,,") != std::string::npos);
  CHECK(csv.find("pass") != std::string::npos);
}

TEST_CASE("experiment outputs: three files, byte-stable across repeated runs") {
  auto cfg = parse_config(minimal_config());
  auto res1 = run_experiment(cfg);
  auto res2 = run_experiment(cfg);

  auto d1 = scratch_dir("wo1");
  auto d2 = scratch_dir("wo2");
  write_outputs(res1, d1.string());
  write_outputs(res2, d2.string());
  for (const char* name : {"eps-quad.csv", "eps-quad_report.json", "eps-quad_points.csv"}) {
    CAPTURE(name);
    REQUIRE(fs::exists(d1 / name));
    REQUIRE(fs::exists(d2 / name));
    CHECK(slurp(d1 / name) == slurp(d2 / name));
  }
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("rate fit lands in the last csv row when the schedule is long enough") {
  json doc = json{{"id", "eps-rate"},
                  {"op", "epsilon_n"},
                  {"distribution", "rademacher"},
                  {"test_function", "gauss_bump"},
                  {"n_schedule", json{{"start", 8}, {"factor", 2}, {"count", 3}}},
                  {"horizon", 1.0}};
  auto res = run_experiment(parse_config(doc));
  CHECK(res.ok);
  REQUIRE(res.rows.size() == 3);
  REQUIRE(res.fit.has_value());
  REQUIRE(res.rows[2].slope.has_value());
  CHECK(*res.rows[2].slope < -0.3);
  CHECK(!res.rows[0].slope.has_value());
  REQUIRE(res.rows[2].r2.has_value());
  CHECK(*res.rows[2].r2 > 0.9);

  std::string pts = points_csv_text(res);
  CHECK(pts.substr(0, pts.find('\n')) == "log_n,log_value");
  CHECK(std::count(pts.begin(), pts.end(), '\n') == 4);  // header + 3 points
}

TEST_CASE("cli: validate, config errors, experiment failures, clean smoke run") {
  auto dir = scratch_dir("cli");
  auto cfg_path = dir / "good.json";
  json good = json{
      {"experiments",
       json::array(
           {json{{"id", "smoke-eps"},
                 {"op", "epsilon_n"},
                 {"distribution", "rademacher"},
                 {"test_function",
                  json{{"name", "quadratic"}, {"c0", 0.0}, {"b", {0.0}}, {"Q", {{2.0}}}}},
                 {"n_schedule", json{{"start", 4}, {"factor", 4}, {"count", 1}}},
                 {"box", json{{"half_width", 2.0}, {"step", 0.25}}},
                 {"horizon", 1.0}}})}};
  write_file(cfg_path, good.dump(2));

  {
    std::string p = cfg_path.string();
    const char* argv[] = {"cltlab", "validate", "--config", p.c_str()};
    CHECK(run_main(4, argv) == kExitOk);
  }

  {
    auto missing = (dir / "nope.json").string();
    const char* argv[] = {"cltlab", "validate", "--config", missing.c_str()};
    CHECK(run_main(4, argv) == kExitConfigError);
  }

  {
    auto broken = dir / "broken.json";
    write_file(broken, "{\"experiments\": [ { ]}");
    std::string p = broken.string();
    const char* argv[] = {"cltlab", "validate", "--config", p.c_str()};
    CHECK(run_main(4, argv) == kExitConfigError);
  }

  {
    // infinite moment: the run completes, the experiment fails
    auto heavy = dir / "heavy.json";
    json doc = json{
        {"experiments",
         json::array({json{
             {"id", "heavy-tail"},
             {"op", "rate_cert"},
             {"distribution", json{{"name", "pareto_sym"}, {"alpha", 2.5}}},
             {"test_function", "gauss_bump"},
             {"n_schedule", json{{"start", 4}, {"factor", 4}, {"count", 2}}},
             {"gamma", 0.6},
             {"mc_samples", 2000}}})}};
    write_file(heavy, doc.dump(2));
    std::string p = heavy.string();
    std::string out = (dir / "heavy_out").string();
    const char* argv[] = {"cltlab", "run", "--config", p.c_str(), "--out", out.c_str()};
    CHECK(run_main(6, argv) == kExitExperimentFailure);
    std::string csv = slurp(fs::path(out) / "heavy-tail.csv");
    CHECK(csv.find("fail: infinite moment") != std::string::npos);
    CHECK(fs::exists(fs::path(out) / "run_report.json"));
  }

  {
    std::string p = cfg_path.string();
    std::string out = (dir / "ok_out").string();
    const char* argv[] = {"cltlab", "run", "--config", p.c_str(), "--out", out.c_str()};
    CHECK(run_main(6, argv) == kExitOk);
    CHECK(fs::exists(fs::path(out) / "smoke-eps.csv"));
    CHECK(fs::exists(fs::path(out) / "smoke-eps_report.json"));
    CHECK(fs::exists(fs::path(out) / "smoke-eps_points.csv"));
    CHECK(fs::exists(fs::path(out) / "run_report.json"));
    auto report = json::parse(slurp(fs::path(out) / "run_report.json"));
    CHECK(report.contains("generated_at"));
    CHECK(report.contains("config_hash"));
  }

  {
    // --seed overrides every experiment's seed
    json doc = good;
    doc["experiments"][0]["id"] = "seeded";
    doc["experiments"][0]["seed"] = 7;
    auto seeded = dir / "seeded.json";
    write_file(seeded, doc.dump(2));
    std::string p = seeded.string();
    std::string out = (dir / "seeded_out").string();
    const char* argv[] = {"cltlab", "run",   "--config", p.c_str(),
                          "--out",  out.c_str(), "--seed",   "123"};
    CHECK(run_main(8, argv) == kExitOk);
    auto report = json::parse(slurp(fs::path(out) / "seeded_report.json"));
    CHECK(report["config"]["seed"] == 123);
  }

  fs::remove_all(dir);
}

TEST_CASE("cli: multi-experiment run is reproducible byte for byte") {
  auto dir = scratch_dir("repro");
  json doc = json{
      {"experiments",
       json::array(
           {json{{"id", "gap-rad"},
                 {"op", "sup_gap"},
                 {"distribution", "rademacher"},
                 {"test_function", "gauss_bump"},
                 {"n_schedule", json{{"start", 4}, {"factor", 2}, {"count", 2}}},
                 {"horizon", 1.0}},
            json{{"id", "mc-rate"},
                 {"op", "rate_cert"},
                 {"distribution", "gaussian"},
                 {"test_function", "gauss_bump"},
                 {"n_schedule", json{{"start", 8}, {"factor", 2}, {"count", 2}}},
                 {"gamma", 1.0},
                 {"mc_samples", 20000},
                 {"seed", 5}}})}};
  auto cfg_path = dir / "doc.json";
  write_file(cfg_path, doc.dump(2));
  std::string p = cfg_path.string();
  std::string o1 = (dir / "r1").string(), o2 = (dir / "r2").string();

  const char* a1[] = {"cltlab", "run", "--config", p.c_str(), "--out", o1.c_str(),
                      "--jobs", "2"};
  const char* a2[] = {"cltlab", "run", "--config", p.c_str(), "--out", o2.c_str()};
  CHECK(run_main(8, a1) == kExitOk);
  CHECK(run_main(6, a2) == kExitOk);

  for (const char* name : {"gap-rad.csv", "gap-rad_points.csv", "gap-rad_report.json",
                           "mc-rate.csv", "mc-rate_points.csv", "mc-rate_report.json"}) {
    CAPTURE(name);
    REQUIRE(fs::exists(fs::path(o1) / name));
    CHECK(slurp(fs::path(o1) / name) == slurp(fs::path(o2) / name));
  }
  fs::remove_all(dir);
}
