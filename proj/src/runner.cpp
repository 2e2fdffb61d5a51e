#include "cltlab/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <CLI11.hpp>

#include "cltlab/distributions.hpp"
#include "cltlab/heatref.hpp"
#include "cltlab/testfn.hpp"

namespace cltlab::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string join_issues(const std::vector<std::string>& issues) {
  std::string s = "config error";
  for (const auto& i : issues) s += "\n  - " + i;
  return s;
}

const std::set<std::string> kOps = {"sup_gap", "epsilon_n", "doubling", "rate_cert", "audits"};

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt_opt(const std::optional<double>& v) { return v ? fmt(*v) : std::string(); }

json tail_json(const scheme::TailBound& t) {
  return json{{"half_width", t.half_width},
              {"walk_radius", t.walk_radius},
              {"bound", t.bound},
              {"grid_slack", t.grid_slack},
              {"method", t.method}};
}

json coords_json(const std::array<double, kMaxDim>& x, int d) {
  json a = json::array();
  for (int i = 0; i < d; ++i) a.push_back(x[static_cast<std::size_t>(i)]);
  return a;
}

// component form: either "name" or {"name": ..., <params>...}
bool parse_component(const json& node, const char* what, std::string& name, json& params,
                     std::vector<std::string>& issues, const std::string& where) {
  params = json::object();
  if (node.is_string()) {
    name = node.get<std::string>();
    return true;
  }
  if (node.is_object()) {
    if (!node.contains("name") || !node["name"].is_string()) {
      issues.push_back(where + ": " + what + " object needs a string \"name\"");
      return false;
    }
    name = node["name"].get<std::string>();
    params = node;
    params.erase("name");
    return true;
  }
  issues.push_back(where + ": " + what + " must be a string or an object");
  return false;
}

std::optional<ExperimentConfig> parse_one(const json& e, std::size_t index,
                                          std::vector<std::string>& issues) {
  const std::string where = "experiments[" + std::to_string(index) + "]";
  if (!e.is_object()) {
    issues.push_back(where + ": must be an object");
    return std::nullopt;
  }

  static const std::set<std::string> kKeys = {"id",     "op",        "distribution",
                                              "test_function", "n_schedule", "gamma",
                                              "box",    "seed",      "mc_samples",
                                              "horizon", "degenerate_tol"};
  for (auto it = e.begin(); it != e.end(); ++it)
    if (!kKeys.count(it.key())) issues.push_back(where + ": unknown key \"" + it.key() + "\"");

  ExperimentConfig cfg;
  const std::size_t before = issues.size();

  if (e.contains("id") && e["id"].is_string() && !e["id"].get<std::string>().empty())
    cfg.id = e["id"].get<std::string>();
  else
    issues.push_back(where + ": \"id\" must be a non-empty string");

  if (e.contains("op") && e["op"].is_string() && kOps.count(e["op"].get<std::string>())) {
    cfg.op = e["op"].get<std::string>();
  } else {
    std::string got = e.contains("op") && e["op"].is_string()
                          ? " (got \"" + e["op"].get<std::string>() + "\")"
                          : "";
    issues.push_back(where +
                     ": \"op\" must be one of sup_gap, epsilon_n, doubling, rate_cert, audits" +
                     got);
  }

  if (e.contains("distribution"))
    parse_component(e["distribution"], "distribution", cfg.dist_name, cfg.dist_params, issues,
                    where);
  else
    issues.push_back(where + ": missing \"distribution\"");

  if (e.contains("test_function"))
    parse_component(e["test_function"], "test_function", cfg.fn_name, cfg.fn_params, issues,
                    where);
  else
    issues.push_back(where + ": missing \"test_function\"");

  if (e.contains("n_schedule") && e["n_schedule"].is_object()) {
    const json& s = e["n_schedule"];
    std::int64_t start = 0, factor = 0, count = 0;
    bool ok = true;
    for (const char* k : {"start", "factor", "count"})
      if (!s.contains(k) || !s[k].is_number_integer()) {
        issues.push_back(where + ": n_schedule needs integer \"" + k + "\"");
        ok = false;
      }
    for (auto it = s.begin(); it != s.end(); ++it)
      if (std::string(it.key()) != "start" && it.key() != "factor" && it.key() != "count")
        issues.push_back(where + ": n_schedule: unknown key \"" + it.key() + "\"");
    if (ok) {
      start = s["start"].get<std::int64_t>();
      factor = s["factor"].get<std::int64_t>();
      count = s["count"].get<std::int64_t>();
      if (start < 1) issues.push_back(where + ": n_schedule.start must be >= 1");
      if (factor < 2)
        issues.push_back(where + ": n_schedule.factor must be >= 2 (strictly increasing)");
      if (count < 1) issues.push_back(where + ": n_schedule.count must be >= 1");
      if (start >= 1 && factor >= 2 && count >= 1) {
        std::int64_t v = start;
        for (std::int64_t i = 0; i < count; ++i) {
          if (v > (std::int64_t{1} << 30)) {
            issues.push_back(where + ": n_schedule overflows (n > 2^30)");
            break;
          }
          cfg.n_schedule.push_back(static_cast<int>(v));
          v *= factor;
        }
      }
    }
  } else {
    issues.push_back(where + ": \"n_schedule\" must be an object {start, factor, count}");
  }

  if (e.contains("gamma")) {
    if (e["gamma"].is_number() && e["gamma"].get<double>() > 0.0 &&
        e["gamma"].get<double>() <= 1.0)
      cfg.gamma = e["gamma"].get<double>();
    else
      issues.push_back(where + ": gamma must lie in (0,1]");
  }

  if (e.contains("box")) {
    const json& b = e["box"];
    if (b.is_object() && b.contains("half_width") && b["half_width"].is_number() &&
        b["half_width"].get<double>() > 0.0) {
      scheme::BoxSpec box;
      box.half_width = b["half_width"].get<double>();
      if (b.contains("step")) {
        if (b["step"].is_number() && b["step"].get<double>() > 0.0)
          box.step = b["step"].get<double>();
        else
          issues.push_back(where + ": box.step must be a positive number");
      }
      for (auto it = b.begin(); it != b.end(); ++it)
        if (std::string(it.key()) != "half_width" && it.key() != "step")
          issues.push_back(where + ": box: unknown key \"" + it.key() + "\"");
      cfg.box = box;
    } else {
      issues.push_back(where + ": box must be {half_width > 0 [, step > 0]}");
    }
  }

  if (e.contains("seed")) {
    if (e["seed"].is_number_unsigned() || (e["seed"].is_number_integer() &&
                                           e["seed"].get<std::int64_t>() >= 0))
      cfg.seed = e["seed"].get<std::uint64_t>();
    else
      issues.push_back(where + ": seed must be a non-negative integer");
  }

  if (e.contains("mc_samples")) {
    if (e["mc_samples"].is_number_integer() && e["mc_samples"].get<std::int64_t>() >= 0)
      cfg.mc_samples = e["mc_samples"].get<std::int64_t>();
    else
      issues.push_back(where + ": mc_samples must be a non-negative integer");
  }

  if (e.contains("horizon")) {
    if (e["horizon"].is_number() && e["horizon"].get<double>() > 0.0)
      cfg.horizon = e["horizon"].get<double>();
    else
      issues.push_back(where + ": horizon must be a positive number");
  }

  if (e.contains("degenerate_tol")) {
    if (e["degenerate_tol"].is_number() && e["degenerate_tol"].get<double>() >= 0.0)
      cfg.degenerate_tol = e["degenerate_tol"].get<double>();
    else
      issues.push_back(where + ": degenerate_tol must be a non-negative number");
  }

  if (issues.size() != before) return std::nullopt;

  // construction probe: the factories enforce their own parameter contracts
  try {
    auto dist = distributions::make_step_distribution(cfg.dist_name, cfg.dist_params);
    auto f = testfn::make_test_function(cfg.fn_name, cfg.fn_params);
    if (f->dim() != dist.dim())
      issues.push_back(where + ": test function dimension " + std::to_string(f->dim()) +
                       " != distribution dimension " + std::to_string(dist.dim()));
  } catch (const std::exception& ex) {
    issues.push_back(where + ": " + ex.what());
  }
  if (issues.size() != before) return std::nullopt;
  return cfg;
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> issues)
    : std::runtime_error(join_issues(issues)), issues_(std::move(issues)) {}

ExperimentConfig parse_config(const nlohmann::json& doc) {
  std::vector<std::string> issues;
  auto cfg = parse_one(doc, 0, issues);
  if (!issues.empty()) throw ConfigError(std::move(issues));
  return *cfg;
}

std::vector<ExperimentConfig> parse_experiments(const nlohmann::json& doc) {
  std::vector<std::string> issues;
  std::vector<ExperimentConfig> out;
  if (!doc.is_object()) {
    issues.push_back("top level: must be a JSON object");
    throw ConfigError(std::move(issues));
  }
  for (auto it = doc.begin(); it != doc.end(); ++it)
    if (std::string(it.key()) != "experiments")
      issues.push_back("top level: unknown key \"" + it.key() + "\"");
  if (!doc.contains("experiments") || !doc["experiments"].is_array() ||
      doc["experiments"].empty()) {
    issues.push_back("top level: \"experiments\" must be a non-empty array");
    throw ConfigError(std::move(issues));
  }

  const json& arr = doc["experiments"];
  std::map<std::string, std::size_t> first_seen;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    auto cfg = parse_one(arr[i], i, issues);
    if (!cfg) continue;
    auto [it, inserted] = first_seen.emplace(cfg->id, i);
    if (!inserted)
      issues.push_back("duplicate id \"" + cfg->id + "\" at experiments[" +
                       std::to_string(it->second) + "] and experiments[" + std::to_string(i) +
                       "]");
    else
      out.push_back(std::move(*cfg));
  }
  if (!issues.empty()) throw ConfigError(std::move(issues));
  return out;
}

json canonical_config(const ExperimentConfig& cfg) {
  json box = nullptr;
  if (cfg.box) box = json{{"half_width", cfg.box->half_width}, {"step", cfg.box->step}};
  return json{{"id", cfg.id},
              {"op", cfg.op},
              {"distribution", json{{"name", cfg.dist_name}, {"params", cfg.dist_params}}},
              {"test_function", json{{"name", cfg.fn_name}, {"params", cfg.fn_params}}},
              {"n_schedule", cfg.n_schedule},
              {"gamma", cfg.gamma},
              {"box", box},
              {"seed", cfg.seed},
              {"mc_samples", cfg.mc_samples},
              {"horizon", cfg.horizon},
              {"degenerate_tol", cfg.degenerate_tol}};
}

json canonical_document(const std::vector<ExperimentConfig>& cfgs) {
  json arr = json::array();
  for (const auto& c : cfgs) arr.push_back(canonical_config(c));
  return json{{"experiments", arr}};
}

namespace {
std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}
std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}
}  // namespace

std::uint64_t config_hash(const ExperimentConfig& cfg) { return fnv1a(canonical_config(cfg).dump()); }

std::uint64_t document_hash(const std::vector<ExperimentConfig>& cfgs) {
  return fnv1a(canonical_document(cfgs).dump());
}

// ---------------------------------------------------------------------------

namespace {

// one of: pass | fail[: reason] | vacuous | degenerate
bool status_ok(const std::string& s) {
  return s == "pass" || s == "degenerate" || s == "vacuous";
}

struct OpContext {
  distributions::StepDistribution dist;
  testfn::TestFunctionPtr f;
  std::shared_ptr<heat::HeatReference> ref;
};

void run_sup_gap(const ExperimentConfig& cfg, OpContext& ctx, RunResult& res, int jobs) {
  json rows = json::array();
  for (int n : cfg.n_schedule) {
    ResultRow row;
    row.experiment_id = cfg.id;
    row.n = n;
    try {
      verify::GapReport g = verify::sup_gap(ctx.f, ctx.dist, n, *ctx.ref, cfg.horizon, cfg.box,
                                            cfg.mc_samples, cfg.seed, jobs);
      row.gap_sup = g.sup_gap;
      row.sigma_n = g.sigma_n;
      row.sigma_tilde_n = g.sigma_tilde_n;
      row.status = "pass";
      verify::RatePoint pt;
      pt.n = n;
      pt.value = g.sup_gap;
      if (g.monte_carlo) pt.stderr_ = g.max_stderr;
      res.rate_points.push_back(pt);
      rows.push_back(json{{"n", n},
                          {"sup_gap", g.sup_gap},
                          {"sigma_n", g.sigma_n},
                          {"sigma_tilde_n", g.sigma_tilde_n},
                          {"argmax_k", g.argmax_k},
                          {"argmax_x", coords_json(g.argmax_x, ctx.dist.dim())},
                          {"gap_origin_t1", g.gap_origin_t1},
                          {"pc_correction", g.pc_correction},
                          {"monte_carlo", g.monte_carlo},
                          {"max_stderr", g.max_stderr},
                          {"mc_samples", g.mc_samples},
                          {"tail", tail_json(g.tail)},
                          {"status", row.status}});
    } catch (const std::exception& ex) {
      row.status = std::string("fail: ") + ex.what();
      rows.push_back(json{{"n", n}, {"status", row.status}});
    }
    res.rows.push_back(row);
  }
  res.report["rows"] = rows;
}

void run_epsilon(const ExperimentConfig& cfg, OpContext& ctx, RunResult& res, int jobs) {
  json rows = json::array();
  for (int n : cfg.n_schedule) {
    ResultRow row;
    row.experiment_id = cfg.id;
    row.n = n;
    try {
      verify::ConsistencyResult c =
          verify::epsilon_n(ctx.f, ctx.dist, n, cfg.horizon, cfg.box, jobs);
      row.epsilon_n = c.epsilon;
      row.status = "pass";
      verify::RatePoint pt;
      pt.n = n;
      pt.value = c.epsilon;
      res.rate_points.push_back(pt);
      rows.push_back(json{{"n", n},
                          {"epsilon_n", c.epsilon},
                          {"argmax_k", c.argmax_k},
                          {"argmax_x", coords_json(c.argmax_x, ctx.dist.dim())},
                          {"tail", tail_json(c.tail)},
                          {"status", row.status}});
    } catch (const std::exception& ex) {
      row.status = std::string("fail: ") + ex.what();
      rows.push_back(json{{"n", n}, {"status", row.status}});
    }
    res.rows.push_back(row);
  }
  res.report["rows"] = rows;
}

void run_doubling(const ExperimentConfig& cfg, OpContext& ctx, RunResult& res, int jobs) {
  json rows = json::array();
  for (int n : cfg.n_schedule) {
    ResultRow row;
    row.experiment_id = cfg.id;
    row.n = n;
    try {
      verify::DoublingReport d = verify::doubling_explore(ctx.f, ctx.dist, n, *ctx.ref, cfg.box,
                                                          cfg.degenerate_tol, jobs);
      row.sigma_n = d.sigma_n;
      row.sigma_tilde_n = d.sigma_tilde_n;
      row.c_n = d.c_n;
      row.big_c_n = d.big_c_n;
      if (d.degenerate) {
        row.status = "degenerate";
      } else {
        row.time_split = d.time_split;
        row.status = d.sup_phi_exceeds_half_sigma ? "pass" : "fail: sup phi <= sigma_n / 2";
        verify::RatePoint pt;
        pt.n = n;
        pt.value = d.time_split;
        res.rate_points.push_back(pt);
      }
      rows.push_back(json{{"n", n},
                          {"sigma_n", d.sigma_n},
                          {"sigma_tilde_n", d.sigma_tilde_n},
                          {"degenerate", d.degenerate},
                          {"c_n", d.c_n},
                          {"C_n", d.big_c_n},
                          {"sup_phi", d.sup_phi},
                          {"x0", coords_json(d.x0, ctx.dist.dim())},
                          {"k0", d.k0},
                          {"s0", d.s0},
                          {"time_split", d.time_split},
                          {"case", d.case_label},
                          {"x0_interior", d.x0_interior},
                          {"sup_phi_exceeds_half_sigma", d.sup_phi_exceeds_half_sigma},
                          {"residual_s", d.residual_s},
                          {"residual_k", d.residual_k},
                          {"residual_k_defined", d.residual_k_defined},
                          {"hess_trace_scheme", d.hess_trace_scheme},
                          {"hess_trace_heat", d.hess_trace_heat},
                          {"tail", tail_json(d.tail)},
                          {"status", row.status}});
    } catch (const std::exception& ex) {
      row.status = std::string("fail: ") + ex.what();
      rows.push_back(json{{"n", n}, {"status", row.status}});
    }
    res.rows.push_back(row);
  }
  res.report["rows"] = rows;
}

void run_rate_cert(const ExperimentConfig& cfg, OpContext& ctx, RunResult& res, int jobs) {
  try {
    verify::RateCertReport r = verify::rate_certificate(ctx.f, ctx.dist, *ctx.ref, cfg.n_schedule,
                                                        cfg.gamma, cfg.mc_samples, cfg.seed, jobs);
    json rows = json::array();
    const std::string status = r.bounded ? "pass" : "fail: " + r.verdict;
    for (const auto& rr : r.rows) {
      ResultRow row;
      row.experiment_id = cfg.id;
      row.n = rr.n;
      row.gap_sup = rr.gap;
      row.status = status;
      res.rows.push_back(row);
      verify::RatePoint pt;
      pt.n = rr.n;
      pt.value = rr.gap;
      if (r.monte_carlo) pt.stderr_ = rr.stderr_;
      res.rate_points.push_back(pt);
      rows.push_back(json{{"n", rr.n},
                          {"gap", rr.gap},
                          {"stderr", rr.stderr_},
                          {"constant", rr.constant}});
    }
    res.report["rows"] = rows;
    res.report["gamma"] = r.gamma;
    res.report["moment"] = r.moment;
    res.report["monte_carlo"] = r.monte_carlo;
    res.report["bounded"] = r.bounded;
    res.report["verdict"] = r.verdict;
  } catch (const std::exception& ex) {
    std::string what = ex.what();
    std::string reason = what.find("diverges") != std::string::npos ? "infinite moment" : what;
    for (int n : cfg.n_schedule) {
      ResultRow row;
      row.experiment_id = cfg.id;
      row.n = n;
      row.status = "fail: " + reason;
      res.rows.push_back(row);
    }
    res.report["rows"] = json::array();
    res.report["error"] = what;
  }
}

void run_audits(const ExperimentConfig& cfg, OpContext& ctx, RunResult& res, int jobs) {
  json rows = json::array();
  for (int n : cfg.n_schedule) {
    ResultRow row;
    row.experiment_id = cfg.id;
    row.n = n;
    try {
      distributions::StepDistribution y =
          ctx.dist.scaled(1.0 / std::sqrt(static_cast<double>(n)));
      verify::OneStepBound one = verify::one_step_bound_check(*ctx.f, y, cfg.box);

      scheme::LatticeField field =
          scheme::build_field(ctx.f, ctx.dist, n, cfg.horizon, cfg.box, 2, jobs);
      verify::RegularityAudit reg = verify::regularity_audit(field, *ctx.ref);

      const bool all_vacuous = one.vacuous && reg.value_step.vacuous &&
                               reg.hess_trace_step.vacuous && reg.heat_time.vacuous;
      if (all_vacuous)
        row.status = "vacuous";
      else if (one.pass && reg.pass)
        row.status = "pass";
      else
        row.status = "fail: bound ratio exceeded";

      auto item_json = [](const verify::RegularityAudit::Item& it) {
        return json{{"ratio", it.ratio},
                    {"lhs_sup", it.lhs_sup},
                    {"rhs", it.rhs},
                    {"vacuous", it.vacuous}};
      };
      rows.push_back(json{{"n", n},
                          {"one_step",
                           json{{"lhs_sup", one.lhs_sup},
                                {"rhs", one.rhs},
                                {"vacuous", one.vacuous},
                                {"pass", one.pass},
                                {"argmax", coords_json(one.argmax, ctx.dist.dim())}}},
                          {"value_step", item_json(reg.value_step)},
                          {"hess_trace_step", item_json(reg.hess_trace_step)},
                          {"heat_time", item_json(reg.heat_time)},
                          {"tail", tail_json(field.tail)},
                          {"status", row.status}});
    } catch (const std::exception& ex) {
      row.status = std::string("fail: ") + ex.what();
      rows.push_back(json{{"n", n}, {"status", row.status}});
    }
    res.rows.push_back(row);
  }
  res.report["rows"] = rows;
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& cfg, int jobs) {
  RunResult res;
  res.cfg = cfg;
  res.report = json{{"id", cfg.id},
                    {"op", cfg.op},
                    {"config", canonical_config(cfg)},
                    {"config_hash", hex64(config_hash(cfg))}};

  OpContext ctx{distributions::make_step_distribution(cfg.dist_name, cfg.dist_params),
                testfn::make_test_function(cfg.fn_name, cfg.fn_params), nullptr};
  ctx.ref = std::make_shared<heat::HeatReference>(ctx.f, ctx.dist.covariance());

  if (cfg.op == "sup_gap")
    run_sup_gap(cfg, ctx, res, jobs);
  else if (cfg.op == "epsilon_n")
    run_epsilon(cfg, ctx, res, jobs);
  else if (cfg.op == "doubling")
    run_doubling(cfg, ctx, res, jobs);
  else if (cfg.op == "rate_cert")
    run_rate_cert(cfg, ctx, res, jobs);
  else if (cfg.op == "audits")
    run_audits(cfg, ctx, res, jobs);
  else
    throw std::invalid_argument("run_experiment: unknown op " + cfg.op);

  // least-squares rate fit when at least 3 clean points exist
  if (res.rate_points.size() >= 3) {
    try {
      res.fit = verify::fit_rate(res.rate_points);
      if (!res.rows.empty()) {
        res.rows.back().slope = res.fit->slope;
        res.rows.back().r2 = res.fit->r2;
      }
      res.report["fit"] = json{{"slope", res.fit->slope},
                               {"intercept", res.fit->intercept},
                               {"r2", res.fit->r2},
                               {"points_used", res.fit->points_used},
                               {"points_dropped", res.fit->points_dropped}};
    } catch (const std::exception&) {
      // all points degenerate (e.g. exact zeros): no fit
    }
  }

  res.ok = true;
  bool all_degenerate = !res.rows.empty(), all_vacuous = !res.rows.empty();
  for (const auto& r : res.rows) {
    if (!status_ok(r.status)) {
      res.ok = false;
      res.status = r.status;
      break;
    }
    all_degenerate = all_degenerate && r.status == "degenerate";
    all_vacuous = all_vacuous && r.status == "vacuous";
  }
  if (res.ok) res.status = all_degenerate ? "degenerate" : all_vacuous ? "vacuous" : "pass";
  res.report["status"] = res.status;
  return res;
}

// ---------------------------------------------------------------------------

std::string csv_text(const RunResult& res) {
  std::string out =
      "experiment_id,n,gap_sup,sigma_n,sigma_tilde_n,epsilon_n,c_n,C_n,"
      "k0_over_n_minus_s0,slope,r2,status\n";
  for (const auto& r : res.rows) {
    out += r.experiment_id + ',' + std::to_string(r.n) + ',' + fmt_opt(r.gap_sup) + ',' +
           fmt_opt(r.sigma_n) + ',' + fmt_opt(r.sigma_tilde_n) + ',' + fmt_opt(r.epsilon_n) +
           ',' + fmt_opt(r.c_n) + ',' + fmt_opt(r.big_c_n) + ',' + fmt_opt(r.time_split) + ',' +
           fmt_opt(r.slope) + ',' + fmt_opt(r.r2) + ',' + r.status + '\n';
  }
  return out;
}

std::string points_csv_text(const RunResult& res) {
  std::string out = "log_n,log_value\n";
  for (const auto& p : res.rate_points) {
    if (!(p.value > 0.0)) continue;
    out += fmt(std::log(p.n)) + ',' + fmt(std::log(p.value)) + '\n';
  }
  return out;
}

namespace {
void atomic_write(const fs::path& target, const std::string& text) {
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream o(tmp, std::ios::binary | std::ios::trunc);
    o << text;
    if (!o) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, target);
}
}  // namespace

void write_outputs(const RunResult& res, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const fs::path dir(out_dir);
  atomic_write(dir / (res.cfg.id + ".csv"), csv_text(res));
  atomic_write(dir / (res.cfg.id + "_report.json"), res.report.dump(2) + "\n");
  atomic_write(dir / (res.cfg.id + "_points.csv"), points_csv_text(res));
}

// ---------------------------------------------------------------------------

namespace {

std::pair<int, int> line_column(const std::string& text, std::size_t byte) {
  int line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return {line, col};
}

std::string iso8601_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t tt = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json load_config_or_exit(const std::string& path, int& code) {
  code = kExitOk;
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    std::fprintf(stderr, "cannot open config: %s\n", path.c_str());
    code = kExitConfigError;
    return {};
  }
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  try {
    return json::parse(text);
  } catch (const json::parse_error& ex) {
    auto [line, col] = line_column(text, ex.byte > 0 ? ex.byte - 1 : 0);
    std::fprintf(stderr, "config parse error at line %d, column %d: %s\n", line, col, ex.what());
    code = kExitConfigError;
    return {};
  }
}

}  // namespace

int run_main(int argc, const char* const* argv) {
  CLI::App app{"random-walk heat-scheme laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_dir;
  int jobs = 1;
  std::uint64_t seed_override = 0;
  bool have_seed = false;

  CLI::App* run = app.add_subcommand("run", "execute every experiment in a config");
  run->add_option("--config", config_path, "JSON experiment config")->required();
  run->add_option("--out", out_dir, "output directory")->required();
  run->add_option("--jobs", jobs, "worker threads")->check(CLI::PositiveNumber);
  CLI::Option* seed_opt =
      run->add_option("--seed", seed_override, "override every per-experiment seed");

  CLI::App* validate = app.add_subcommand("validate", "check a config and exit");
  validate->add_option("--config", config_path, "JSON experiment config")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfigError;
  }

  int code = kExitOk;
  json doc = load_config_or_exit(config_path, code);
  if (code != kExitOk) return code;

  std::vector<ExperimentConfig> cfgs;
  try {
    cfgs = parse_experiments(doc);
  } catch (const ConfigError& ex) {
    for (const auto& issue : ex.issues()) std::fprintf(stderr, "config: %s\n", issue.c_str());
    return kExitConfigError;
  }

  if (validate->parsed()) {
    std::printf("config ok: %zu experiment(s)\n", cfgs.size());
    return kExitOk;
  }

  have_seed = seed_opt->count() > 0;
  if (have_seed)
    for (auto& c : cfgs) c.seed = seed_override;

  const auto t0 = std::chrono::steady_clock::now();
  std::vector<RunResult> results(cfgs.size());
  std::vector<std::string> errors(cfgs.size());

  const int pool = std::max(1, std::min<int>(jobs, static_cast<int>(cfgs.size())));
  const int inner_jobs = cfgs.size() == 1 ? jobs : 1;
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= cfgs.size()) return;
      try {
        results[i] = run_experiment(cfgs[i], inner_jobs);
      } catch (const std::exception& ex) {
        errors[i] = ex.what();  // isolated: other experiments keep running
      }
    }
  };
  if (pool == 1) {
    worker();
  } else {
    std::vector<std::thread> ts;
    for (int i = 0; i < pool; ++i) ts.emplace_back(worker);
    for (auto& t : ts) t.join();
  }

  json report_experiments = json::array();
  bool all_ok = true;
  for (std::size_t i = 0; i < cfgs.size(); ++i) {
    std::string status;
    json artifacts = json::array();
    if (!errors[i].empty()) {
      status = "fail: " + errors[i];
      all_ok = false;
    } else {
      try {
        write_outputs(results[i], out_dir);
        artifacts.push_back((fs::path(out_dir) / (cfgs[i].id + ".csv")).string());
        artifacts.push_back((fs::path(out_dir) / (cfgs[i].id + "_report.json")).string());
        artifacts.push_back((fs::path(out_dir) / (cfgs[i].id + "_points.csv")).string());
      } catch (const std::exception& ex) {
        errors[i] = ex.what();
      }
      if (!errors[i].empty()) {
        status = "fail: " + errors[i];
        all_ok = false;
      } else {
        status = results[i].status;
        if (!results[i].ok) all_ok = false;
      }
    }
    report_experiments.push_back(
        json{{"id", cfgs[i].id}, {"status", status}, {"artifacts", artifacts}});
    std::printf("%s: %s\n", cfgs[i].id.c_str(), status.c_str());
  }

  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  json run_report = json{{"config_hash", hex64(document_hash(cfgs))},
                         {"generated_at", iso8601_now()},
                         {"wall_clock_seconds", wall},
                         {"experiments", report_experiments}};
  try {
    fs::create_directories(out_dir);
    atomic_write(fs::path(out_dir) / "run_report.json", run_report.dump(2) + "\n");
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "cannot write run report: %s\n", ex.what());
    return kExitExperimentFailure;
  }
  return all_ok ? kExitOk : kExitExperimentFailure;
}

}  // namespace cltlab::cli
