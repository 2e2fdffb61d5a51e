#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cltlab/lattice_scheme.hpp"
#include "cltlab/verifier.hpp"

namespace cltlab::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitExperimentFailure = 1;
inline constexpr int kExitConfigError = 2;

// All schema violations for one config document, collected before rejecting.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(std::vector<std::string> issues);
  const std::vector<std::string>& issues() const { return issues_; }

 private:
  std::vector<std::string> issues_;
};

struct ExperimentConfig {
  std::string id;
  std::string op;  // sup_gap | epsilon_n | doubling | rate_cert | audits
  std::string dist_name;
  nlohmann::json dist_params;  // object
  std::string fn_name;
  nlohmann::json fn_params;  // object
  std::vector<int> n_schedule;
  double gamma = 1.0;
  std::optional<scheme::BoxSpec> box;
  std::uint64_t seed = 1;
  std::int64_t mc_samples = 0;
  double horizon = 2.0;
  double degenerate_tol = 1e-9;  // doubling: sigma_n at or below this is "degenerate"
};

// Single experiment object / whole config document ({"experiments": [...]}).
// Both collect every violation before throwing ConfigError.
ExperimentConfig parse_config(const nlohmann::json& doc);
std::vector<ExperimentConfig> parse_experiments(const nlohmann::json& doc);

nlohmann::json canonical_config(const ExperimentConfig& cfg);
nlohmann::json canonical_document(const std::vector<ExperimentConfig>& cfgs);
std::uint64_t config_hash(const ExperimentConfig& cfg);  // FNV-1a of the canonical form
std::uint64_t document_hash(const std::vector<ExperimentConfig>& cfgs);

// One CSV row per n. Missing columns print empty.
struct ResultRow {
  std::string experiment_id;
  int n = 0;
  std::optional<double> gap_sup;
  std::optional<double> sigma_n;
  std::optional<double> sigma_tilde_n;
  std::optional<double> epsilon_n;
  std::optional<double> c_n;
  std::optional<double> big_c_n;
  std::optional<double> time_split;  // |k0/n - s0|
  std::optional<double> slope;
  std::optional<double> r2;
  std::string status = "ok";
};

struct RunResult {
  ExperimentConfig cfg;
  std::vector<ResultRow> rows;
  std::vector<verify::RatePoint> rate_points;  // data behind the fit
  std::optional<verify::RateFit> fit;
  nlohmann::json report;  // structured per-n detail
  bool ok = false;
  std::string status;  // pass | degenerate | vacuous | fail: <reason>
};

RunResult run_experiment(const ExperimentConfig& cfg, int jobs = 1);

// Writes <id>.csv, <id>_report.json and <id>_points.csv (log n, log value)
// into out_dir, atomically (temp file + rename). Numeric formatting is
// locale-independent and reproducible for identical inputs; the report's
// "generated_at" field is the only run-dependent value.
void write_outputs(const RunResult& res, const std::string& out_dir);

std::string csv_text(const RunResult& res);
std::string points_csv_text(const RunResult& res);

// `run --config <path> --out <dir> [--jobs N] [--seed S]` and
// `validate --config <path>`. Returns a process exit code.
int run_main(int argc, const char* const* argv);

}  // namespace cltlab::cli
