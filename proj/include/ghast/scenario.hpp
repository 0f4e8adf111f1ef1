#pragma once

#include <string>
#include <vector>

#include "ghast/sim.hpp"

namespace ghast {

// Flat key=value scenario file with [section] headers; see README for the
// full key list. Unknown keys and malformed lines fail with a line number.
struct ScenarioConfig {
  SimConfig sim;
  std::string out_dir = "out";
  bool write_snapshot = false;
  bool s_m_set = false;  // analysis thresholds default to 1.5/3 * lambda
  bool s_h_set = false;

  static ScenarioConfig parse_text(const std::string& text, const std::string& name = "<config>");
  static ScenarioConfig parse_file(const std::string& path);
  std::string serialize() const;
};

struct ScenarioResult {
  MetricsRecord metrics;
  std::uint64_t oracle_violations = 0;
  std::uint64_t oracle_events = 0;
  int exit_code = 0;  // nonzero when the oracle observed a violation
  std::string events_path, metrics_csv_path, metrics_json_path, oracle_report_path;
};

// Runs one scenario and writes the artifact files under cfg.out_dir.
ScenarioResult run_scenario(const ScenarioConfig& cfg);

// Parameter sweep: one run per value with seeds derived as seed + index,
// executed in parallel, aggregated into a CSV (one row per value).
std::string sweep(const ScenarioConfig& templ, const std::string& axis,
                  const std::vector<double>& values);

// Standalone risk-query mode: each line is "m n theta t beta eta_w"; returns
// one risk per line.
std::string run_risk_queries(const std::string& text);

}  // namespace ghast
