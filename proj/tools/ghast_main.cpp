// Scenario runner for the GHAST consensus simulator.
//
//   ghast run <config> [--seed N] [--out-dir DIR]
//   ghast sweep <config> --axis <field> --values v1,v2,... [--out-dir DIR]
//   ghast risk <query-file> [--out FILE]
//
// GHAST_LOG=quiet|info|debug controls verbosity.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <sstream>

#include "ghast/scenario.hpp"

namespace {

std::vector<double> parse_values(const std::string& csv) {
  std::vector<double> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stod(tok));
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GHAST Tree-Graph consensus simulator"};
  app.require_subcommand(1);

  std::string config_path, out_dir, axis, values_csv, query_path, out_file;
  std::int64_t seed_override = -1;

  auto* run = app.add_subcommand("run", "run one scenario");
  run->add_option("config", config_path, "scenario config file")->required();
  run->add_option("--seed", seed_override, "override the seed");
  run->add_option("--out-dir", out_dir, "override the output directory");

  auto* sw = app.add_subcommand("sweep", "sweep one numeric config field");
  sw->add_option("config", config_path, "scenario config template")->required();
  sw->add_option("--axis", axis, "field to sweep")->required();
  sw->add_option("--values", values_csv, "comma-separated values")->required();
  sw->add_option("--out-dir", out_dir, "override the output directory");

  auto* rk = app.add_subcommand("risk", "evaluate confirmation-risk queries");
  rk->add_option("queries", query_path, "file with 'm n theta t beta eta_w' per line")
      ->required();
  rk->add_option("--out", out_file, "write results to a file instead of stdout");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      auto cfg = ghast::ScenarioConfig::parse_file(config_path);
      if (seed_override >= 0) cfg.sim.seed = static_cast<std::uint64_t>(seed_override);
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      auto res = ghast::run_scenario(cfg);
      return res.exit_code;
    }
    if (sw->parsed()) {
      auto cfg = ghast::ScenarioConfig::parse_file(config_path);
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      auto csv = ghast::sweep(cfg, axis, parse_values(values_csv));
      std::ofstream out(cfg.out_dir + "/sweep.csv", std::ios::binary);
      out << csv;
      std::cout << csv;
      return 0;
    }
    if (rk->parsed()) {
      std::ifstream in(query_path);
      if (!in) throw ghast::ConfigError("cannot open query file: " + query_path);
      std::stringstream ss;
      ss << in.rdbuf();
      auto result = ghast::run_risk_queries(ss.str());
      if (out_file.empty()) {
        std::cout << result;
      } else {
        std::ofstream out(out_file, std::ios::binary);
        out << result;
      }
      return 0;
    }
  } catch (const ghast::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
