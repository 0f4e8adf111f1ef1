#include "ghast/scenario.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>

#include "ghast/oracle.hpp"
#include "ghast/risk.hpp"

namespace ghast {

namespace {

std::string trim(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

[[noreturn]] void fail(const std::string& name, int line, const std::string& msg) {
  throw ConfigError(name + ":" + std::to_string(line) + ": " + msg);
}

bool parse_bool(const std::string& v, const std::string& name, int line) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  fail(name, line, "expected on/off, got '" + v + "'");
}

double parse_num(const std::string& v, const std::string& name, int line) {
  try {
    std::size_t used = 0;
    double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    fail(name, line, "expected a number, got '" + v + "'");
  }
}

}  // namespace

ScenarioConfig ScenarioConfig::parse_text(const std::string& text, const std::string& name) {
  ScenarioConfig cfg;
  std::istringstream is(text);
  std::string line;
  std::string section;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[') {
      if (t.back() != ']') fail(name, line_no, "unterminated section header");
      section = t.substr(1, t.size() - 2);
      if (section != "sim" && section != "protocol" && section != "confirmation" &&
          section != "output")
        fail(name, line_no, "unknown section '" + section + "'");
      continue;
    }
    auto eq = t.find('=');
    if (eq == std::string::npos) fail(name, line_no, "expected key = value");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    if (value.empty()) continue;  // explicit default
    auto num = [&] { return parse_num(value, name, line_no); };

    if (section == "sim") {
      if (key == "nodes") cfg.sim.nodes = static_cast<std::uint32_t>(num());
      else if (key == "beta") cfg.sim.beta = num();
      else if (key == "delay") cfg.sim.delay = static_cast<std::uint32_t>(num());
      else if (key == "horizon") cfg.sim.horizon = static_cast<std::int64_t>(num());
      else if (key == "seed") cfg.sim.seed = static_cast<std::uint64_t>(num());
      else if (key == "adversary") {
        if (value == "null") cfg.sim.adversary = AdversaryKind::none;
        else if (value == "withhold") cfg.sim.adversary = AdversaryKind::withhold;
        else if (value == "balance") cfg.sim.adversary = AdversaryKind::balance;
        else fail(name, line_no, "unknown adversary '" + value + "'");
      } else if (key == "oracle") cfg.sim.oracle_enabled = parse_bool(value, name, line_no);
      else fail(name, line_no, "unknown key '" + key + "' in [sim]");
    } else if (section == "protocol") {
      if (key == "mode") {
        if (value == "ghast") cfg.sim.proto.mode = ProtocolMode::ghast;
        else if (value == "plain_ghost") cfg.sim.proto.mode = ProtocolMode::plain_ghost;
        else if (value == "nakamoto_ref") cfg.sim.proto.mode = ProtocolMode::nakamoto_ref;
        else fail(name, line_no, "unknown mode '" + value + "'");
      } else if (key == "eta_d") cfg.sim.proto.eta_d = num();
      else if (key == "eta_w") cfg.sim.proto.eta_w = static_cast<std::uint64_t>(num());
      else if (key == "eta_a") cfg.sim.proto.eta_a = static_cast<std::uint64_t>(num());
      else if (key == "eta_t") cfg.sim.proto.eta_t = static_cast<std::uint64_t>(num());
      else if (key == "eta_b") cfg.sim.proto.eta_b = static_cast<std::uint64_t>(num());
      else if (key == "s_m") {
        cfg.sim.proto.s_m = num();
        cfg.s_m_set = true;
      } else if (key == "s_h") {
        cfg.sim.proto.s_h = num();
        cfg.s_h_set = true;
      } else fail(name, line_no, "unknown key '" + key + "' in [protocol]");
    } else if (section == "confirmation") {
      if (key == "enabled") cfg.sim.confirm_enabled = parse_bool(value, name, line_no);
      else if (key == "target_risk") cfg.sim.confirm.target_risk = num();
      else if (key == "beta") cfg.sim.confirm.beta = num();
      else if (key == "t_gap") cfg.sim.confirm.t_gap = static_cast<std::int64_t>(num());
      else if (key == "theta_gap") cfg.sim.confirm.theta_gap = static_cast<std::int64_t>(num());
      else if (key == "z_gap") cfg.sim.confirm.z_gap = static_cast<std::int64_t>(num());
      else if (key == "slice_size") cfg.sim.confirm.slice_size = static_cast<std::int64_t>(num());
      else fail(name, line_no, "unknown key '" + key + "' in [confirmation]");
    } else if (section == "output") {
      if (key == "dir") cfg.out_dir = value;
      else if (key == "snapshot") cfg.write_snapshot = parse_bool(value, name, line_no);
      else fail(name, line_no, "unknown key '" + key + "' in [output]");
    } else {
      fail(name, line_no, "key outside any section");
    }
  }
  if (!cfg.s_m_set || !cfg.s_h_set) {
    double l = cfg.sim.lambda();
    if (!cfg.s_m_set) cfg.sim.proto.s_m = 1.5 * l;
    if (!cfg.s_h_set) cfg.sim.proto.s_h = 3.0 * l;
  }
  cfg.sim.validate();
  return cfg;
}

ScenarioConfig ScenarioConfig::parse_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_text(ss.str(), path);
}

std::string ScenarioConfig::serialize() const {
  std::ostringstream os;
  os << "[sim]\n";
  os << "nodes = " << sim.nodes << "\n";
  os << "beta = " << sim.beta << "\n";
  os << "delay = " << sim.delay << "\n";
  os << "horizon = " << sim.horizon << "\n";
  os << "seed = " << sim.seed << "\n";
  os << "adversary = "
     << (sim.adversary == AdversaryKind::none
             ? "null"
             : sim.adversary == AdversaryKind::withhold ? "withhold" : "balance")
     << "\n";
  os << "oracle = " << (sim.oracle_enabled ? "on" : "off") << "\n";
  os << "[protocol]\n";
  os << "mode = "
     << (sim.proto.mode == ProtocolMode::ghast
             ? "ghast"
             : sim.proto.mode == ProtocolMode::plain_ghost ? "plain_ghost" : "nakamoto_ref")
     << "\n";
  os << "eta_d = " << sim.proto.eta_d << "\n";
  os << "eta_w = " << sim.proto.eta_w << "\n";
  os << "eta_a = " << sim.proto.eta_a << "\n";
  os << "eta_t = " << sim.proto.eta_t << "\n";
  os << "eta_b = " << sim.proto.eta_b << "\n";
  os << "s_m = " << sim.proto.s_m << "\n";
  os << "s_h = " << sim.proto.s_h << "\n";
  os << "[confirmation]\n";
  os << "enabled = " << (sim.confirm_enabled ? "on" : "off") << "\n";
  os << "target_risk = " << sim.confirm.target_risk << "\n";
  os << "beta = " << sim.confirm.beta << "\n";
  os << "t_gap = " << sim.confirm.t_gap << "\n";
  os << "theta_gap = " << sim.confirm.theta_gap << "\n";
  os << "z_gap = " << sim.confirm.z_gap << "\n";
  os << "slice_size = " << sim.confirm.slice_size << "\n";
  os << "[output]\n";
  os << "dir = " << out_dir << "\n";
  os << "snapshot = " << (write_snapshot ? "on" : "off") << "\n";
  return os.str();
}

namespace {

int log_level() {
  const char* env = std::getenv("GHAST_LOG");
  if (!env) return 1;
  std::string v = env;
  if (v == "quiet") return 0;
  if (v == "debug") return 2;
  return 1;
}

}  // namespace

ScenarioResult run_scenario(const ScenarioConfig& cfg) {
  ScenarioResult res;
  World w(cfg.sim);
  std::unique_ptr<AnalysisOracle> oracle;
  if (cfg.sim.oracle_enabled) {
    oracle = std::make_unique<AnalysisOracle>(w.store(), cfg.sim.proto);
    w.set_event_sink([&](const Event& e) {
      oracle->step(e);
      // Claim 1 on the event's block: released blocks stay within G_max and
      // fully-arrived ones appear in every honest view.
      std::uint32_t idx = w.store().index_of(e.block);
      if (e.kind == EventKind::Arvl) {
        for (std::uint32_t v = 0; v < w.honest_count(); ++v) {
          if (!w.node_view(v).contains_idx(idx)) {
            oracle->report().violations.push_back(
                OracleViolation{oracle->report().events_checked, "claim1-containment"});
            break;
          }
        }
      }
    });
  }
  std::int64_t probe_round = cfg.sim.horizon / 2;
  for (std::int64_t r = 0; r < cfg.sim.horizon; ++r) {
    w.run_round();
    if (oracle && r == probe_round) oracle->add_probe();
    if (log_level() >= 2 && r % 1000 == 999)
      std::fprintf(stderr, "ghast: round %lld of %lld, %zu blocks\n",
                   static_cast<long long>(r + 1), static_cast<long long>(cfg.sim.horizon),
                   w.store().size());
  }
  if (oracle) oracle->audit();

  res.metrics = collect_metrics(w);
  if (oracle) {
    res.oracle_violations = oracle->report().violations.size();
    res.oracle_events = oracle->report().events_checked;
    res.exit_code = res.oracle_violations == 0 ? 0 : 1;
  }

  namespace fs = std::filesystem;
  fs::create_directories(cfg.out_dir);
  auto write = [&](const std::string& file, const std::string& content) {
    std::ofstream out(fs::path(cfg.out_dir) / file, std::ios::binary);
    out << content;
    return (fs::path(cfg.out_dir) / file).string();
  };
  res.events_path = write("events.log", export_event_log(w.events()));
  res.metrics_csv_path = write("metrics.csv", res.metrics.to_csv());
  res.metrics_json_path = write("metrics.json", res.metrics.to_json());
  if (oracle) res.oracle_report_path = write("oracle_report.json", oracle->report().to_json());
  if (cfg.write_snapshot) write("snapshot.txt", export_snapshot(w.node_view(0)));
  if (log_level() >= 1)
    std::fprintf(stderr,
                 "ghast: %lld rounds, %lld honest + %lld malicious blocks, "
                 "p50 latency %.1f, %llu oracle violations\n",
                 static_cast<long long>(res.metrics.rounds),
                 static_cast<long long>(res.metrics.honest_blocks),
                 static_cast<long long>(res.metrics.malicious_blocks), res.metrics.latency_p50,
                 static_cast<unsigned long long>(res.oracle_violations));
  return res;
}

namespace {

void apply_axis(ScenarioConfig& cfg, const std::string& axis, double value) {
  if (axis == "beta") cfg.sim.beta = value;
  else if (axis == "delay") cfg.sim.delay = static_cast<std::uint32_t>(value);
  else if (axis == "horizon") cfg.sim.horizon = static_cast<std::int64_t>(value);
  else if (axis == "nodes") cfg.sim.nodes = static_cast<std::uint32_t>(value);
  else if (axis == "eta_d") cfg.sim.proto.eta_d = value;
  else if (axis == "eta_w") cfg.sim.proto.eta_w = static_cast<std::uint64_t>(value);
  else if (axis == "eta_a") cfg.sim.proto.eta_a = static_cast<std::uint64_t>(value);
  else if (axis == "eta_t") cfg.sim.proto.eta_t = static_cast<std::uint64_t>(value);
  else if (axis == "eta_b") cfg.sim.proto.eta_b = static_cast<std::uint64_t>(value);
  else if (axis == "target_risk") cfg.sim.confirm.target_risk = value;
  else throw ConfigError("sweep axis must name a numeric config field, got '" + axis + "'");
}

}  // namespace

std::string sweep(const ScenarioConfig& templ, const std::string& axis,
                  const std::vector<double>& values) {
  if (values.empty()) throw ConfigError("sweep needs a non-empty value list");
  struct Row {
    double value;
    MetricsRecord m;
  };
  std::vector<std::future<Row>> futures;
  for (std::size_t i = 0; i < values.size(); ++i) {
    ScenarioConfig cfg = templ;
    apply_axis(cfg, axis, values[i]);
    cfg.sim.seed = templ.sim.seed + i;
    cfg.out_dir = templ.out_dir + "/sweep_" + axis + "_" + std::to_string(i);
    futures.push_back(std::async(std::launch::async, [cfg, v = values[i]] {
      auto res = run_scenario(cfg);
      return Row{v, std::move(res.metrics)};
    }));
  }
  std::ostringstream os;
  os << axis << ",seed,latency_p50,latency_p95,reorg_rate,adapt_fraction,confirmed_fraction\n";
  for (std::size_t i = 0; i < futures.size(); ++i) {
    Row row = futures[i].get();
    double rounds = std::max<double>(1, static_cast<double>(row.m.rounds));
    os << row.value << ',' << (templ.sim.seed + i) << ',' << row.m.latency_p50 << ','
       << row.m.latency_p95 << ',' << (static_cast<double>(row.m.reorgs) / rounds) << ','
       << (static_cast<double>(row.m.adapt_con_rounds) / rounds) << ','
       << row.m.confirmed_fraction << '\n';
  }
  return os.str();
}

std::string run_risk_queries(const std::string& text) {
  std::istringstream is(text);
  std::ostringstream os;
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    std::istringstream ls(t);
    risk::RiskQuery q;
    double eta_w = 0;
    if (!(ls >> q.m >> q.n >> q.theta >> q.t >> q.beta >> eta_w))
      throw ConfigError("risk query line " + std::to_string(line_no) +
                        ": expected 'm n theta t beta eta_w'");
    q.eta_w = static_cast<std::uint64_t>(eta_w);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.12g", risk::confirmation_risk(q));
    os << buf << '\n';
  }
  return os.str();
}

}  // namespace ghast
