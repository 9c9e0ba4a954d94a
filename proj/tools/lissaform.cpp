// Command-line front end: run and verify scenarios, print the initializer
// table, or serve a live session.

#include <csignal>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "lissaform/lissaform.hpp"
#include "lissaform/live_gateway.hpp"

namespace fs = std::filesystem;
using namespace lissaform;

namespace {

std::atomic<bool> g_interrupted{false};

void print_criteria(const VerifyReport& rep) {
  if (rep.no_data()) {
    std::cout << "no data\n";
    return;
  }
  for (const auto& c : rep.criteria)
    std::cout << (c.pass ? "PASS " : "FAIL ") << std::left << std::setw(16) << c.name << " value=" << c.value
              << " limit=" << c.limit << (c.detail.empty() ? "" : "  (" + c.detail + ")") << '\n';
}

int cmd_run(const std::string& scenario_path, const std::string& out_dir) {
  const Scenario s = load_scenario(scenario_path);
  const ScenarioRun run = run_scenario(s);
  for (const auto& w : run.world.config_warnings()) std::cerr << "warning: " << w << '\n';
  write_run(run, out_dir);
  std::cout << "scenario " << s.name << ": " << run.world.tick() << " ticks, trace in " << out_dir << '\n';
  print_criteria(run.report);
  return run.report.pass() ? 0 : 1;
}

int cmd_verify(const std::string& trace_path, const std::string& config_path, const std::string& report_path) {
  std::ifstream ts(trace_path);
  if (!ts) throw std::runtime_error("cannot open trace " + trace_path);
  std::ifstream cs(config_path);
  if (!cs) throw std::runtime_error("cannot open config " + config_path);
  const SimTrace trace = SimTrace::read_jsonl(ts);
  const VerifyConfig cfg = verify_config_from_json(ojson::parse(cs));
  const VerifyReport rep = verify_trace(trace, cfg);
  if (!report_path.empty()) std::ofstream(report_path) << report_json(rep).dump(2) << '\n';
  print_criteria(rep);
  return rep.pass() ? 0 : 1;
}

int cmd_tables(bool as_json) {
  ojson rows = ojson::array();
  for (const auto& c : table_cases()) rows.push_back(table_row_json(c));
  if (as_json) {
    std::cout << rows.dump(2) << '\n';
    return 0;
  }
  std::cout << std::left << std::setw(14) << "case" << std::right << std::setw(7) << "A" << std::setw(7) << "B"
            << std::setw(4) << "a" << std::setw(4) << "b" << std::setw(3) << "o" << std::setw(4) << "N" << std::setw(6)
            << "N_min" << std::setw(6) << "N_max" << std::setw(10) << "sdot_nom" << std::setw(8) << "r_dm" << std::setw(10)
            << "T_cov" << '\n';
  for (const auto& r : rows) {
    std::cout << std::left << std::setw(14) << r["name"].get<std::string>() << std::right << std::fixed
              << std::setprecision(2) << std::setw(7) << r["A"].get<double>() << std::setw(7) << r["B"].get<double>()
              << std::setw(4) << r["a"].get<int>() << std::setw(4) << r["b"].get<int>() << std::setw(3)
              << r["o"].get<int>() << std::setw(4) << r["N"].get<int>() << std::setw(6) << r["N_min"].get<int>()
              << std::setw(6) << r["N_max"].get<int>() << std::setprecision(4) << std::setw(10)
              << r["sdot_nom"].get<double>() << std::setprecision(3) << std::setw(8) << r["r_dm"].get<double>()
              << std::setprecision(2) << std::setw(10) << r["T_cov"].get<double>() << '\n';
  }
  return 0;
}

int cmd_serve(const std::string& scenario_path, GatewayOptions opts, const std::string& record_dir) {
  Scenario s = load_scenario(scenario_path);
  Gateway gw(s, opts);
  gw.start();
  std::cout << "serving " << s.name << " on http://" << opts.host << ':' << gw.port() << " (ws at /ws)" << std::endl;
  std::signal(SIGINT, [](int) { g_interrupted = true; });
  std::signal(SIGTERM, [](int) { g_interrupted = true; });
  while (!g_interrupted && !gw.kernel_finished()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
  gw.stop();
  if (!record_dir.empty()) {
    fs::create_directories(record_dir);
    std::ofstream(fs::path(record_dir) / "session.json") << scenario_to_json(gw.session_scenario()).dump(2) << '\n';
    std::ofstream(fs::path(record_dir) / "trace.jsonl") << gw.trace_jsonl();
    std::cout << "session written to " << record_dir << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lissajous formation planner and simulator"};
  app.require_subcommand(1);

  std::string scenario_path;
  std::string out_dir = "out";
  auto* run = app.add_subcommand("run", "Run a scenario and write trace.jsonl, report.json and config.json");
  run->add_option("scenario", scenario_path, "Scenario JSON")->required()->check(CLI::ExistingFile);
  run->add_option("-o,--out", out_dir, "Output directory");

  std::string trace_path;
  std::string config_path;
  std::string report_path;
  auto* verify = app.add_subcommand("verify", "Re-verify a saved trace");
  verify->add_option("trace", trace_path, "trace.jsonl")->required()->check(CLI::ExistingFile);
  verify->add_option("-c,--config", config_path, "config.json written by run")->required()->check(CLI::ExistingFile);
  verify->add_option("-r,--report", report_path, "Write the report JSON here");

  bool tables_json = false;
  auto* tables = app.add_subcommand("tables", "Print initializer outputs for the published parameter sets");
  tables->add_flag("--json", tables_json, "JSON output");

  GatewayOptions gopts;
  std::string record_dir;
  std::string static_dir;
  auto* serve = app.add_subcommand("serve", "Run a live session with a websocket gateway");
  serve->add_option("scenario", scenario_path, "Scenario JSON (commands are ignored)")->required()->check(CLI::ExistingFile);
  serve->add_option("--host", gopts.host, "Bind address");
  serve->add_option("--port", gopts.port, "TCP port (0 picks one)");
  serve->add_option("--speedup", gopts.speedup, "Simulated seconds per wall second; 0 runs unpaced");
  serve->add_option("--snapshot-hz", gopts.snapshot_hz, "Snapshot rate per client");
  serve->add_flag("--queue-busy", gopts.queue_busy, "Queue reconfiguration commands while busy instead of refusing");
  serve->add_option("--max-ticks", gopts.max_ticks, "Stop after this many ticks");
  serve->add_option("--record", record_dir, "Write session.json and trace.jsonl here on exit");
  serve->add_option("--static", static_dir, "Serve console assets from this directory");

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(scenario_path, out_dir);
    if (*verify) return cmd_verify(trace_path, config_path, report_path);
    if (*tables) return cmd_tables(tables_json);
    if (*serve) {
      if (!static_dir.empty()) gopts.static_dir = static_dir;
      return cmd_serve(scenario_path, gopts, record_dir);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
