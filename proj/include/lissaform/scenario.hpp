#pragma once

// Scenario files: mission inputs, engine options and a timed command list in
// JSON with unit-suffixed keys. Loading validates everything before a run;
// running produces the trace, the report and a config echo for re-verification.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "curve_core.hpp"
#include "metrics.hpp"
#include "sim_engine.hpp"
#include "trace.hpp"

namespace lissaform {

struct ScenarioError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ScheduledCommand {
  long tick = 0;
  Command command;
};

struct VerifyToggles {
  bool collision = true;
  bool speed = true;
  bool coverage = true;
  bool ring_closure = true;
  bool reconfiguration = true;
};

struct Scenario {
  std::string name = "scenario";
  InitInputs inputs;
  EngineOptions engine;
  long duration_ticks = 0;
  double coverage_start = 0.0;
  bool strict_duration = true;  // require one coverage period after the last command
  VerifyToggles verify;
  std::vector<ScheduledCommand> commands;
};

namespace detail {

template <class T>
T field(const ojson& j, const char* key, const T& fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const std::exception&) {
    throw ScenarioError(std::string("scenario field '") + key + "' has the wrong type");
  }
}

template <class T>
T required(const ojson& j, const char* key) {
  if (!j.contains(key)) throw ScenarioError(std::string("scenario field '") + key + "' is required");
  return field<T>(j, key, T{});
}

}  // namespace detail

inline Mission scenario_mission(const Scenario& s) {
  try {
    return initialize(s.inputs);
  } catch (const std::invalid_argument& e) {
    throw ScenarioError(std::string("scenario '") + s.name + "': " + e.what());
  }
}

/// Checks ranges and ordering that the JSON types alone do not enforce.
inline void validate_scenario(const Scenario& s) {
  const Mission m = scenario_mission(s);
  if (!(s.engine.dt > 0.0)) throw ScenarioError("dt_s must be positive");
  if (!(s.engine.altitude_rate > 0.0)) throw ScenarioError("altitude_rate_mps must be positive");
  if (s.duration_ticks < 0) throw ScenarioError("duration must be non-negative");
  long prev = -1;
  for (size_t i = 0; i < s.commands.size(); ++i) {
    const ScheduledCommand& c = s.commands[i];
    const std::string where = "commands[" + std::to_string(i) + "]";
    if (c.tick <= prev) throw ScenarioError(where + ": command times must be strictly increasing");
    if (c.tick >= s.duration_ticks) throw ScenarioError(where + ": command falls after the end of the run");
    if (command_needs_id(c.command.kind) && c.command.id < 1) throw ScenarioError(where + ": id is required");
    prev = c.tick;
  }
  if (s.strict_duration && !s.commands.empty()) {
    const double last = tick_time(s.commands.back().tick, s.engine.dt);
    const double end = tick_time(s.duration_ticks, s.engine.dt);
    if (end + 1e-9 < last + m.config.T_cov)
      throw ScenarioError("duration must cover the last command plus one coverage period (" +
                          std::to_string(last + m.config.T_cov) + " s)");
  }
}

inline Scenario scenario_from_json(const ojson& j) {
  using detail::field;
  using detail::required;
  if (!j.is_object()) throw ScenarioError("scenario must be a JSON object");
  Scenario s;
  s.name = field<std::string>(j, "name", s.name);
  InitInputs& in = s.inputs;
  in.L = required<double>(j, "L_m");
  in.H = required<double>(j, "H_m");
  in.r_s = required<double>(j, "r_s_m");
  in.r_com = required<double>(j, "r_com_m");
  in.V_max = required<double>(j, "V_max_mps");
  in.N_extra = field<int>(j, "N_extra", in.N_extra);
  in.eta = field<double>(j, "eta", in.eta);
  in.h_F = field<double>(j, "h_F_m", in.h_F);
  in.h_L = field<double>(j, "h_L_m", in.h_L);

  EngineOptions& e = s.engine;
  e.dt = field<double>(j, "dt_s", e.dt);
  e.altitude_rate = field<double>(j, "altitude_rate_mps", e.altitude_rate);
  e.queue_when_busy = field<bool>(j, "queue_when_busy", e.queue_when_busy);
  e.start_airborne = field<bool>(j, "start_airborne", e.start_airborne);
  if (j.contains("base_xy_m")) {
    const auto b = field<std::vector<double>>(j, "base_xy_m", {});
    if (b.size() != 2) throw ScenarioError("base_xy_m must hold two numbers");
    e.base = Point2{b[0], b[1]};
  }
  if (!(e.dt > 0.0)) throw ScenarioError("dt_s must be positive");

  if (j.contains("duration_ticks")) {
    s.duration_ticks = field<long>(j, "duration_ticks", 0);
  } else {
    const double d = required<double>(j, "duration_s");
    if (d < 0.0) throw ScenarioError("duration_s must be non-negative");
    s.duration_ticks = std::lround(d / e.dt);
  }
  s.coverage_start = field<double>(j, "coverage_start_s", s.coverage_start);
  s.strict_duration = field<bool>(j, "strict_duration", s.strict_duration);

  if (j.contains("verify")) {
    const ojson& v = j.at("verify");
    s.verify.collision = field<bool>(v, "collision", true);
    s.verify.speed = field<bool>(v, "speed", true);
    s.verify.coverage = field<bool>(v, "coverage", true);
    s.verify.ring_closure = field<bool>(v, "ring_closure", true);
    s.verify.reconfiguration = field<bool>(v, "reconfiguration", true);
  }

  if (j.contains("commands")) {
    if (!j.at("commands").is_array()) throw ScenarioError("commands must be an array");
    size_t i = 0;
    for (const ojson& c : j.at("commands")) {
      const std::string where = "commands[" + std::to_string(i++) + "]";
      if (!c.is_object()) throw ScenarioError(where + " must be an object");
      ScheduledCommand sc;
      const auto kind = parse_command(field<std::string>(c, "cmd", ""));
      if (!kind) throw ScenarioError(where + ": unknown cmd");
      sc.command.kind = *kind;
      sc.command.id = field<int>(c, "id", -1);
      if (c.contains("tick"))
        sc.tick = field<long>(c, "tick", 0);
      else if (c.contains("t_s"))
        sc.tick = std::lround(field<double>(c, "t_s", 0.0) / e.dt);
      else
        throw ScenarioError(where + ": needs t_s or tick");
      if (sc.tick < 0) throw ScenarioError(where + ": negative time");
      s.commands.push_back(sc);
    }
  }
  validate_scenario(s);
  return s;
}

inline ojson scenario_to_json(const Scenario& s) {
  ojson j;
  j["name"] = s.name;
  j["L_m"] = s.inputs.L;
  j["H_m"] = s.inputs.H;
  j["r_s_m"] = s.inputs.r_s;
  j["r_com_m"] = s.inputs.r_com;
  j["V_max_mps"] = s.inputs.V_max;
  j["N_extra"] = s.inputs.N_extra;
  j["eta"] = s.inputs.eta;
  j["h_F_m"] = s.inputs.h_F;
  j["h_L_m"] = s.inputs.h_L;
  j["dt_s"] = s.engine.dt;
  j["duration_ticks"] = s.duration_ticks;
  j["altitude_rate_mps"] = s.engine.altitude_rate;
  j["queue_when_busy"] = s.engine.queue_when_busy;
  j["start_airborne"] = s.engine.start_airborne;
  if (s.engine.base) j["base_xy_m"] = {s.engine.base->x, s.engine.base->y};
  j["coverage_start_s"] = s.coverage_start;
  j["strict_duration"] = s.strict_duration;
  j["verify"] = {{"collision", s.verify.collision},
                 {"speed", s.verify.speed},
                 {"coverage", s.verify.coverage},
                 {"ring_closure", s.verify.ring_closure},
                 {"reconfiguration", s.verify.reconfiguration}};
  ojson cmds = ojson::array();
  for (const auto& c : s.commands) {
    ojson cj;
    cj["tick"] = c.tick;
    cj["cmd"] = command_name(c.command.kind);
    if (command_needs_id(c.command.kind)) cj["id"] = c.command.id;
    cmds.push_back(cj);
  }
  j["commands"] = cmds;
  return j;
}

inline Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ScenarioError("cannot open scenario " + path.string());
  ojson j;
  try {
    j = ojson::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ScenarioError(path.string() + ": " + e.what());
  }
  return scenario_from_json(j);
}

// ---------------------------------------------------------------------------
// Verification config echo

inline VerifyConfig verify_config(const Scenario& s, const Mission& m) {
  VerifyConfig v;
  v.region = m.region;
  v.r_s = m.config.r_s;
  v.r_dm = m.config.r_dm;
  v.V_max = m.config.V_max;
  v.T_cov = m.config.T_cov;
  v.coverage_start = s.coverage_start;
  v.check_collision = s.verify.collision;
  v.check_speed = s.verify.speed;
  v.check_coverage = s.verify.coverage;
  v.check_ring = s.verify.ring_closure;
  v.check_reconfig = s.verify.reconfiguration;
  return v;
}

inline ojson formation_json(const Mission& m) {
  const FormationConfig& c = m.config;
  ojson j;
  j["A"] = m.region.A;
  j["B"] = m.region.B;
  j["a"] = m.curve.a;
  j["b"] = m.curve.b;
  j["o"] = m.curve.o;
  j["N"] = c.N;
  j["N_s"] = m.N_s;
  j["N_c"] = m.N_c;
  j["N_min"] = c.N_min;
  j["N_max"] = c.N_max;
  j["sdot_nom"] = c.sdot_nom;
  j["r_s"] = c.r_s;
  j["r_com"] = c.r_com;
  j["r_sm"] = c.r_sm;
  j["r_cm"] = c.r_cm;
  j["r_du"] = c.r_du;
  j["r_dm"] = c.r_dm;
  j["T_cov"] = c.T_cov;
  j["V_max"] = c.V_max;
  j["eta"] = c.eta;
  j["h_F"] = c.h_F;
  j["h_L"] = c.h_L;
  return j;
}

inline ojson verify_config_json(const VerifyConfig& v) {
  ojson j;
  j["A"] = v.region.A;
  j["B"] = v.region.B;
  j["r_s"] = v.r_s;
  j["r_dm"] = v.r_dm;
  j["V_max"] = v.V_max;
  j["T_cov"] = v.T_cov;
  j["coverage_start"] = v.coverage_start;
  j["speed_tolerance"] = v.speed_tolerance;
  j["reconfig_tolerance"] = v.reconfig_tolerance;
  j["check"] = {{"collision", v.check_collision},
                {"speed", v.check_speed},
                {"coverage", v.check_coverage},
                {"ring_closure", v.check_ring},
                {"reconfiguration", v.check_reconfig}};
  return j;
}

inline VerifyConfig verify_config_from_json(const ojson& j) {
  using detail::field;
  using detail::required;
  const ojson& src = j.contains("verify_config") ? j.at("verify_config") : j;
  VerifyConfig v;
  v.region = Region::from_half_extents(required<double>(src, "A"), required<double>(src, "B"));
  v.r_s = required<double>(src, "r_s");
  v.r_dm = required<double>(src, "r_dm");
  v.V_max = required<double>(src, "V_max");
  v.T_cov = required<double>(src, "T_cov");
  v.coverage_start = field<double>(src, "coverage_start", 0.0);
  v.speed_tolerance = field<double>(src, "speed_tolerance", v.speed_tolerance);
  v.reconfig_tolerance = field<double>(src, "reconfig_tolerance", v.reconfig_tolerance);
  if (src.contains("check")) {
    const ojson& c = src.at("check");
    v.check_collision = field<bool>(c, "collision", true);
    v.check_speed = field<bool>(c, "speed", true);
    v.check_coverage = field<bool>(c, "coverage", true);
    v.check_ring = field<bool>(c, "ring_closure", true);
    v.check_reconfig = field<bool>(c, "reconfiguration", true);
  }
  return v;
}

// ---------------------------------------------------------------------------
// Running

struct ScenarioRun {
  Scenario scenario;
  Mission mission;
  World world;
  VerifyConfig verify;
  VerifyReport report;
  std::vector<CommandResult> results;
};

inline ScenarioRun run_scenario(const Scenario& s) {
  validate_scenario(s);
  Mission m = scenario_mission(s);
  ScenarioRun run{s, m, World(m, s.engine), verify_config(s, m), {}, {}};
  size_t next = 0;
  for (long k = 0; k < s.duration_ticks; ++k) {
    while (next < s.commands.size() && s.commands[next].tick == k) run.results.push_back(run.world.issue_command(s.commands[next++].command));
    run.world.step();
  }
  run.report = verify_trace(run.world.trace(), run.verify);
  return run;
}

inline ojson run_report_json(const ScenarioRun& r) {
  ojson j;
  j["scenario"] = r.scenario.name;
  ojson rep = report_json(r.report);
  for (auto& [k, v] : rep.items()) j[k] = v;
  ojson cmds = ojson::array();
  for (size_t i = 0; i < r.results.size(); ++i) {
    const CommandResult& c = r.results[i];
    cmds.push_back({{"tick", c.tick}, {"accepted", c.accepted}, {"queued", c.queued}, {"reason", c.reason}});
  }
  j["commands"] = cmds;
  ojson rej = ojson::array();
  for (const auto& x : r.world.rejections())
    rej.push_back({{"tick", x.tick}, {"cmd", command_name(x.command.kind)}, {"reason", x.reason}});
  j["deferred_rejections"] = rej;
  j["warnings"] = r.world.config_warnings();
  return j;
}

/// Writes trace.jsonl, report.json and config.json into `dir`.
inline void write_run(const ScenarioRun& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "trace.jsonl");
    r.world.trace().write_jsonl(os);
  }
  {
    std::ofstream os(dir / "report.json");
    os << run_report_json(r).dump(2) << '\n';
  }
  {
    ojson cfg;
    cfg["scenario"] = scenario_to_json(r.scenario);
    cfg["formation"] = formation_json(r.mission);
    cfg["verify_config"] = verify_config_json(r.verify);
    std::ofstream os(dir / "config.json");
    os << cfg.dump(2) << '\n';
  }
}

// ---------------------------------------------------------------------------
// Initializer table for the published parameter sets

struct TableCase {
  std::string name;
  InitInputs inputs;
};

inline std::vector<TableCase> table_cases() {
  auto in = [](double L, double H, double r_s, double r_com, double V, int extra, double eta) {
    InitInputs x;
    x.L = L;
    x.H = H;
    x.r_s = r_s;
    x.r_com = r_com;
    x.V_max = V;
    x.N_extra = extra;
    x.eta = eta;
    return x;
  };
  return {{"matlab_sim_1", in(10, 7, 4.7, 9.5, 0.5, 2, 1.05)},
          {"matlab_sim_2", in(10, 7, 1.5, 3.2, 1.0, 2, 1.05)},
          {"sitl_sim", in(25, 16, 7, 11, 0.3, 1, 1.05)},
          {"experiment", in(5, 5, 2.7, 5.5, 0.2, 1, 1.05)}};
}

inline ojson table_row_json(const TableCase& c) {
  const Mission m = initialize(c.inputs);
  ojson j;
  j["name"] = c.name;
  j["L"] = c.inputs.L;
  j["H"] = c.inputs.H;
  j["r_s"] = c.inputs.r_s;
  j["r_com"] = c.inputs.r_com;
  j["V_max"] = c.inputs.V_max;
  const ojson f = formation_json(m);
  for (auto& [k, v] : f.items()) j[k] = v;
  return j;
}

}  // namespace lissaform
