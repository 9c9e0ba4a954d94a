#pragma once

// Simulation trace: one record per agent per tick plus timestamped event
// records, kept in emission order and serialized as JSON lines.

#include <array>
#include <cmath>
#include <cstddef>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

namespace lissaform {

using ojson = nlohmann::ordered_json;

enum class Mode {
  Grounded,
  TakingOff,
  Surveil,
  Decelerating,
  Transformed,
  AwaitAssignment,
  SymTransition,
  WaypointMove,
  AltitudeChange,
  Accelerating,
  ReturningToBase,
  Landed,
};

inline constexpr std::array<std::string_view, 12> kModeNames{
    "Grounded",     "TakingOff",     "Surveil",        "Decelerating",       "Transformed",     "AwaitAssignment",
    "SymTransition", "WaypointMove", "AltitudeChange", "Accelerating", "ReturningToBase", "Landed"};

inline std::string_view mode_name(Mode m) { return kModeNames[static_cast<size_t>(m)]; }

inline std::optional<Mode> parse_mode(std::string_view s) {
  for (size_t i = 0; i < kModeNames.size(); ++i)
    if (kModeNames[i] == s) return static_cast<Mode>(i);
  return std::nullopt;
}

/// Simulation time of tick k, rounded to the nanosecond so that printed
/// timestamps stay short and identical across runs.
inline double tick_time(long tick, double dt) { return std::round(static_cast<double>(tick) * dt * 1e9) / 1e9; }

struct AgentRecord {
  double t = 0.0;
  int id = 0;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  double speed = 0.0;
  Mode mode = Mode::Grounded;

  bool airborne() const { return z > 0.0; }
};

struct TraceEvent {
  size_t position = 0;  // number of agent records written before this event
  ojson body;           // {"t": .., "event": .., ...}
};

class SimTrace {
 public:
  void add_record(const AgentRecord& r) { records_.push_back(r); }

  void add_event(double t, std::string_view name, ojson fields = ojson::object()) {
    ojson body;
    body["t"] = t;
    body["event"] = name;
    for (auto& [k, v] : fields.items()) body[k] = v;
    events_.push_back({records_.size(), std::move(body)});
  }

  const std::vector<AgentRecord>& records() const { return records_; }
  const std::vector<TraceEvent>& events() const { return events_; }
  bool empty() const { return records_.empty() && events_.empty(); }

  std::vector<ojson> events_named(std::string_view name) const {
    std::vector<ojson> out;
    for (const auto& e : events_)
      if (e.body.value("event", "") == name) out.push_back(e.body);
    return out;
  }

  static ojson record_json(const AgentRecord& r) {
    ojson j;
    j["t"] = r.t;
    j["id"] = r.id;
    j["x"] = r.x;
    j["y"] = r.y;
    j["z"] = r.z;
    j["speed"] = r.speed;
    j["mode"] = mode_name(r.mode);
    return j;
  }

  void write_jsonl(std::ostream& os) const {
    size_t ev = 0;
    for (size_t i = 0; i <= records_.size(); ++i) {
      while (ev < events_.size() && events_[ev].position == i) os << events_[ev++].body.dump() << '\n';
      if (i < records_.size()) os << record_json(records_[i]).dump() << '\n';
    }
  }

  std::string to_jsonl() const {
    std::ostringstream os;
    write_jsonl(os);
    return os.str();
  }

  /// Parses a JSON-lines trace; throws std::runtime_error naming the bad line.
  static SimTrace read_jsonl(std::istream& is) {
    SimTrace out;
    std::string line;
    size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty()) continue;
      ojson j;
      try {
        j = ojson::parse(line);
      } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("trace line " + std::to_string(lineno) + ": " + e.what());
      }
      if (j.contains("event")) {
        if (!j.contains("t")) throw std::runtime_error("trace line " + std::to_string(lineno) + ": event without t");
        out.events_.push_back({out.records_.size(), std::move(j)});
        continue;
      }
      try {
        AgentRecord r;
        r.t = j.at("t").get<double>();
        r.id = j.at("id").get<int>();
        r.x = j.at("x").get<double>();
        r.y = j.at("y").get<double>();
        r.z = j.at("z").get<double>();
        r.speed = j.at("speed").get<double>();
        const auto mode = parse_mode(j.at("mode").get<std::string>());
        if (!mode) throw std::runtime_error("unknown mode");
        r.mode = *mode;
        out.records_.push_back(r);
      } catch (const std::exception& e) {
        throw std::runtime_error("trace line " + std::to_string(lineno) + ": " + e.what());
      }
    }
    return out;
  }

 private:
  std::vector<AgentRecord> records_;
  std::vector<TraceEvent> events_;
};

}  // namespace lissaform
