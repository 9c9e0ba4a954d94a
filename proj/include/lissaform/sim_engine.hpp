#pragma once

// Fixed-timestep formation world. Each tick: apply operator commands, deliver
// last tick's messages over range-limited links, run every agent's state
// machine against that snapshot, advance motion, record the trace.

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <optional>
#include <queue>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "curve_core.hpp"
#include "geometry.hpp"
#include "reconfig_protocol.hpp"
#include "trace.hpp"
#include "trajectories.hpp"

namespace lissaform {

// ---------------------------------------------------------------------------
// Commands

enum class CommandKind { TakeOff, StartMission, Land, Remove, Replace, Add };

inline std::string_view command_name(CommandKind k) {
  switch (k) {
    case CommandKind::TakeOff: return "takeoff";
    case CommandKind::StartMission: return "start";
    case CommandKind::Land: return "land";
    case CommandKind::Remove: return "remove";
    case CommandKind::Replace: return "replace";
    case CommandKind::Add: return "add";
  }
  return "?";
}

inline std::optional<CommandKind> parse_command(std::string_view s) {
  for (CommandKind k : {CommandKind::TakeOff, CommandKind::StartMission, CommandKind::Land, CommandKind::Remove,
                        CommandKind::Replace, CommandKind::Add})
    if (command_name(k) == s) return k;
  return std::nullopt;
}

inline bool command_needs_id(CommandKind k) { return k == CommandKind::Remove || k == CommandKind::Replace; }

struct Command {
  CommandKind kind = CommandKind::Add;
  int id = -1;
};

struct CommandResult {
  bool accepted = false;
  bool queued = false;
  std::string reason;
  long tick = 0;
  double t = 0.0;
  int assigned_id = -1;  // id of a spawned agent
};

struct CommandRejection {
  long tick = 0;
  Command command;
  std::string reason;
};

// ---------------------------------------------------------------------------
// Messages

enum class MsgKind { RemovalAlert, StopParam, AssignmentInfo, AdditionRequest, EntryParams, ReplaceRequest, ExchangeReady, AccelerateCmd };

inline std::string_view msg_name(MsgKind k) {
  switch (k) {
    case MsgKind::RemovalAlert: return "RemovalAlert";
    case MsgKind::StopParam: return "StopParam";
    case MsgKind::AssignmentInfo: return "AssignmentInfo";
    case MsgKind::AdditionRequest: return "AdditionRequest";
    case MsgKind::EntryParams: return "EntryParams";
    case MsgKind::ReplaceRequest: return "ReplaceRequest";
    case MsgKind::ExchangeReady: return "ExchangeReady";
    case MsgKind::AccelerateCmd: return "AccelerateCmd";
  }
  return "?";
}

enum class OpKind { None, TakeOff, Start, Land, Remove, Add, Replace };

inline std::string_view op_name(OpKind k) {
  switch (k) {
    case OpKind::None: return "none";
    case OpKind::TakeOff: return "takeoff";
    case OpKind::Start: return "start";
    case OpKind::Land: return "land";
    case OpKind::Remove: return "remove";
    case OpKind::Add: return "add";
    case OpKind::Replace: return "replace";
  }
  return "?";
}

inline constexpr int kRing = -1;     // flood to every reachable formation and joining agent
inline constexpr int kNearest = -2;  // closest formation agent within direct range

struct Message {
  MsgKind kind = MsgKind::StopParam;
  int from = -1;
  int to = kRing;
  OpKind op = OpKind::None;
  int N_c = 0;
  int N_d = 0;
  LissajousSpec curveC;
  double s_stop = 0.0;
  double s_TR = 0.0;
  double psi = 0.0;
  double s_d = 0.0;
  int subject = -1;    // agent being removed or replaced
  int newcomer = -1;   // agent being added or replacing
  int initiator = -1;  // agent that started the deceleration
  LeaderInfo leader;
  double delta_max = 0.0;
};

// ---------------------------------------------------------------------------
// Agents

enum class Role { Formation, Joining, Leaving };

struct Hold {};
struct Cruise {
  double T0 = 0.0;
  double s0 = 0.0;
  double rate = 0.0;
};
struct SRamp {
  MonotoneTrajectory traj;
};
struct PsiSweep {
  SymmetricTrajectory traj;
  double psi_D = 0.0;
};
struct Line {
  WaypointTransition traj;
};
using Motion = std::variant<Hold, Cruise, SRamp, PsiSweep, Line>;

/// What an agent remembers about the reconfiguration it is taking part in.
struct ProtocolMemory {
  OpKind op = OpKind::None;
  int N_c = 0;
  int N_d = 0;
  LissajousSpec curveC;
  LissajousSpec curveD;
  double s_stop = 0.0;
  double s_TR = 0.0;
  int subject = -1;
  int newcomer = -1;
  bool initiator = false;
  bool holder = false;         // addition: interval holds two destination slots
  int partner = -1;            // agent to report readiness to
  bool partner_ready = false;  // addition holder: newcomer is at its entry point
  bool halted = false;
  bool request_acked = false;
  bool entry_known = false;
  double target_psi = 0.0;
  double target_s = 0.0;
  Point2 entry;
  bool assignment_known = false;
  LeaderInfo leader;
  SymmetricWindow window;
  bool risen = false;
  bool accel_sent = false;
  bool exit_started = false;
  double next_request = 0.0;
};

struct AgentState {
  int id = 0;
  Role role = Role::Formation;
  Mode mode = Mode::Grounded;
  LissajousSpec curve;
  ParamPair p;
  double psidot = 0.0;
  double sdot = 0.0;
  Point2 xy;
  Vec2 vxy;
  double z = 0.0;
  double z_target = 0.0;
  Motion motion = Hold{};
  int replaces = -1;
  std::vector<Message> inbox;
  ProtocolMemory mem;

  bool airborne() const { return z > 0.0; }
  double speed() const { return norm(vxy); }
};

// Wait between repeated join requests while no formation agent answers.
inline constexpr double kRequestRetry = 1.0;

inline double nominal_rate(const Region& region, const LissajousSpec& curve, double V_max) {
  return V_max / curve_speed_scale(region, curve);
}

struct EngineOptions {
  double dt = 0.01;
  std::optional<Point2> base;  // default (A + 2 r_s, 0)
  double altitude_rate = 0.5;
  bool queue_when_busy = true;
  bool start_airborne = true;  // agents begin surveilling at h_F; otherwise grounded at their slots
};

// ---------------------------------------------------------------------------
// World

class World {
 public:
  explicit World(Mission mission, EngineOptions opts = {}) : m_(std::move(mission)), opt_(opts) {
    if (!(opt_.dt > 0.0)) throw std::invalid_argument("World: dt must be positive");
    if (!(opt_.altitude_rate > 0.0)) throw std::invalid_argument("World: altitude rate must be positive");
    base_ = opt_.base.value_or(Point2{m_.region.A + 2.0 * m_.config.r_s, 0.0});
    curve_ = m_.curve;
    const double rate = nominal_rate(m_.region, curve_, m_.config.V_max);
    for (int i = 0; i < m_.config.N; ++i) {
      AgentState a;
      a.id = i + 1;
      a.curve = curve_;
      a.p = {0.0, m_.initial_psi[static_cast<size_t>(i)]};
      a.xy = position(a.curve, m_.region, a.p.psi, 0.0);
      if (opt_.start_airborne) {
        a.mode = Mode::Surveil;
        a.z = a.z_target = m_.config.h_F;
        a.motion = Cruise{0.0, 0.0, rate};
        a.sdot = rate;
        a.vxy = velocity(a.curve, m_.region, a.p.psi, 0.0, 0.0, rate).v;
      }
      agents_.push_back(a);
    }
    next_id_ = m_.config.N + 1;
    phase_ = opt_.start_airborne ? "SURVEIL" : "GROUNDED";
  }

  const Mission& mission() const { return m_; }
  const EngineOptions& options() const { return opt_; }
  const Region& region() const { return m_.region; }
  const FormationConfig& config() const { return m_.config; }
  Point2 base() const { return base_; }
  long tick() const { return tick_; }
  double time() const { return tick_time(tick_, opt_.dt); }
  const std::vector<AgentState>& agents() const { return agents_; }
  const SimTrace& trace() const { return trace_; }
  const std::string& phase() const { return phase_; }
  OpKind operation() const { return op_; }
  bool busy() const { return op_ != OpKind::None; }
  const LissajousSpec& formation_curve() const { return curve_; }
  const std::vector<CommandRejection>& rejections() const { return rejections_; }
  size_t queued_commands() const { return queue_.size(); }

  const AgentState* find(int id) const {
    for (const auto& a : agents_)
      if (a.id == id) return &a;
    return nullptr;
  }

  int formation_size() const {
    return static_cast<int>(std::count_if(agents_.begin(), agents_.end(), [](const AgentState& a) { return a.role == Role::Formation; }));
  }

  /// Setup warnings that do not stop a run.
  std::vector<std::string> config_warnings() const {
    std::vector<std::string> out;
    if (m_.config.h_F - m_.config.h_L < 4.0 * m_.config.r_dm)
      out.push_back("altitude gap h_F - h_L is below 4 r_dm; vertical clearance relies on the altitude ramp timing");
    if (m_.config.r_com < m_.config.r_cm) out.push_back("r_com is below the adjacent-link bound r_cm");
    return out;
  }

  /// Validates and applies an operator command at the current tick.
  CommandResult issue_command(const Command& c) {
    CommandResult r;
    r.tick = tick_;
    r.t = time();
    const bool reconfig = c.kind == CommandKind::Add || c.kind == CommandKind::Remove || c.kind == CommandKind::Replace;
    if ((reconfig || c.kind == CommandKind::Land) && busy()) {
      if (opt_.queue_when_busy) {
        queue_.push_back(c);
        r.accepted = true;
        r.queued = true;
        return r;
      }
      r.reason = "busy";
      return r;
    }
    r.reason = validate(c);
    if (!r.reason.empty()) return r;
    r.accepted = true;
    r.assigned_id = apply(c);
    return r;
  }

  void step() {
    const double t = time();
    drain_queue();
    deliver(t);
    for (auto& a : agents_) run_agent(a, t);
    const double t1 = tick_time(tick_ + 1, opt_.dt);
    for (auto& a : agents_) advance(a, t1);
    ++tick_;
    monitor(t1);
    for (const auto& a : agents_) trace_.add_record({t1, a.id, a.xy.x, a.xy.y, a.z, a.speed(), a.mode});
    update_phase(t1);
  }

  void run_ticks(long n) {
    for (long i = 0; i < n; ++i) step();
  }

  /// Steps until `pred` holds or `max_ticks` elapse; returns whether it held.
  template <class Pred>
  bool run_until(Pred pred, long max_ticks) {
    for (long i = 0; i < max_ticks; ++i) {
      if (pred(*this)) return true;
      step();
    }
    return pred(*this);
  }

 private:
  // -- commands -------------------------------------------------------------

  std::string validate(const Command& c) const {
    const int N = formation_size();
    switch (c.kind) {
      case CommandKind::TakeOff:
        return phase_ == "GROUNDED" || phase_ == "LANDED" ? "" : "not grounded";
      case CommandKind::StartMission:
        return phase_ == "READY" ? "" : "not ready";
      case CommandKind::Land:
        return phase_ == "SURVEIL" || phase_ == "READY" ? "" : "mission not active";
      case CommandKind::Remove:
      case CommandKind::Replace: {
        if (phase_ != "SURVEIL") return "mission not active";
        const AgentState* a = find(c.id);
        if (!a || a->role != Role::Formation) return "unknown id";
        if (c.kind == CommandKind::Remove && N - 1 < m_.config.N_min) return "below N_min";
        if (c.kind == CommandKind::Remove && N - 1 < 2) return "below N_min";
        return "";
      }
      case CommandKind::Add:
        if (phase_ != "SURVEIL") return "mission not active";
        if (N + 1 > m_.config.N_max) return "above N_max";
        return "";
    }
    return "unknown command";
  }

  int apply(const Command& c) {
    const double t = time();
    ojson ev;
    ev["cmd"] = command_name(c.kind);
    if (command_needs_id(c.kind)) ev["id"] = c.id;
    int spawned = -1;
    switch (c.kind) {
      case CommandKind::TakeOff:
        op_ = OpKind::TakeOff;
        for (auto& a : agents_) {
          if (a.role != Role::Formation) continue;
          a.mode = Mode::TakingOff;
          a.z_target = m_.config.h_F;
          a.motion = Hold{};
        }
        break;
      case CommandKind::StartMission: {
        op_ = OpKind::Start;
        for (auto& a : agents_) {
          if (a.role != Role::Formation) continue;
          const double rate = nominal_rate(m_.region, a.curve, m_.config.V_max);
          a.mode = Mode::Accelerating;
          a.motion = SRamp{MonotoneTrajectory::make(t, a.p.s, a.p.s + kPi / (8.0 * formation_size()), 0.0, rate)};
        }
        break;
      }
      case CommandKind::Land:
        op_ = OpKind::Land;
        for (auto& a : agents_) {
          if (a.role != Role::Formation) continue;
          a.mem = {};
          a.mem.op = OpKind::Land;
          if (a.mode == Mode::Surveil) {
            const double rate = nominal_rate(m_.region, a.curve, m_.config.V_max);
            a.mode = Mode::Decelerating;
            a.motion = SRamp{MonotoneTrajectory::make(t, a.p.s, a.p.s + kPi / (8.0 * formation_size()), rate, 0.0)};
          } else {
            a.mode = Mode::AltitudeChange;
            a.z_target = 0.0;
            a.motion = Hold{};
          }
        }
        break;
      case CommandKind::Remove: {
        op_ = OpKind::Remove;
        AgentState& r = agent(c.id);
        const int N_c = formation_size();
        Message m = base_message(MsgKind::RemovalAlert, r.id, kRing, OpKind::Remove);
        m.N_c = N_c;
        m.N_d = N_c - 1;
        m.curveC = r.curve;
        m.psi = r.p.psi;
        m.s_TR = r.p.s;
        m.subject = r.id;
        outbox_.push_back(m);
        // The leaving agent stops talking, slows down along its own reference and drops to h_L.
        const double rate = nominal_rate(m_.region, r.curve, m_.config.V_max);
        r.role = Role::Leaving;
        r.mem = {};
        r.mem.op = OpKind::Remove;
        r.mode = Mode::AltitudeChange;
        r.z_target = m_.config.h_L;
        r.motion = SRamp{MonotoneTrajectory::make(t, r.p.s, r.p.s + kPi / (8.0 * N_c), rate, 0.0)};
        break;
      }
      case CommandKind::Add:
      case CommandKind::Replace: {
        op_ = c.kind == CommandKind::Add ? OpKind::Add : OpKind::Replace;
        AgentState a;
        a.id = next_id_++;
        a.role = Role::Joining;
        a.mode = Mode::TakingOff;
        a.curve = curve_;
        a.xy = base_;
        a.z_target = m_.config.h_L;
        a.mem.op = op_;
        if (c.kind == CommandKind::Replace) a.replaces = c.id;
        spawned = a.id;
        agents_.push_back(a);
        ev["spawned"] = spawned;
        break;
      }
    }
    trace_.add_event(t, "command", ev);
    op_start_ = t;
    max_sym_rate_ = 0.0;
    return spawned;
  }

  void drain_queue() {
    while (!busy() && !queue_.empty()) {
      const Command c = queue_.front();
      queue_.pop_front();
      const std::string why = validate(c);
      if (!why.empty()) {
        rejections_.push_back({tick_, c, why});
        continue;
      }
      apply(c);
    }
  }

  // -- messaging ------------------------------------------------------------

  static Message base_message(MsgKind k, int from, int to, OpKind op) {
    Message m;
    m.kind = k;
    m.from = from;
    m.to = to;
    m.op = op;
    return m;
  }

  AgentState& agent(int id) {
    for (auto& a : agents_)
      if (a.id == id) return a;
    throw std::logic_error("World: unknown agent id");
  }

  static double link_distance(const AgentState& a, const AgentState& b) {
    const double dx = a.xy.x - b.xy.x;
    const double dy = a.xy.y - b.xy.y;
    const double dz = a.z - b.z;
    return std::sqrt(dx * dx + dy * dy + dz * dz);
  }

  static bool relays(const AgentState& a) { return a.role != Role::Leaving; }

  /// Agents reachable from `src` over hops no longer than r_com through relaying agents.
  std::vector<bool> reachable(size_t src) const {
    std::vector<bool> seen(agents_.size(), false);
    std::vector<size_t> stack{src};
    seen[src] = true;
    while (!stack.empty()) {
      const size_t u = stack.back();
      stack.pop_back();
      if (u != src && !relays(agents_[u])) continue;
      for (size_t v = 0; v < agents_.size(); ++v) {
        if (seen[v] || !relays(agents_[v])) continue;
        if (link_distance(agents_[u], agents_[v]) <= m_.config.r_com) {
          seen[v] = true;
          stack.push_back(v);
        }
      }
    }
    return seen;
  }

  size_t index_of(int id) const {
    for (size_t i = 0; i < agents_.size(); ++i)
      if (agents_[i].id == id) return i;
    return agents_.size();
  }

  void log_message(double t, const Message& m, const ojson& to) {
    ojson ev;
    ev["kind"] = msg_name(m.kind);
    ev["from"] = m.from;
    ev["to"] = to;
    trace_.add_event(t, "message", ev);
  }

  void deliver(double t) {
    std::vector<Message> pending;
    pending.swap(outbox_);
    for (const Message& m : pending) {
      const size_t src = index_of(m.from);
      if (src == agents_.size()) continue;
      if (m.to == kRing) {
        const auto seen = reachable(src);
        for (size_t i = 0; i < agents_.size(); ++i)
          if (seen[i] && agents_[i].role != Role::Leaving) agents_[i].inbox.push_back(m);
        log_message(t, m, "ring");
      } else if (m.to == kNearest) {
        size_t best = agents_.size();
        double best_d = std::numeric_limits<double>::infinity();
        for (size_t i = 0; i < agents_.size(); ++i) {
          if (i == src || agents_[i].role != Role::Formation) continue;
          const double d = link_distance(agents_[src], agents_[i]);
          if (d <= m_.config.r_com && d < best_d) {
            best_d = d;
            best = i;
          }
        }
        if (best == agents_.size()) continue;  // sender retries while it waits
        agents_[best].inbox.push_back(m);
        log_message(t, m, agents_[best].id);
      } else {
        const size_t dst = index_of(m.to);
        if (dst == agents_.size()) continue;
        if (reachable(src)[dst]) {
          agents_[dst].inbox.push_back(m);
          log_message(t, m, m.to);
        } else {
          outbox_.push_back(m);  // store and retry next tick
        }
      }
    }
  }

  void send(const Message& m) { outbox_.push_back(m); }

  // -- agent state machines -------------------------------------------------

  static double motion_end(const Motion& mo) {
    if (const auto* r = std::get_if<SRamp>(&mo)) return r->traj.Tf();
    if (const auto* w = std::get_if<PsiSweep>(&mo)) return w->traj.Tf();
    if (const auto* l = std::get_if<Line>(&mo)) return l->traj.Tf();
    return -std::numeric_limits<double>::infinity();
  }

  static bool motion_done(const AgentState& a, double t) { return t >= motion_end(a.motion) - 1e-9; }

  double rate_of(const LissajousSpec& c) const { return nominal_rate(m_.region, c, m_.config.V_max); }

  void hold_here(AgentState& a) { a.motion = Hold{}; }

  void event(double t, std::string_view name, ojson fields) { trace_.add_event(t, name, std::move(fields)); }

  void run_agent(AgentState& a, double t) {
    complete_segments(a, t);
    for (size_t i = 0; i < a.inbox.size();) {
      if (handle(a, a.inbox[i], t))
        a.inbox.erase(a.inbox.begin() + static_cast<long>(i));
      else
        ++i;
    }
    gates(a, t);
  }

  /// Transitions driven by a finished trajectory or altitude ramp.
  void complete_segments(AgentState& a, double t) {
    const FormationConfig& cfg = m_.config;
    switch (a.mode) {
      case Mode::TakingOff:
        if (a.z == a.z_target) a.mode = Mode::AwaitAssignment;
        break;
      case Mode::Decelerating:
        if (!motion_done(a, t)) break;
        if (a.mem.op == OpKind::Land) {
          hold_here(a);
          a.mode = Mode::AltitudeChange;
          a.z_target = 0.0;
          break;
        }
        a.p.s = a.mem.s_stop;
        hold_here(a);
        a.mem.halted = true;
        if (a.mem.op == OpKind::Replace) {
          a.mode = Mode::AwaitAssignment;
          break;
        }
        a.p = transform_params(a.p, a.curve, a.mem.curveD);
        a.curve = a.mem.curveD;
        a.mode = Mode::Transformed;
        event(t, "transformed", {{"id", a.id}, {"a", a.curve.a}, {"b", a.curve.b}, {"o", a.curve.o}});
        if (a.mem.op == OpKind::Remove && a.mem.initiator) announce_removal(a);
        if (a.mem.op == OpKind::Add && a.mem.holder && a.mem.partner_ready) announce_addition(a);
        break;
      case Mode::SymTransition:
        if (!motion_done(a, t)) break;
        a.p.psi = wrap_2pi(std::get<PsiSweep>(a.motion).psi_D);
        hold_here(a);
        a.mode = Mode::AwaitAssignment;
        if (a.mem.op == OpKind::Remove && a.mem.initiator) send(base_message(MsgKind::AccelerateCmd, a.id, kRing, a.mem.op));
        break;
      case Mode::Accelerating:
        if (!motion_done(a, t)) break;
      {
        const MonotoneTrajectory tr = std::get<SRamp>(a.motion).traj;
        a.motion = Cruise{tr.Tf(), tr.gf(), tr.gdotf()};
        a.mode = Mode::Surveil;
        break;
      }
      case Mode::WaypointMove:
        if (!motion_done(a, t)) break;
        a.xy = std::get<Line>(a.motion).traj.pf();
        hold_here(a);
        if (a.role == Role::Joining) {
          a.mode = Mode::AwaitAssignment;
          send(base_message(MsgKind::ExchangeReady, a.id, a.mem.partner, a.mem.op));
        } else {
          // replaced agent finished its exit: hand over and descend
          Message m = base_message(MsgKind::ExchangeReady, a.id, a.mem.newcomer, a.mem.op);
          send(m);
          a.mode = Mode::AltitudeChange;
          a.z_target = cfg.h_L;
        }
        break;
      case Mode::AltitudeChange:
        if (a.z != a.z_target || !motion_done(a, t)) break;
        if (std::holds_alternative<SRamp>(a.motion)) {
          a.p.s = std::get<SRamp>(a.motion).traj.gf();
          hold_here(a);
        }
        if (a.z == 0.0) {
          a.mode = Mode::Landed;
          a.mem = {};
        } else if (a.role == Role::Leaving) {
          a.mode = Mode::ReturningToBase;
          a.motion = Line{WaypointTransition::make(a.xy, base_, t, cfg.V_max, 0.0)};
        } else if (a.role == Role::Joining) {
          a.mode = Mode::AwaitAssignment;
          a.curve = a.mem.op == OpKind::Add ? a.mem.curveD : a.mem.curveC;
          a.p = {a.mem.target_s, a.mem.target_psi};
          if (a.mem.op == OpKind::Replace) {
            a.role = Role::Formation;
            a.mem.accel_sent = true;
            send(base_message(MsgKind::AccelerateCmd, a.id, kRing, a.mem.op));
          }
        }
        break;
      case Mode::ReturningToBase:
        if (!motion_done(a, t)) break;
        a.xy = base_;
        hold_here(a);
        a.mode = Mode::AltitudeChange;
        a.z_target = 0.0;
        break;
      default:
        break;
    }
  }

  /// Conditions checked every tick rather than on a finished segment.
  void gates(AgentState& a, double t) {
    const FormationConfig& cfg = m_.config;
    if (a.role != Role::Joining) return;
    if (a.mode == Mode::AwaitAssignment && !a.mem.request_acked && a.z == cfg.h_L && !a.mem.entry_known &&
        t >= a.mem.next_request) {
      a.mem.next_request = t + kRequestRetry;
      Message m = base_message(a.mem.op == OpKind::Add ? MsgKind::AdditionRequest : MsgKind::ReplaceRequest, a.id,
                               kNearest, a.mem.op);
      m.newcomer = a.id;
      m.subject = a.replaces;
      send(m);
    }
    if (a.mem.op == OpKind::Add && a.mode == Mode::AwaitAssignment && a.mem.assignment_known && !a.mem.risen &&
        a.z == cfg.h_L) {
      const LeaderInfo& L = a.mem.leader;
      const double travel = directed_travel(L.leader_psi_d, L.leader_psi_D, L.direction);
      const auto sweep = SymmetricTrajectory::make(a.mem.window.T0, a.mem.window.Tp, L.leader_psi_d, L.leader_psi_d + travel);
      const Point2 lp = position(a.mem.curveD, m_.region, sweep.eval(t).g, a.mem.target_s);
      if (distance(lp, a.mem.entry) > 2.0 * cfg.r_dm) {
        a.mem.risen = true;
        a.mode = Mode::AltitudeChange;
        a.z_target = cfg.h_F;
        event(t, "rise", {{"id", a.id}});
      }
    }
    if (a.mem.op == OpKind::Add && a.mode == Mode::AwaitAssignment && a.mem.risen && !a.mem.accel_sent &&
        a.z == cfg.h_F && t >= a.mem.window.T0 + a.mem.window.Tp - 1e-9) {
      a.mem.accel_sent = true;
      send(base_message(MsgKind::AccelerateCmd, a.id, kRing, a.mem.op));
    }
  }

  /// Removal initiator: pick the leader on the uniform ring and broadcast the assignment.
  void announce_removal(const AgentState& a) {
    const int N_c = a.mem.N_c;
    const ParamPair removed_c{a.mem.s_stop, wrap_2pi(a.mem.target_psi)};
    std::vector<FormationParam> ring;
    const double psi_r = transform_params(removed_c, a.mem.curveC, a.mem.curveD).psi;
    for (int j = 0; j < N_c; ++j) ring.push_back({j, wrap_2pi(psi_r + kTwoPi * j / N_c)});
    ring[1].psi = a.p.psi;  // the initiator's own value
    const ReconfigAssignment plan = removal_plan(ring, 0, N_c, a.mem.curveD);
    const RemovalLeader lead = removal_leader(ring, 0, N_c, a.mem.curveD);
    Message m = base_message(MsgKind::AssignmentInfo, a.id, kRing, OpKind::Remove);
    m.leader = lead.info;
    m.leader.leader_id = lead.info.leader_id == 1 ? a.id : -1;
    m.delta_max = plan.delta_max;
    m.N_c = N_c;
    m.N_d = N_c - 1;
    send(m);
  }

  /// Addition holder: once halted with the newcomer in place, broadcast direction and window.
  void announce_addition(AgentState& a) {
    const int N_c = a.mem.N_c;
    const int N_d = a.mem.N_d;
    const EntryDeltas d = entry_deltas(a.p.psi, N_c, N_d, a.curve.o);
    const int dir = addition_direction(d);
    std::vector<FormationParam> ring;
    for (int j = 0; j < N_c; ++j) ring.push_back({j, j == 0 ? a.p.psi : wrap_2pi(a.p.psi + kTwoPi * j / N_c)});
    double delta_max = 0.0;
    for (const auto& f : ring)
      delta_max = std::max(delta_max, std::fabs(addition_destination(f.id, f.psi, dir, N_d, a.curve.o).delta));
    const FormationParam& lead = dir < 0 ? ring[0] : ring[1];
    const AgentAssignment la = addition_destination(lead.id, lead.psi, dir, N_d, a.curve.o);
    Message m = base_message(MsgKind::AssignmentInfo, a.id, kRing, OpKind::Add);
    m.leader = {dir < 0 ? a.id : -1, dir, la.psi_d, la.psi_D, N_c, N_d};
    m.delta_max = delta_max;
    m.N_c = N_c;
    m.N_d = N_d;
    send(m);
  }

  void start_exit(AgentState& a, double t) {
    const ExitMove ex = outward_normal(a.p.psi, a.p.s, a.curve, m_.region, m_.config.r_dm);
    a.mem.exit_started = true;
    a.role = Role::Leaving;
    a.mode = Mode::WaypointMove;
    const double floor = 15.0 * distance(ex.from, ex.waypoint) / (4.0 * m_.config.V_max);
    a.motion = Line{WaypointTransition::make(a.xy, ex.waypoint, t, m_.config.V_max, floor)};
  }

  /// Returns true when the message is consumed; false keeps it queued.
  bool handle(AgentState& a, const Message& m, double t) {
    const FormationConfig& cfg = m_.config;
    switch (m.kind) {
      case MsgKind::RemovalAlert: {
        if (a.role != Role::Formation || a.id == m.subject) return true;
        // The successor of the removed agent starts the deceleration.
        if (std::fabs(wrap_pi(a.p.psi - m.psi - kTwoPi / m.N_c)) > 1e-6) return true;
        const AvoidSet av = avoid_set(m.N_c, cfg.r_dm, m_.region, kTwoPi / m.N_c);
        Message out = m;
        out.kind = MsgKind::StopParam;
        out.from = a.id;
        out.to = kRing;
        out.s_TR = a.p.s;
        out.s_stop = stop_value(a.p.s, m.N_c, av, t);
        out.initiator = a.id;
        send(out);
        return true;
      }
      case MsgKind::AdditionRequest:
      case MsgKind::ReplaceRequest: {
        if (a.role != Role::Formation || a.mode != Mode::Surveil || a.mem.op != OpKind::None) return true;
        const int N_c = formation_size();
        Message out = m;
        out.kind = MsgKind::StopParam;
        out.from = a.id;
        out.to = kRing;
        out.N_c = N_c;
        out.N_d = m.kind == MsgKind::AdditionRequest ? N_c + 1 : N_c;
        out.curveC = a.curve;
        out.s_TR = a.p.s;
        if (m.kind == MsgKind::AdditionRequest) {
          out.s_stop = stop_value(a.p.s, N_c, avoid_set(N_c, cfg.r_dm, m_.region, kTwoPi / out.N_d), t);
        } else {
          out.s_stop = a.p.s + kPi / (8.0 * N_c);
        }
        out.initiator = a.id;
        a.mem.op = m.op;  // ignore repeated requests until the stop broadcast arrives
        send(out);
        return true;
      }
      case MsgKind::StopParam:
        return on_stop(a, m, t);
      case MsgKind::EntryParams: {
        if (a.role != Role::Joining) return true;
        a.mem.entry_known = true;
        a.mem.request_acked = true;
        a.mem.partner = m.from;
        a.mem.target_psi = m.psi;
        a.mem.target_s = m.s_d;
        a.mem.s_stop = m.s_stop;
        a.mem.s_TR = m.s_TR;
        a.mem.N_c = m.N_c;
        a.mem.N_d = m.N_d;
        a.mem.curveC = m.curveC;
        a.mem.curveD = m.op == OpKind::Add ? curve_select(m_.region.A, m_.region.B, m.N_d) : m.curveC;
        a.mem.entry = position(a.mem.curveD, m_.region, m.psi, m.s_d);
        const double floor = 2.0 * (m.s_stop - m.s_TR) / rate_of(m.curveC);
        a.mode = Mode::WaypointMove;
        a.motion = Line{WaypointTransition::make(a.xy, a.mem.entry, t, cfg.V_max, std::max(0.0, floor))};
        return true;
      }
      case MsgKind::ExchangeReady: {
        if (a.role == Role::Joining) {
          // replaced agent has cleared the slot
          a.mode = Mode::AltitudeChange;
          a.z_target = cfg.h_F;
          return true;
        }
        if (a.mem.op == OpKind::Add && a.mem.holder) {
          a.mem.partner_ready = true;
          if (!a.mem.halted) return true;
          announce_addition(a);
          return true;
        }
        if (a.mem.op == OpKind::Replace && a.id == a.mem.subject) {
          if (!a.mem.halted) return false;
          start_exit(a, t);
          return true;
        }
        return true;
      }
      case MsgKind::AssignmentInfo: {
        if (a.role == Role::Joining) {
          a.mem.assignment_known = true;
          a.mem.leader = m.leader;
          a.mem.window = symmetric_window(m.delta_max, m_.region, cfg.V_max, t);
          return true;
        }
        if (a.role != Role::Formation) return true;
        if (a.mode != Mode::Transformed) return false;
        const AgentAssignment as = m.op == OpKind::Remove
                                       ? chain_destination(a.id, a.p.psi, m.leader)
                                       : addition_destination(a.id, a.p.psi, m.leader.direction, m.N_d, a.curve.o);
        const SymmetricWindow w = symmetric_window(m.delta_max, m_.region, cfg.V_max, t);
        a.mem.window = w;
        a.mode = Mode::SymTransition;
        a.motion = PsiSweep{transition_for(as, w), as.psi_d + as.delta};
        if (as.n == 0 && m.op == OpKind::Remove) event(t, "leader", {{"id", a.id}, {"direction", m.leader.direction}});
        return true;
      }
      case MsgKind::AccelerateCmd: {
        if (a.role == Role::Leaving) return true;
        if (a.mode != Mode::AwaitAssignment) return false;
        if (a.role == Role::Joining) a.role = Role::Formation;
        const double rate = rate_of(a.curve);
        const int N_d = formation_size_after(a);
        a.mode = Mode::Accelerating;
        a.motion = SRamp{MonotoneTrajectory::make(t, a.p.s, a.p.s + kPi / (8.0 * N_d), 0.0, rate)};
        return true;
      }
    }
    return true;
  }

  int formation_size_after(const AgentState& a) const { return a.mem.N_d > 0 ? a.mem.N_d : formation_size(); }

  double stop_value(double s, int N_c, const AvoidSet& av, double t) {
    if (!av.feasible) {
      event(t, "violation", {{"what", "avoid set infeasible"}, {"N_c", N_c}});
      return s + kPi / (8.0 * N_c);
    }
    return select_stop(s, N_c, av);
  }

  bool on_stop(AgentState& a, const Message& m, double t) {
    if (a.role == Role::Joining) {
      a.mem.request_acked = true;
      return true;
    }
    if (a.role != Role::Formation || a.mode != Mode::Surveil) return true;
    a.mem = {};
    a.mem.op = m.op;
    a.mem.N_c = m.N_c;
    a.mem.N_d = m.N_d;
    a.mem.curveC = a.curve;
    a.mem.curveD = m.op == OpKind::Replace ? a.curve : curve_select(m_.region.A, m_.region.B, m.N_d);
    a.mem.s_stop = m.s_stop;
    a.mem.s_TR = m.s_TR;
    a.mem.subject = m.subject;
    a.mem.newcomer = m.newcomer;
    a.mem.initiator = m.initiator == a.id;
    if (m.op == OpKind::Remove) a.mem.target_psi = m.psi;  // removed agent's psi, for the leader choice
    a.mode = Mode::Decelerating;
    a.motion = SRamp{MonotoneTrajectory::make(t, a.p.s, m.s_stop, rate_of(a.curve), 0.0)};

    if (m.op == OpKind::Add) {
      const ParamPair pd = transform_params({m.s_stop, a.p.psi}, a.curve, a.mem.curveD);
      const EntryDeltas d = entry_deltas(pd.psi, m.N_c, m.N_d, a.mem.curveD.o);
      if (holds_two_slots(d)) {
        a.mem.holder = true;
        Message out = m;
        out.kind = MsgKind::EntryParams;
        out.from = a.id;
        out.to = m.newcomer;
        out.curveC = a.curve;
        out.psi = addition_slot(pd.psi, d, m.N_c);
        out.s_d = pd.s;
        send(out);
      }
    } else if (m.op == OpKind::Replace && a.id == m.subject) {
      Message out = m;
      out.kind = MsgKind::EntryParams;
      out.from = a.id;
      out.to = m.newcomer;
      out.curveC = a.curve;
      out.psi = a.p.psi;
      out.s_d = m.s_stop;
      send(out);
    }
    return true;
  }

  // -- motion ---------------------------------------------------------------

  void advance(AgentState& a, double t1) {
    const Region& R = m_.region;
    a.psidot = 0.0;
    a.sdot = 0.0;
    a.vxy = {};
    if (const auto* c = std::get_if<Cruise>(&a.motion)) {
      a.p.s = c->s0 + c->rate * (t1 - c->T0);
      a.sdot = c->rate;
    } else if (const auto* r = std::get_if<SRamp>(&a.motion)) {
      const TrajectoryState st = r->traj.eval(t1);
      a.p.s = st.g;
      a.sdot = st.gdot;
    } else if (const auto* w = std::get_if<PsiSweep>(&a.motion)) {
      const TrajectoryState st = w->traj.eval(t1);
      a.p.psi = st.g;
      a.psidot = st.gdot;
    } else if (const auto* l = std::get_if<Line>(&a.motion)) {
      const WaypointSample ws = l->traj.eval(t1);
      a.xy = ws.p;
      a.vxy = ws.v;
    }
    if (!std::holds_alternative<Hold>(a.motion) && !std::holds_alternative<Line>(a.motion)) {
      a.xy = position(a.curve, R, a.p.psi, a.p.s);
      a.vxy = velocity(a.curve, R, a.p.psi, a.p.s, a.psidot, a.sdot).v;
    }
    const double step = opt_.altitude_rate * opt_.dt;
    if (a.z < a.z_target)
      a.z = std::min(a.z_target, a.z + step);
    else if (a.z > a.z_target)
      a.z = std::max(a.z_target, a.z - step);
  }

  // -- bookkeeping ----------------------------------------------------------

  void monitor(double t1) {
    const double limit = m_.config.V_max / m_.region.diagonal_half();
    for (const auto& a : agents_) {
      if (a.mode != Mode::SymTransition) continue;
      const double r = std::fabs(a.psidot);
      max_sym_rate_ = std::max(max_sym_rate_, r);
      if (r > limit + 1e-9) event(t1, "violation", {{"what", "transition rate"}, {"id", a.id}, {"psidot", r}});
    }
  }

  void update_phase(double t1) {
    std::string next = phase_;
    bool all_formation_in = true;
    auto all_formation = [&](Mode mode) {
      for (const auto& a : agents_)
        if (a.role == Role::Formation && a.mode != mode) return false;
      return true;
    };
    switch (op_) {
      case OpKind::None:
        break;
      case OpKind::TakeOff:
        next = "TAKING_OFF";
        for (const auto& a : agents_)
          if (a.role == Role::Formation && (a.mode != Mode::AwaitAssignment || a.z != m_.config.h_F)) all_formation_in = false;
        if (all_formation_in) finish_op(t1, "READY");
        else set_phase(t1, next);
        return;
      case OpKind::Start:
        if (all_formation(Mode::Surveil)) finish_op(t1, "SURVEIL");
        else set_phase(t1, "STARTING");
        return;
      case OpKind::Land:
        if (all_formation(Mode::Landed)) finish_op(t1, "LANDED");
        else set_phase(t1, "LANDING");
        return;
      case OpKind::Remove:
      case OpKind::Add:
      case OpKind::Replace: {
        set_phase(t1, op_ == OpKind::Remove ? "REMOVING" : op_ == OpKind::Add ? "ADDING" : "REPLACING");
        bool done = all_formation(Mode::Surveil);
        for (const auto& a : agents_) {
          if (a.role == Role::Joining) done = false;
          if (a.role == Role::Leaving && a.mode != Mode::Landed) done = false;
        }
        if (done) {
          reconfig_complete(t1);
          finish_op(t1, "SURVEIL");
        }
        return;
      }
    }
  }

  void reconfig_complete(double t1) {
    std::vector<double> psi;
    double residual = 0.0;
    LissajousSpec curve = curve_;
    for (const auto& a : agents_) {
      if (a.role != Role::Formation) continue;
      psi.push_back(wrap_2pi(a.p.psi));
      curve = a.curve;
      residual = std::max(residual, std::fabs(ellipse_residual(m_.region, a.xy, a.p.s, a.curve.N())));
    }
    std::sort(psi.begin(), psi.end());
    const int N = static_cast<int>(psi.size());
    double gap_err = 0.0;
    for (int i = 0; i < N; ++i) {
      const double gap = forward_gap(psi[static_cast<size_t>(i)], psi[static_cast<size_t>((i + 1) % N)]);
      gap_err = std::max(gap_err, std::fabs((N == 1 ? kTwoPi : gap) - kTwoPi / N));
    }
    curve_ = curve;
    ojson ev;
    ev["op"] = op_name(op_);
    ev["N"] = N;
    ev["a"] = curve.a;
    ev["b"] = curve.b;
    ev["o"] = curve.o;
    ev["duration"] = t1 - op_start_;
    ev["max_gap_error"] = gap_err;
    ev["max_residual"] = residual;
    ev["max_sym_rate"] = max_sym_rate_;
    ev["sym_rate_limit"] = m_.config.V_max / m_.region.diagonal_half();
    trace_.add_event(t1, "reconfig_complete", ev);
  }

  void set_phase(double t, const std::string& p) {
    if (p == phase_) return;
    phase_ = p;
    trace_.add_event(t, "phase", {{"phase", p}});
  }

  void finish_op(double t, const std::string& p) {
    op_ = OpKind::None;
    for (auto& a : agents_)
      if (a.role == Role::Formation && a.mode == Mode::Surveil) a.mem = {};
    set_phase(t, p);
  }

  Mission m_;
  EngineOptions opt_;
  Point2 base_;
  LissajousSpec curve_;
  std::vector<AgentState> agents_;
  std::vector<Message> outbox_;
  std::deque<Command> queue_;
  std::vector<CommandRejection> rejections_;
  SimTrace trace_;
  std::string phase_;
  OpKind op_ = OpKind::None;
  double op_start_ = 0.0;
  double max_sym_rate_ = 0.0;
  long tick_ = 0;
  int next_id_ = 1;
};

}  // namespace lissaform
