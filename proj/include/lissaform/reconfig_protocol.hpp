#pragma once

// Decision logic for adding, removing and replacing one agent of a formation:
// stop-parameter choice away from near-diagonal ellipses, re-expression of curve
// parameters on the destination curve, leader selection, destination assignment
// along the frozen ellipse, entry/exit geometry and transition-window sizing.
//
// Everything here is a pure function of its arguments. Angles psi are kept in
// [0, 2π); the running curve parameter s is not wrapped (see transform_params).

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "lissaform/curve_core.hpp"
#include "lissaform/geometry.hpp"
#include "lissaform/trajectories.hpp"

namespace lissaform {

/// Grid snapping tolerance, in units of one destination-grid step.
inline constexpr double kSnapTolerance = 1e-9;
/// Two travel distances closer than this count as equal when choosing a leader.
inline constexpr double kTieTolerance = 1e-12;

struct ParamPair {
  double s = 0.0;
  double psi = 0.0;
};

// ---------------------------------------------------------------------------
// Avoid set

/// Open intervals of s around the diagonal-degenerate ellipses where agents of
/// hull radius r_dm cannot safely move along the ellipse.
struct AvoidSet {
  int N_c = 0;
  double delta_s = 0.0;
  bool feasible = true;  // false when the intervals cover the whole circle

  int interval_count() const { return 2 * N_c; }

  /// Centre of interval k, k = 1 .. 2 N_c.
  double diag(int k) const { return (2.0 * k - 1.0) * kPi / (2.0 * N_c); }

  std::vector<std::pair<double, double>> intervals() const {
    std::vector<std::pair<double, double>> out;
    for (int k = 1; k <= interval_count(); ++k) out.emplace_back(diag(k) - delta_s, diag(k) + delta_s);
    return out;
  }

  /// 1-based index of the interval containing s (mod 2π), or 0 when s is admissible.
  int violated(double s) const {
    if (!feasible) return 1;
    for (int k = 1; k <= interval_count(); ++k) {
      if (std::fabs(wrap_pi(s - diag(k))) < delta_s) return k;
    }
    return 0;
  }

  bool contains(double s) const { return violated(s) != 0; }
};

inline AvoidSet avoid_set(int N_c, double r_dm, const Region& region, double delta_psi_min) {
  if (N_c < 2) throw std::invalid_argument("avoid_set: N_c must be at least 2");
  if (!(delta_psi_min > 0.0) || delta_psi_min > kPi)
    throw std::invalid_argument("avoid_set: delta_psi_min must lie in (0, pi]");
  if (r_dm < 0.0) throw std::invalid_argument("avoid_set: r_dm must be non-negative");
  AvoidSet out;
  out.N_c = N_c;
  out.delta_s = (kPi / (2.0 * N_c)) * (r_dm * region.diagonal_half() / (region.A * region.B)) /
                std::fabs(std::sin(delta_psi_min / 2.0));
  out.feasible = out.delta_s < kPi / (2.0 * N_c);
  return out;
}

/// Stopping value of s for a formation that was at s_at_TR when the
/// reconfiguration started. Returned on the same branch as s_at_TR and never
/// below s_at_TR + π/(8 N_c).
inline double select_stop(double s_at_TR, int N_c, const AvoidSet& avoid) {
  const double tentative = s_at_TR + kPi / (8.0 * N_c);
  const int k = avoid.violated(tentative);
  if (k == 0) return tentative;
  if (!avoid.feasible) throw std::domain_error("select_stop: no feasible ellipse for this hull radius");
  const double centre = tentative - wrap_pi(tentative - avoid.diag(k));
  return centre + avoid.delta_s;
}

// ---------------------------------------------------------------------------
// Parameter transformation

/// Re-expresses (s, psi) on curveC as parameters on curveD with the same ellipse
/// and position. s is scaled, not wrapped, so the inverse transform recovers it.
inline ParamPair transform_params(const ParamPair& p, const LissajousSpec& curveC, const LissajousSpec& curveD) {
  if (curveC.a == curveD.a && curveC.b == curveD.b)
    throw std::invalid_argument("transform_params: source and destination curves coincide");
  const double Nc = curveC.N();
  const double Nd = curveD.N();
  ParamPair out;
  out.s = Nc / Nd * p.s;
  out.psi = wrap_2pi(p.psi + (curveD.a * curveC.b - curveC.a * curveD.b) / Nc * out.s);
  return out;
}

// ---------------------------------------------------------------------------
// Destination grid

/// First destination-grid element at or after psi (one-sided, unwrapped).
inline double grid_ceil(double psi, int N_d, int o_d) {
  const double step = kTwoPi / N_d;
  const double off = o_d * kPi / 2.0;
  return std::ceil((psi - off) / step - kSnapTolerance) * step + off;
}

/// Last destination-grid element at or before psi (one-sided, unwrapped).
inline double grid_floor(double psi, int N_d, int o_d) {
  const double step = kTwoPi / N_d;
  const double off = o_d * kPi / 2.0;
  return std::floor((psi - off) / step + kSnapTolerance) * step + off;
}

/// Signed parametric travel from `from` to `to` moving only in `direction` (+1 / -1).
inline double directed_travel(double from, double to, int direction) {
  double gap = direction > 0 ? forward_gap(from, to) : forward_gap(to, from);
  if (gap > kTwoPi - kSnapTolerance) gap = 0.0;
  return direction > 0 ? gap : -gap;
}

// ---------------------------------------------------------------------------
// Assignment

/// An agent's parameter on the destination curve, after transformation.
struct FormationParam {
  int id = 0;
  double psi = 0.0;
};

struct AgentAssignment {
  int id = 0;
  double psi_d = 0.0;  // start
  double psi_D = 0.0;  // destination, element of the destination grid
  double delta = 0.0;  // signed travel psi_D - psi_d along the transition direction
  int n = 0;           // position in the chain counted from the leader
};

struct ReconfigAssignment {
  int leader_id = -1;
  int direction = +1;
  std::vector<AgentAssignment> agents;
  double delta_max = 0.0;
  double Tp = 0.0;
  double T0 = 0.0;

  const AgentAssignment* find(int id) const {
    for (const auto& a : agents)
      if (a.id == id) return &a;
    return nullptr;
  }
};

/// What the leader broadcasts so every agent can derive its own destination.
struct LeaderInfo {
  int leader_id = -1;
  int direction = +1;
  double leader_psi_d = 0.0;
  double leader_psi_D = 0.0;
  int N_c = 0;
  int N_d = 0;
};

/// Chain count of an agent from the leader along the transition direction.
inline int chain_index(double psi_d, const LeaderInfo& info) {
  const double gap = info.direction > 0 ? forward_gap(info.leader_psi_d, psi_d) : forward_gap(psi_d, info.leader_psi_d);
  const int n = static_cast<int>(std::lround(gap * info.N_c / kTwoPi));
  return n % info.N_c;
}

/// Destination of one agent under the leader-anchored chain rule (removal).
inline AgentAssignment chain_destination(int id, double psi_d, const LeaderInfo& info) {
  AgentAssignment a;
  a.id = id;
  a.psi_d = psi_d;
  a.n = chain_index(psi_d, info);
  a.psi_D = wrap_2pi(info.leader_psi_D + info.direction * kTwoPi * a.n / info.N_d);
  a.delta = directed_travel(psi_d, a.psi_D, info.direction);
  return a;
}

namespace detail {

inline const FormationParam& by_id(std::span<const FormationParam> agents, int id) {
  for (const auto& a : agents)
    if (a.id == id) return a;
  throw std::invalid_argument("reconfig: unknown agent id");
}

/// Agent whose psi is the nearest strictly ahead of (direction +1) or behind
/// (direction -1) `psi`.
inline const FormationParam& neighbour(std::span<const FormationParam> agents, double psi, int skip_id, int direction) {
  const FormationParam* best = nullptr;
  double best_gap = kTwoPi + 1.0;
  for (const auto& a : agents) {
    if (a.id == skip_id) continue;
    const double gap = direction > 0 ? forward_gap(psi, a.psi) : forward_gap(a.psi, psi);
    if (gap < best_gap) {
      best_gap = gap;
      best = &a;
    }
  }
  if (best == nullptr) throw std::invalid_argument("reconfig: formation has no neighbour");
  return *best;
}

}  // namespace detail

struct RemovalLeader {
  int i_n = -1;
  int i_p = -1;
  double delta_n = 0.0;
  double delta_p = 0.0;
  LeaderInfo info;
};

/// Leader choice for removal: the neighbour of the removed agent with the
/// shorter trip to the destination grid; ties go to the succeeding neighbour.
inline RemovalLeader removal_leader(std::span<const FormationParam> agents, int removed_id, int N_c,
                                    const LissajousSpec& curveD) {
  const int N_d = N_c - 1;
  if (N_d < 2) throw std::invalid_argument("removal: fewer than two agents would remain");
  if (curveD.N() != N_d) throw std::invalid_argument("removal: destination curve does not match N_c - 1");
  const FormationParam& removed = detail::by_id(agents, removed_id);
  const FormationParam& next = detail::neighbour(agents, removed.psi, removed_id, +1);
  const FormationParam& prev = detail::neighbour(agents, removed.psi, removed_id, -1);

  RemovalLeader out;
  out.i_n = next.id;
  out.i_p = prev.id;
  const double n_cl = grid_ceil(next.psi, N_d, curveD.o);
  const double p_cl = grid_floor(prev.psi, N_d, curveD.o);
  out.delta_n = n_cl - next.psi;
  out.delta_p = prev.psi - p_cl;

  out.info.N_c = N_c;
  out.info.N_d = N_d;
  if (out.delta_n <= out.delta_p + kTieTolerance) {
    out.info.leader_id = next.id;
    out.info.direction = +1;
    out.info.leader_psi_d = next.psi;
    out.info.leader_psi_D = wrap_2pi(n_cl);
  } else {
    out.info.leader_id = prev.id;
    out.info.direction = -1;
    out.info.leader_psi_d = prev.psi;
    out.info.leader_psi_D = wrap_2pi(p_cl);
  }
  return out;
}

/// Longest travel of a removal, from the leader's own travel.
inline double removal_delta_max(double leader_travel, int N_c) {
  return std::fabs(leader_travel) + kTwoPi * (N_c - 2) / (static_cast<double>(N_c) * (N_c - 1));
}

/// Full removal assignment. `agents` holds every current formation agent,
/// including the removed one, with psi already on the destination curve.
inline ReconfigAssignment removal_plan(std::span<const FormationParam> agents, int removed_id, int N_c,
                                       const LissajousSpec& curveD) {
  if (static_cast<int>(agents.size()) != N_c) throw std::invalid_argument("removal: agent count differs from N_c");
  const RemovalLeader lead = removal_leader(agents, removed_id, N_c, curveD);
  ReconfigAssignment out;
  out.leader_id = lead.info.leader_id;
  out.direction = lead.info.direction;
  for (const auto& a : agents) {
    if (a.id == removed_id) continue;
    out.agents.push_back(chain_destination(a.id, a.psi, lead.info));
    out.delta_max = std::max(out.delta_max, std::fabs(out.agents.back().delta));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Addition

struct EntryDeltas {
  double delta1 = 0.0;  // travel to the nearest destination element ahead
  double delta2 = 0.0;  // positive only for the agent whose interval holds two destination elements
};

inline EntryDeltas entry_deltas(double psi_d, int N_c, int N_d, int o_d) {
  EntryDeltas d;
  d.delta1 = grid_ceil(psi_d, N_d, o_d) - psi_d;
  d.delta2 = kTwoPi / N_c - (d.delta1 + kTwoPi / N_d);
  return d;
}

inline bool holds_two_slots(const EntryDeltas& d) { return d.delta2 > kSnapTolerance; }

/// Destination for the added agent, chosen by the unique agent i_p whose
/// interval [psi_ip, psi_ip + 2π/N_c) holds two destination elements.
inline double addition_slot(double psi_ip, const EntryDeltas& d, int N_c) {
  if (d.delta1 > d.delta2 + kTieTolerance) return wrap_2pi(psi_ip + d.delta1);
  return wrap_2pi(psi_ip + kTwoPi / N_c - d.delta2);
}

struct AdditionEntry {
  int i_p = -1;
  int i_n = -1;
  double delta1 = 0.0;
  double delta2 = 0.0;
  double psi_ia_D = 0.0;
  Point2 entry_point;
};

inline AdditionEntry addition_entry(std::span<const FormationParam> agents, int N_c, int N_d,
                                    const LissajousSpec& curveD, double s_df, const Region& region) {
  if (N_d != N_c + 1) throw std::invalid_argument("addition: N_d must equal N_c + 1");
  if (curveD.N() != N_d) throw std::invalid_argument("addition: destination curve does not match N_d");
  AdditionEntry out;
  int found = 0;
  for (const auto& a : agents) {
    const EntryDeltas d = entry_deltas(a.psi, N_c, N_d, curveD.o);
    if (holds_two_slots(d)) {
      ++found;
      out.i_p = a.id;
      out.delta1 = d.delta1;
      out.delta2 = d.delta2;
    }
  }
  if (found != 1) throw std::logic_error("addition: expected exactly one agent holding two destination slots");
  const FormationParam& prev = detail::by_id(agents, out.i_p);
  out.i_n = detail::neighbour(agents, prev.psi, prev.id, +1).id;
  out.psi_ia_D = addition_slot(prev.psi, {out.delta1, out.delta2}, N_c);
  out.entry_point = position(curveD, region, out.psi_ia_D, s_df);
  return out;
}

/// Transition direction for addition: towards i_p's side when delta1 > delta2.
inline int addition_direction(const EntryDeltas& ip_deltas) { return ip_deltas.delta1 > ip_deltas.delta2 + kTieTolerance ? -1 : +1; }

/// Nearest destination element along the transition direction.
inline AgentAssignment addition_destination(int id, double psi_d, int direction, int N_d, int o_d) {
  AgentAssignment a;
  a.id = id;
  a.psi_d = psi_d;
  const double target = direction > 0 ? grid_ceil(psi_d, N_d, o_d) : grid_floor(psi_d, N_d, o_d);
  a.psi_D = wrap_2pi(target);
  a.delta = directed_travel(psi_d, a.psi_D, direction);
  return a;
}

inline ReconfigAssignment addition_plan(std::span<const FormationParam> agents, const AdditionEntry& entry, int N_c,
                                        int N_d, int o_d) {
  if (N_d != N_c + 1) throw std::invalid_argument("addition: N_d must equal N_c + 1");
  ReconfigAssignment out;
  out.direction = addition_direction({entry.delta1, entry.delta2});
  out.leader_id = out.direction < 0 ? entry.i_p : entry.i_n;
  const double leader_psi = detail::by_id(agents, out.leader_id).psi;
  LeaderInfo info{out.leader_id, out.direction, leader_psi, 0.0, N_c, N_d};
  for (const auto& a : agents) {
    AgentAssignment as = addition_destination(a.id, a.psi, out.direction, N_d, o_d);
    as.n = chain_index(a.psi, info);
    out.agents.push_back(as);
    out.delta_max = std::max(out.delta_max, std::fabs(as.delta));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Replacement

/// Point on the stopped formation directly below the agent being replaced.
inline Point2 replacement_entry(double psi_ir, double s_f, const LissajousSpec& curveC, const Region& region) {
  return position(curveC, region, psi_ir, s_f);
}

struct ExitMove {
  Point2 from;
  Vec2 normal;  // unit outward normal of the stopped ellipse
  Point2 waypoint;
};

/// Outward normal of the ellipse frozen at s_o and the exit waypoint 3 r_dm away.
inline ExitMove outward_normal(double psi, double s_o, const LissajousSpec& curve, const Region& region, double r_dm) {
  const double sign = std::cos(curve.N() * s_o) >= 0.0 ? 1.0 : -1.0;
  const Vec2 n{sign * region.B * std::cos(psi + curve.b * s_o), sign * region.A * std::sin(psi - curve.a * s_o)};
  const double len = norm(n);
  if (!(len > 1e-12)) throw std::domain_error("outward_normal: normal vanishes at a corner of a degenerate ellipse");
  ExitMove out;
  out.from = position(curve, region, psi, s_o);
  out.normal = n * (1.0 / len);
  out.waypoint = out.from + out.normal * (3.0 * r_dm);
  return out;
}

// ---------------------------------------------------------------------------
// Transition window

struct SymmetricWindow {
  double T0 = 0.0;
  double Tp = 0.0;
  double psidot_max = 0.0;
};

/// Common window that caps the longest traveller's parametric rate at V_max / sqrt(A² + B²).
inline SymmetricWindow symmetric_window(double delta_max, const Region& region, double V_max, double T0) {
  if (!(delta_max > 0.0)) throw std::invalid_argument("symmetric_window: delta_max must be positive");
  if (!(V_max > 0.0)) throw std::invalid_argument("symmetric_window: V_max must be positive");
  SymmetricWindow w;
  w.T0 = T0;
  w.Tp = 15.0 * delta_max * region.diagonal_half() / (8.0 * V_max);
  w.psidot_max = V_max / region.diagonal_half();
  return w;
}

/// psi trajectory of one agent inside the window. The end value is unwrapped
/// (psi_d + delta) so the motion never jumps across 2π.
inline SymmetricTrajectory transition_for(const AgentAssignment& a, const SymmetricWindow& w) {
  return SymmetricTrajectory::make(w.T0, w.Tp, a.psi_d, a.psi_d + a.delta);
}

inline void apply_window(ReconfigAssignment& plan, const SymmetricWindow& w) {
  plan.T0 = w.T0;
  plan.Tp = w.Tp;
}

}  // namespace lissaform
