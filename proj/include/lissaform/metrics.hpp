#pragma once

// Trace-derived safety and performance metrics. Everything here reads only a
// SimTrace and the formation constants, so a saved trace re-verifies to the
// same report.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "curve_core.hpp"
#include "trace.hpp"

namespace lissaform {

/// Constants the verifier needs, echoed next to every trace.
struct VerifyConfig {
  Region region;
  double r_s = 0.0;
  double r_dm = 0.0;
  double V_max = 0.0;
  double T_cov = 0.0;
  double coverage_start = 0.0;
  double speed_tolerance = 1e-6;  // relative
  double reconfig_tolerance = 1e-9;
  bool check_collision = true;
  bool check_speed = true;
  bool check_coverage = true;
  bool check_ring = true;
  bool check_reconfig = true;
};

struct TraceMetrics {
  bool has_data = false;
  double t_end = 0.0;
  double min_pair_dist = std::numeric_limits<double>::infinity();
  double min_pair_t = 0.0;
  int min_pair_a = -1;
  int min_pair_b = -1;
  long close_ticks = 0;  // ticks with a same-band pair at or below 2 r_dm
  double first_close_t = -1.0;
  double max_speed = 0.0;
  double max_speed_t = 0.0;
  int max_speed_id = -1;
  double max_adjacent_dist = 0.0;
  double max_adjacent_t = 0.0;
  long ring_ticks = 0;
  double coverage_fraction = 0.0;
  bool coverage_window_complete = false;
  long violation_events = 0;
  std::vector<ojson> reconfigs;
  std::vector<ojson> phases;
};

/// Groups consecutive records sharing a timestamp.
template <class F>
void for_each_tick(const SimTrace& trace, F&& f) {
  const auto& r = trace.records();
  size_t i = 0;
  while (i < r.size()) {
    size_t j = i;
    while (j < r.size() && r[j].t == r[i].t) ++j;
    f(r[i].t, &r[i], &r[j]);
    i = j;
  }
}

/// Fraction of grid cells of the region whose centres come within r_s of some
/// airborne agent position recorded in [t0, t0 + window].
inline double coverage_check(const SimTrace& trace, const Region& region, double r_s, double t0, double window,
                             double cell = 0.0) {
  if (!(cell > 0.0)) cell = r_s / 10.0;
  const int nx = std::max(1, static_cast<int>(std::ceil(2.0 * region.A / cell)));
  const int ny = std::max(1, static_cast<int>(std::ceil(2.0 * region.B / cell)));
  const double cx = 2.0 * region.A / nx;
  const double cy = 2.0 * region.B / ny;
  std::vector<char> hit(static_cast<size_t>(nx) * ny, 0);
  size_t covered = 0;
  const double r2 = r_s * r_s;
  for (const auto& rec : trace.records()) {
    if (rec.t < t0 - 1e-12 || rec.t > t0 + window + 1e-12 || !rec.airborne()) continue;
    const int i0 = std::max(0, static_cast<int>(std::floor((rec.x - r_s + region.A) / cx)));
    const int i1 = std::min(nx - 1, static_cast<int>(std::floor((rec.x + r_s + region.A) / cx)));
    const int j0 = std::max(0, static_cast<int>(std::floor((rec.y - r_s + region.B) / cy)));
    const int j1 = std::min(ny - 1, static_cast<int>(std::floor((rec.y + r_s + region.B) / cy)));
    for (int i = i0; i <= i1; ++i) {
      const double px = -region.A + (i + 0.5) * cx;
      for (int j = j0; j <= j1; ++j) {
        char& h = hit[static_cast<size_t>(i) * ny + j];
        if (h) continue;
        const double py = -region.B + (j + 0.5) * cy;
        const double dx = px - rec.x;
        const double dy = py - rec.y;
        if (dx * dx + dy * dy <= r2) {
          h = 1;
          ++covered;
        }
      }
    }
  }
  return static_cast<double>(covered) / static_cast<double>(hit.size());
}

inline TraceMetrics compute_metrics(const SimTrace& trace, const VerifyConfig& cfg) {
  TraceMetrics m;
  m.has_data = !trace.records().empty();
  for (const auto& e : trace.events()) {
    const std::string name = e.body.value("event", "");
    if (name == "violation") ++m.violation_events;
    if (name == "reconfig_complete") m.reconfigs.push_back(e.body);
    if (name == "phase") m.phases.push_back(e.body);
  }
  if (!m.has_data) return m;
  m.t_end = trace.records().back().t;
  const double band = 2.0 * cfg.r_dm;

  for_each_tick(trace, [&](double t, const AgentRecord* b, const AgentRecord* e) {
    bool close = false;
    bool all_surveil = true;
    std::vector<const AgentRecord*> ring;
    for (const AgentRecord* p = b; p != e; ++p) {
      if (!p->airborne()) continue;
      if (p->speed > m.max_speed) {
        m.max_speed = p->speed;
        m.max_speed_t = t;
        m.max_speed_id = p->id;
      }
      if (p->mode == Mode::Surveil)
        ring.push_back(p);
      else
        all_surveil = false;
      for (const AgentRecord* q = p + 1; q != e; ++q) {
        if (!q->airborne() || std::fabs(p->z - q->z) >= band) continue;
        const double d = std::hypot(p->x - q->x, p->y - q->y);
        if (d < m.min_pair_dist) {
          m.min_pair_dist = d;
          m.min_pair_t = t;
          m.min_pair_a = p->id;
          m.min_pair_b = q->id;
        }
        if (d <= band) close = true;
      }
    }
    if (close) {
      if (m.close_ticks == 0) m.first_close_t = t;
      ++m.close_ticks;
    }
    // Ring closure: adjacency on the formation ellipse is polar-angle order about the centre.
    if (all_surveil && ring.size() >= 2) {
      ++m.ring_ticks;
      std::sort(ring.begin(), ring.end(), [](const AgentRecord* u, const AgentRecord* v) {
        return std::atan2(u->y, u->x) < std::atan2(v->y, v->x);
      });
      for (size_t i = 0; i < ring.size(); ++i) {
        const AgentRecord* u = ring[i];
        const AgentRecord* v = ring[(i + 1) % ring.size()];
        const double d = std::hypot(u->x - v->x, u->y - v->y);
        if (d > m.max_adjacent_dist) {
          m.max_adjacent_dist = d;
          m.max_adjacent_t = t;
        }
      }
    }
  });

  m.coverage_window_complete = m.t_end >= cfg.coverage_start + cfg.T_cov - 1e-9;
  m.coverage_fraction = coverage_check(trace, cfg.region, cfg.r_s, cfg.coverage_start, cfg.T_cov);
  return m;
}

struct Criterion {
  std::string name;
  bool pass = false;
  double value = 0.0;
  double limit = 0.0;
  std::string detail;
};

struct VerifyReport {
  TraceMetrics metrics;
  std::vector<Criterion> criteria;

  bool no_data() const { return !metrics.has_data; }
  bool pass() const {
    return std::all_of(criteria.begin(), criteria.end(), [](const Criterion& c) { return c.pass; });
  }
};

inline VerifyReport verify_trace(const SimTrace& trace, const VerifyConfig& cfg) {
  VerifyReport rep;
  rep.metrics = compute_metrics(trace, cfg);
  const TraceMetrics& m = rep.metrics;
  if (!m.has_data) return rep;

  if (cfg.check_collision) {
    Criterion c{"collision", m.close_ticks == 0 && m.min_pair_dist > 2.0 * cfg.r_dm, m.min_pair_dist, 2.0 * cfg.r_dm, ""};
    if (m.close_ticks > 0)
      c.detail = std::to_string(m.close_ticks) + " ticks within 2 r_dm, first at t=" + std::to_string(m.first_close_t);
    else if (std::isfinite(m.min_pair_dist))
      c.detail = "closest pair " + std::to_string(m.min_pair_a) + "-" + std::to_string(m.min_pair_b) +
                 " at t=" + std::to_string(m.min_pair_t);
    rep.criteria.push_back(c);
  }
  if (cfg.check_speed) {
    const double lim = cfg.V_max * (1.0 + cfg.speed_tolerance);
    rep.criteria.push_back({"speed", m.max_speed <= lim, m.max_speed, lim,
                            "agent " + std::to_string(m.max_speed_id) + " at t=" + std::to_string(m.max_speed_t)});
  }
  if (cfg.check_coverage) {
    Criterion c{"coverage", m.coverage_window_complete && m.coverage_fraction >= 1.0, m.coverage_fraction, 1.0, ""};
    if (!m.coverage_window_complete) c.detail = "trace ends before the coverage window closes";
    rep.criteria.push_back(c);
  }
  if (cfg.check_ring) {
    Criterion c{"ring_closure", m.ring_ticks > 0 && m.max_adjacent_dist <= 2.0 * cfg.r_s, m.max_adjacent_dist,
                2.0 * cfg.r_s, "worst at t=" + std::to_string(m.max_adjacent_t)};
    if (m.ring_ticks == 0) c.detail = "no tick with the whole formation surveilling";
    rep.criteria.push_back(c);
  }
  if (cfg.check_reconfig) {
    double worst_gap = 0.0;
    double worst_res = 0.0;
    bool rate_ok = true;
    for (const auto& r : m.reconfigs) {
      worst_gap = std::max(worst_gap, r.value("max_gap_error", 0.0));
      worst_res = std::max(worst_res, r.value("max_residual", 0.0));
      if (r.value("max_sym_rate", 0.0) > r.value("sym_rate_limit", 0.0) + cfg.reconfig_tolerance) rate_ok = false;
    }
    const double worst = std::max(worst_gap, worst_res);
    Criterion c{"reconfiguration", rate_ok && worst <= cfg.reconfig_tolerance && m.violation_events == 0, worst,
                cfg.reconfig_tolerance,
                std::to_string(m.reconfigs.size()) + " completed, " + std::to_string(m.violation_events) + " violation events"};
    rep.criteria.push_back(c);
  }
  return rep;
}

inline ojson report_json(const VerifyReport& rep) {
  ojson j;
  if (rep.no_data()) {
    j["status"] = "no data";
    j["criteria"] = ojson::array();
    return j;
  }
  j["status"] = rep.pass() ? "pass" : "fail";
  const TraceMetrics& m = rep.metrics;
  ojson metrics;
  metrics["t_end"] = m.t_end;
  metrics["min_pair_dist"] = std::isfinite(m.min_pair_dist) ? ojson(m.min_pair_dist) : ojson(nullptr);
  metrics["min_pair_t"] = m.min_pair_t;
  metrics["close_ticks"] = m.close_ticks;
  metrics["max_speed"] = m.max_speed;
  metrics["max_speed_t"] = m.max_speed_t;
  metrics["max_adjacent_dist"] = m.max_adjacent_dist;
  metrics["coverage_fraction"] = m.coverage_fraction;
  metrics["violation_events"] = m.violation_events;
  metrics["reconfigurations"] = m.reconfigs;
  metrics["phases"] = m.phases;
  j["metrics"] = metrics;
  ojson cs = ojson::array();
  for (const auto& c : rep.criteria) {
    ojson cj;
    cj["name"] = c.name;
    cj["pass"] = c.pass;
    cj["value"] = c.value;
    cj["limit"] = c.limit;
    cj["detail"] = c.detail;
    cs.push_back(cj);
  }
  j["criteria"] = cs;
  return j;
}

}  // namespace lissaform
