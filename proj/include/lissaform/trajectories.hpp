#pragma once

// Minimum-jerk parameter trajectories: the monotone rate-change family (free end
// value, fixed end rate), the symmetric rest-to-rest family, and the straight-line
// waypoint transition built on the symmetric family.

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "lissaform/geometry.hpp"

namespace lissaform {

/// Value and first three time derivatives of a scalar parameter.
struct TrajectoryState {
  double g = 0.0;
  double gdot = 0.0;
  double gddot = 0.0;
  double gdddot = 0.0;
  bool clamped = false;  // t fell outside [T0, T0 + Tp]
};

/// Quartic that moves a parameter rate from gdot0 to gdotf with zero
/// acceleration at both ends. The end value is implied by the window length.
class MonotoneTrajectory {
 public:
  /// Window length chosen so the parameter lands on gf.
  static MonotoneTrajectory make(double T0, double g0, double gf, double gdot0, double gdotf) {
    const double rate_sum = gdot0 + gdotf;
    if (rate_sum == 0.0) throw std::invalid_argument("MonotoneTrajectory: gdot0 + gdotf must be non-zero");
    const double Tp = 2.0 * (gf - g0) / rate_sum;
    if (!(Tp > 0.0)) throw std::invalid_argument("MonotoneTrajectory: displacement and rates disagree in sign");
    return MonotoneTrajectory(T0, Tp, g0, gdot0, gdotf);
  }

  /// Window length given; the end value follows.
  static MonotoneTrajectory with_duration(double T0, double Tp, double g0, double gdot0, double gdotf) {
    if (!(Tp > 0.0)) throw std::invalid_argument("MonotoneTrajectory: Tp must be positive");
    return MonotoneTrajectory(T0, Tp, g0, gdot0, gdotf);
  }

  double T0() const { return T0_; }
  double Tp() const { return Tp_; }
  double Tf() const { return T0_ + Tp_; }
  double g0() const { return g0_; }
  double gf() const { return g0_ + 0.5 * Tp_ * (gdot0_ + gdotf_); }
  double gdot0() const { return gdot0_; }
  double gdotf() const { return gdotf_; }

  TrajectoryState eval(double t) const {
    if (t < T0_) return {g0_ + gdot0_ * (t - T0_), gdot0_, 0.0, 0.0, true};
    if (t > Tf()) return {gf() + gdotf_ * (t - Tf()), gdotf_, 0.0, 0.0, true};
    const double dt = t - T0_;
    const double dg = gdotf_ - gdot0_;
    const double T2 = Tp_ * Tp_;
    const double T3 = T2 * Tp_;
    const double dt2 = dt * dt;
    const double dt3 = dt2 * dt;
    TrajectoryState s;
    s.g = dg * (-dt3 * dt / (2.0 * T3) + dt3 / T2) + gdot0_ * dt + g0_;
    s.gdot = dg * (-2.0 * dt3 / T3 + 3.0 * dt2 / T2) + gdot0_;
    s.gddot = 6.0 * dg * (-dt2 / T3 + dt / T2);
    s.gdddot = 6.0 * dg * (-2.0 * dt / T3 + 1.0 / T2);
    return s;
  }

 private:
  MonotoneTrajectory(double T0, double Tp, double g0, double gdot0, double gdotf)
      : T0_(T0), Tp_(Tp), g0_(g0), gdot0_(gdot0), gdotf_(gdotf) {}

  double T0_;
  double Tp_;
  double g0_;
  double gdot0_;
  double gdotf_;
};

/// Quintic rest-to-rest transition from g0 to gf over [T0, T0 + Tp]; the rate
/// peaks at the midpoint with magnitude 15|gf - g0| / (8 Tp).
class SymmetricTrajectory {
 public:
  static SymmetricTrajectory make(double T0, double Tp, double g0, double gf) {
    if (!(Tp > 0.0)) throw std::invalid_argument("SymmetricTrajectory: Tp must be positive");
    return SymmetricTrajectory(T0, Tp, g0, gf);
  }

  double T0() const { return T0_; }
  double Tp() const { return Tp_; }
  double Tf() const { return T0_ + Tp_; }
  double g0() const { return g0_; }
  double gf() const { return gf_; }
  double peak_time() const { return T0_ + 0.5 * Tp_; }
  /// Signed rate at the midpoint.
  double peak_rate() const { return 15.0 * (gf_ - g0_) / (8.0 * Tp_); }

  TrajectoryState eval(double t) const {
    if (t < T0_) return {g0_, 0.0, 0.0, 0.0, true};
    if (t > Tf()) return {gf_, 0.0, 0.0, 0.0, true};
    const double dt = t - T0_;
    const double dg = gf_ - g0_;
    const double T = Tp_;
    const double T5 = T * T * T * T * T;
    const double k = dg / T5;
    const double rest = T - dt;
    TrajectoryState s;
    s.g = k * (10.0 * T * T - 15.0 * T * dt + 6.0 * dt * dt) * dt * dt * dt + g0_;
    s.gdot = 30.0 * k * dt * dt * rest * rest;
    s.gddot = 60.0 * k * dt * (T * T - 3.0 * T * dt + 2.0 * dt * dt);
    s.gdddot = 60.0 * k * (T * T - 6.0 * T * dt + 6.0 * dt * dt);
    return s;
  }

 private:
  SymmetricTrajectory(double T0, double Tp, double g0, double gf) : T0_(T0), Tp_(Tp), g0_(g0), gf_(gf) {}

  double T0_;
  double Tp_;
  double g0_;
  double gf_;
};

struct WaypointSample {
  Point2 p;
  Vec2 v;
  bool clamped = false;
};

/// Straight-line move p0 -> pf whose arc length follows a symmetric transition.
/// With p0 == pf the agent holds in place for Tp_floor.
class WaypointTransition {
 public:
  static WaypointTransition make(const Point2& p0, const Point2& pf, double T0, double V_max, double Tp_floor) {
    if (!(V_max > 0.0)) throw std::invalid_argument("WaypointTransition: V_max must be positive");
    if (Tp_floor < 0.0) throw std::invalid_argument("WaypointTransition: Tp_floor must be non-negative");
    const double d_f = distance(p0, pf);
    const double Tp = std::max(Tp_floor, 15.0 * d_f / (8.0 * V_max));
    return WaypointTransition(p0, pf, T0, Tp, d_f);
  }

  /// Minimum window for a peak speed of exactly V_max over distance d_f.
  static double min_duration(double d_f, double V_max) { return 15.0 * d_f / (8.0 * V_max); }

  const Point2& p0() const { return p0_; }
  const Point2& pf() const { return pf_; }
  double T0() const { return T0_; }
  double Tp() const { return Tp_; }
  double Tf() const { return T0_ + Tp_; }
  double length() const { return d_f_; }
  double peak_speed() const { return Tp_ > 0.0 ? 15.0 * d_f_ / (8.0 * Tp_) : 0.0; }

  WaypointSample eval(double t) const {
    const bool clamped = t < T0_ || t > Tf();
    if (d_f_ == 0.0 || Tp_ == 0.0) return {t < Tf() ? p0_ : pf_, {0.0, 0.0}, clamped};
    const TrajectoryState s = SymmetricTrajectory::make(T0_, Tp_, 0.0, d_f_).eval(t);
    const Vec2 dir = (pf_ - p0_) * (1.0 / d_f_);
    return {p0_ + dir * s.g, dir * s.gdot, s.clamped};
  }

 private:
  WaypointTransition(const Point2& p0, const Point2& pf, double T0, double Tp, double d_f)
      : p0_(p0), pf_(pf), T0_(T0), Tp_(Tp), d_f_(d_f) {}

  Point2 p0_;
  Point2 pf_;
  double T0_;
  double Tp_;
  double d_f_;
};

}  // namespace lissaform
