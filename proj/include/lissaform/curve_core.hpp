#pragma once

// Closed-form geometry of agent formations on non-degenerate Lissajous curves:
// positions, velocities, the instantaneous formation ellipse, pair distances,
// sensing/communication/size bounds, curve selection and mission initialization.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "lissaform/geometry.hpp"

namespace lissaform {

/// Half-dimensions of the patrolled rectangle [-A, A] x [-B, B].
struct Region {
  double A = 0.0;
  double B = 0.0;

  static Region from_half_extents(double A, double B) {
    if (!(A > 0.0) || !(B > 0.0)) throw std::invalid_argument("Region: A and B must be positive");
    return Region{A, B};
  }
  static Region from_extents(double L, double H) { return from_half_extents(L / 2.0, H / 2.0); }

  double length() const { return 2.0 * A; }
  double height() const { return 2.0 * B; }
  double diagonal_half() const { return std::hypot(A, B); }
};

/// Curve constants (a, b) and the phase-offset flag o; offset = o * π/2.
struct LissajousSpec {
  int a = 1;
  int b = 1;
  int o = 0;

  int N() const { return a + b; }
  double offset() const { return o * kPi / 2.0; }

  bool valid() const {
    if (a < 1 || b < 1 || (o != 0 && o != 1)) return false;
    if (std::gcd(a, b) != 1) return false;
    return o == 1 - (a % 2);
  }

  /// Builds the spec for co-prime (a, b), deriving the non-degeneracy offset.
  static LissajousSpec make(int a, int b) {
    LissajousSpec s{a, b, 1 - (a % 2)};
    if (!s.valid()) throw std::invalid_argument("LissajousSpec: (a, b) must be co-prime positive integers");
    return s;
  }

  friend bool operator==(const LissajousSpec&, const LissajousSpec&) = default;
};

struct FormationConfig {
  int N = 0;
  double sdot_nom = 0.0;
  double r_s = 0.0;
  double r_com = 0.0;
  double r_sm = 0.0;
  double r_cm = 0.0;
  double r_du = 0.0;
  double r_dm = 0.0;
  double T_cov = 0.0;
  int N_min = 0;
  int N_max = 0;
  double V_max = 0.0;
  double eta = 1.0;
  double h_F = 1.5;
  double h_L = 0.5;
};

// ---------------------------------------------------------------------------
// Pointwise geometry

/// Agent position for ellipse parameter psi and running curve parameter s.
inline Point2 position(const LissajousSpec& spec, const Region& region, double psi, double s) {
  return {region.A * std::cos(psi - spec.a * s), region.B * std::sin(psi + spec.b * s)};
}

struct Velocity {
  Vec2 v;
  double speed = 0.0;
};

inline Velocity velocity(const LissajousSpec& spec, const Region& region, double psi, double s,
                         double psidot, double sdot) {
  Vec2 v{-region.A * std::sin(psi - spec.a * s) * (psidot - spec.a * sdot),
         region.B * std::cos(psi + spec.b * s) * (psidot + spec.b * sdot)};
  return {v, norm(v)};
}

/// Residual of the formation-ellipse equation for parameter s; zero on the locus.
inline double ellipse_residual(const Region& region, const Point2& p, double s, int N) {
  const double A = region.A;
  const double B = region.B;
  const double ns = N * s;
  const double c = std::cos(ns);
  return p.y * p.y / (B * B) + p.x * p.x / (A * A) - 2.0 * p.x * p.y * std::sin(ns) / (A * B) - c * c;
}

/// Euclidean distance between the agents at psi_i and psi_j on a common s (non-negative).
inline double pair_distance(const Region& region, const LissajousSpec& spec, double psi_i, double psi_j,
                            double s) {
  const double pp = 0.5 * (psi_i + psi_j);
  const double pm = 0.5 * (psi_i - psi_j);
  const double sa = std::sin(pp - spec.a * s);
  const double cb = std::cos(pp + spec.b * s);
  return std::fabs(2.0 * std::sin(pm)) *
         std::sqrt(region.A * region.A * sa * sa + region.B * region.B * cb * cb);
}

// ---------------------------------------------------------------------------
// Formation bounds

/// sqrt(A²a² + B²b²), the peak of |d(position)/ds| along the curve.
inline double curve_speed_scale(const Region& region, const LissajousSpec& spec) {
  return std::hypot(region.A * spec.a, region.B * spec.b);
}

struct Bounds {
  double r_sm = 0.0;      // minimum sensing radius for overlapping footprints
  double r_cm = 0.0;      // minimum communication radius for adjacent links
  double r_du = 0.0;      // hull-radius bound for collision-free surveillance
  double T_cov = 0.0;     // collective coverage time
  double D_M = 0.0;       // upper bound on adjacent-agent distance
  double sdot_nom = 0.0;  // nominal parametric rate
};

inline Bounds bounds(const Region& region, const LissajousSpec& spec, int N, double eta, double V_max) {
  if (N != spec.N()) throw std::invalid_argument("bounds: N must equal a + b");
  const double diag = region.diagonal_half();
  const double scale = curve_speed_scale(region, spec);
  const double sin_n = std::sin(kPi / N);
  Bounds out;
  out.D_M = 2.0 * sin_n * diag;
  out.r_sm = eta * sin_n * diag;
  out.r_cm = 2.0 * out.r_sm;
  out.r_du = sin_n * region.A * region.B / scale;
  out.sdot_nom = V_max / scale;
  out.T_cov = kTwoPi * scale / (N * V_max);
  return out;
}

// ---------------------------------------------------------------------------
// Curve selection

/// Nearest co-prime split a + b = N to a* = B²N / (A² + B²), searched alternately
/// outward from the rounded a*; ties between ceil and floor go to the ceil side.
inline LissajousSpec curve_select(double A, double B, int N) {
  if (N < 2) throw std::invalid_argument("curve_select: N must be at least 2");
  if (!(A > 0.0) || !(B > 0.0)) throw std::invalid_argument("curve_select: A and B must be positive");

  const double a_star = B * B * N / (A * A + B * B);
  const double d_u = std::ceil(a_star) - a_star;
  const double d_l = a_star - std::floor(a_star);

  int k = 0;
  int m = 0;
  if (d_u <= d_l || a_star < 1.0) {
    k = static_cast<int>(std::ceil(a_star));
    m = 0;
  }
  if (d_u > d_l || a_star > N - 1) {
    k = static_cast<int>(std::floor(a_star));
    m = 1;
  }
  for (int c = 1; std::gcd(k, N - k) != 1; ++c) {
    k += ((c + m) % 2 == 0 ? 1 : -1) * c;
  }
  if (k < 1 || k > N - 1) throw std::logic_error("curve_select: search left the admissible range");
  return LissajousSpec{k, N - k, k % 2 == 0 ? 1 : 0};
}

// ---------------------------------------------------------------------------
// Mission initialization

struct InitInputs {
  double L = 0.0;
  double H = 0.0;
  double r_s = 0.0;
  double r_com = 0.0;
  double V_max = 0.0;
  int N_extra = 1;
  double eta = 1.0;
  double h_F = 1.5;
  double h_L = 0.5;
};

struct Mission {
  Region region;
  LissajousSpec curve;
  FormationConfig config;
  int N_s = 0;  // agents needed for overlapping sensor footprints
  int N_c = 0;  // agents needed for adjacent communication links
  std::vector<double> initial_psi;
  std::vector<Point2> initial_positions;
};

/// Formation slot psi for agent index i in [0, N).
inline double slot_psi(const LissajousSpec& spec, int i) {
  return wrap_2pi(kTwoPi * i / spec.N() + spec.offset());
}

inline Mission initialize(const InitInputs& in) {
  if (!(in.L > 0.0) || !(in.H > 0.0) || !(in.r_s > 0.0) || !(in.r_com > 0.0) || !(in.V_max > 0.0))
    throw std::invalid_argument("initialize: lengths and V_max must be positive");
  if (in.N_extra <= 0) throw std::invalid_argument("initialize: N_extra must be positive");
  if (!(in.eta >= 1.0)) throw std::invalid_argument("initialize: eta must be >= 1");
  if (!(in.h_L > 0.0) || !(in.h_F > in.h_L)) throw std::invalid_argument("initialize: need 0 < h_L < h_F");

  Mission m;
  m.region = Region::from_extents(in.L, in.H);
  const double A = m.region.A;
  const double B = m.region.B;
  const double R = in.eta * m.region.diagonal_half();

  const double r1 = in.r_s < R ? in.r_s : R;
  const double r2 = in.r_com < 2.0 * R ? in.r_com : 2.0 * R;
  m.N_s = static_cast<int>(std::ceil(kPi / std::fabs(std::asin(r1 / R))));
  m.N_c = static_cast<int>(std::ceil(kPi / std::fabs(std::asin(r2 / (2.0 * R)))));

  FormationConfig& cfg = m.config;
  cfg.N_min = std::max(m.N_s, m.N_c);
  cfg.N_max = cfg.N_min + in.N_extra;

  double hull_min = 0.0;
  for (int j = 0; j <= in.N_extra; ++j) {
    const LissajousSpec sj = curve_select(A, B, cfg.N_min + j);
    const double r_dj = A * B / curve_speed_scale(m.region, sj);
    if (j == 0 || r_dj < hull_min) hull_min = r_dj;
  }
  cfg.r_dm = hull_min * std::sin(kPi / cfg.N_max);

  cfg.N = cfg.N_min + 1;
  m.curve = curve_select(A, B, cfg.N);

  const Bounds bd = bounds(m.region, m.curve, cfg.N, in.eta, in.V_max);
  cfg.sdot_nom = bd.sdot_nom;
  cfg.r_sm = bd.r_sm;
  cfg.r_cm = bd.r_cm;
  cfg.r_du = bd.r_du;
  cfg.T_cov = bd.T_cov;
  cfg.r_s = in.r_s;
  cfg.r_com = in.r_com;
  cfg.V_max = in.V_max;
  cfg.eta = in.eta;
  cfg.h_F = in.h_F;
  cfg.h_L = in.h_L;

  for (int i = 0; i < cfg.N; ++i) {
    const double psi = slot_psi(m.curve, i);
    m.initial_psi.push_back(psi);
    m.initial_positions.push_back(position(m.curve, m.region, psi, 0.0));
  }
  return m;
}

}  // namespace lissaform
