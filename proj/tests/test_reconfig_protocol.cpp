#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "lissaform/reconfig_protocol.hpp"

using namespace lissaform;

namespace {

const Region kSim1{5.0, 3.5};
constexpr double kRdm = 0.481;

std::vector<FormationParam> ring(int N, double rotation) {
  std::vector<FormationParam> out;
  for (int i = 0; i < N; ++i) out.push_back({i + 1, wrap_2pi(rotation + kTwoPi * i / N)});
  return out;
}

// Sorted destination angles must be evenly spaced by 2π/N.
void expect_even(std::vector<double> psi, int N) {
  ASSERT_EQ(static_cast<int>(psi.size()), N);
  std::sort(psi.begin(), psi.end());
  for (int k = 0; k < N; ++k) EXPECT_NEAR(forward_gap(psi[k], psi[(k + 1) % N]), kTwoPi / N, 1e-9);
}

bool on_grid(double psi, int N, int o) {
  const double x = (psi - o * kPi / 2) * N / kTwoPi;
  return std::fabs(x - std::round(x)) < 1e-9;
}

// Smallest distance between two agents psi_gap apart sweeping the whole ellipse at s.
double transit_min_distance(double s, double psi_gap, int samples = 720) {
  const LissajousSpec c{2, 3, 1};
  double best = 1e9;
  for (int k = 0; k < samples; ++k) {
    const double psi = kTwoPi * k / samples;
    best = std::min(best, pair_distance(kSim1, c, psi, psi + psi_gap, s));
  }
  return best;
}

}  // namespace

TEST(AvoidSet, HalfWidth) {
  const AvoidSet a = avoid_set(5, kRdm, kSim1, kTwoPi / 5);
  const double expected = (kPi / 10) * (kRdm * std::sqrt(37.25) / 17.5) / std::sin(kPi / 5);
  EXPECT_NEAR(a.delta_s, expected, 1e-15);
  EXPECT_NEAR(a.delta_s, 0.0897, 1e-4);
  EXPECT_TRUE(a.feasible);
  EXPECT_EQ(a.intervals().size(), 10u);
  EXPECT_NEAR(avoid_set(5, kRdm, kSim1, kTwoPi / 6).delta_s, 0.10540, 1e-4);
}

TEST(AvoidSet, LimitsAndMonotonicity) {
  EXPECT_EQ(avoid_set(5, 0.0, kSim1, kTwoPi / 5).delta_s, 0.0);
  double prev = 1e9;
  for (double d = 0.2; d <= kPi; d += 0.1) {
    const double w = avoid_set(5, kRdm, kSim1, d).delta_s;
    EXPECT_LE(w, prev);
    prev = w;
  }
  EXPECT_LE(avoid_set(5, kRdm, kSim1, kPi).delta_s, prev);
  EXPECT_FALSE(avoid_set(5, 3.0, kSim1, kTwoPi / 5).feasible);
  EXPECT_THROW(avoid_set(5, kRdm, kSim1, 0.0), std::invalid_argument);
  EXPECT_THROW(avoid_set(5, kRdm, kSim1, 4.0), std::invalid_argument);
}

TEST(AvoidSet, IntervalsDisjoint) {
  const AvoidSet a = avoid_set(5, kRdm, kSim1, kTwoPi / 6);
  const auto iv = a.intervals();
  for (size_t k = 0; k + 1 < iv.size(); ++k) EXPECT_LT(iv[k].second, iv[k + 1].first);
  EXPECT_LT(iv.back().second, iv.front().first + kTwoPi);
}

TEST(AvoidSet, SufficiencyAgainstBruteForce) {
  for (int gapN : {5, 6}) {
    const AvoidSet a = avoid_set(5, kRdm, kSim1, kTwoPi / gapN);
    for (int k = 0; k < 2000; ++k) {
      const double s = kTwoPi * k / 2000;
      if (a.contains(s)) continue;
      ASSERT_GT(transit_min_distance(s, kTwoPi / gapN, 360), 2 * kRdm) << "s=" << s;
    }
  }
}

TEST(SelectStop, OutsideIsUnchanged) {
  const AvoidSet a = avoid_set(5, kRdm, kSim1, kTwoPi / 5);
  const double s = 0.5;
  ASSERT_FALSE(a.contains(s + kPi / 40));
  EXPECT_DOUBLE_EQ(select_stop(s, 5, a), s + kPi / 40);
}

TEST(SelectStop, ShiftsPastViolatedInterval) {
  const AvoidSet a = avoid_set(5, kRdm, kSim1, kTwoPi / 5);
  EXPECT_NEAR(select_stop(a.diag(1) - kPi / 40, 5, a), a.diag(1) + a.delta_s, 1e-15);
  const double just_below = a.diag(1) - kPi / 40 - 0.01;
  const double out = select_stop(just_below, 5, a);
  EXPECT_NEAR(out, a.diag(1) + a.delta_s, 1e-15);
  EXPECT_FALSE(a.contains(out + 1e-12));
  EXPECT_GE(out, just_below + kPi / 40);
}

TEST(SelectStop, StaysOnBranchForLargeS) {
  const AvoidSet a = avoid_set(5, kRdm, kSim1, kTwoPi / 5);
  const double base = 7 * kTwoPi;
  const double out = select_stop(base + a.diag(3) - kPi / 40, 5, a);
  EXPECT_NEAR(out, base + a.diag(3) + a.delta_s, 1e-12);
  std::mt19937 rng(4);
  std::uniform_real_distribution<double> any(0.0, 60.0);
  for (int i = 0; i < 10000; ++i) {
    const double s = any(rng);
    const double f = select_stop(s, 5, a);
    ASSERT_GE(f, s + kPi / 40 - 1e-12);
    ASSERT_LE(f, s + kPi / 40 + 2 * a.delta_s + 1e-12);
    ASSERT_FALSE(a.contains(f + 1e-12));
  }
}

TEST(Transform, Examples) {
  const LissajousSpec c{2, 3, 1}, d{1, 5, 0};
  const ParamPair z = transform_params({0.0, 1.1}, c, d);
  EXPECT_EQ(z.s, 0.0);
  EXPECT_NEAR(z.psi, 1.1, 1e-15);
  const ParamPair p = transform_params({1.0, 0.3}, c, d);
  EXPECT_NEAR(p.s, 5.0 / 6.0, 1e-15);
  EXPECT_NEAR(p.psi, wrap_2pi(0.3 - 7.0 / 5.0 * 5.0 / 6.0), 1e-12);
  const Point2 before = position(c, kSim1, 0.3, 1.0);
  const Point2 after = position(d, kSim1, p.psi, p.s);
  EXPECT_NEAR(distance(before, after), 0.0, 1e-12);
  EXPECT_THROW(transform_params({0, 0}, c, c), std::invalid_argument);
}

TEST(Transform, PreservesPositionAndInverts) {
  std::mt19937 rng(13);
  std::uniform_real_distribution<double> ang(0.0, kTwoPi);
  std::uniform_real_distribution<double> big(0.0, 200.0);
  const LissajousSpec pairs[][2] = {{{2, 3, 1}, {1, 3, 0}}, {{2, 3, 1}, {1, 5, 0}}, {{4, 11, 1}, {3, 13, 0}},
                                    {{3, 7, 0}, {4, 5, 1}}};
  for (const auto& pr : pairs) {
    for (int i = 0; i < 10000; ++i) {
      const ParamPair p{i % 2 ? big(rng) : ang(rng), ang(rng)};
      const ParamPair q = transform_params(p, pr[0], pr[1]);
      ASSERT_NEAR(distance(position(pr[0], kSim1, p.psi, p.s), position(pr[1], kSim1, q.psi, q.s)), 0.0, 1e-10);
      const ParamPair back = transform_params(q, pr[1], pr[0]);
      ASSERT_NEAR(back.s, p.s, 1e-10 * std::max(1.0, p.s));
      ASSERT_NEAR(wrap_pi(back.psi - p.psi), 0.0, 1e-10);
    }
  }
}

TEST(Removal, ClosedFormDeltaMax) {
  const LissajousSpec d{1, 3, 0};
  const auto agents = ring(5, 0.37);
  const ReconfigAssignment plan = removal_plan(agents, 3, 5, d);
  const AgentAssignment* leader = plan.find(plan.leader_id);
  ASSERT_NE(leader, nullptr);
  EXPECT_NEAR(plan.delta_max, removal_delta_max(leader->delta, 5), 1e-12);
  EXPECT_NEAR(plan.delta_max - std::fabs(leader->delta), kTwoPi * 3 / 20, 1e-12);
}

TEST(Removal, RemovedOnGridLeaderStaysPut) {
  // Rotation chosen so the succeeding neighbour already sits on the destination grid.
  const LissajousSpec d{1, 3, 0};
  const auto agents = ring(5, kTwoPi / 4 - kTwoPi / 5);
  const ReconfigAssignment plan = removal_plan(agents, 1, 5, d);
  EXPECT_EQ(plan.leader_id, 2);
  EXPECT_EQ(plan.direction, +1);
  for (const auto& a : plan.agents) EXPECT_NEAR(std::fabs(a.delta), a.n * (kTwoPi / 4 - kTwoPi / 5), 1e-12);
}

TEST(Removal, TieSelectsSucceedingNeighbour) {
  // Removed agent midway between two grid points: both neighbours are equidistant.
  const LissajousSpec d{1, 3, 0};
  const double rot = kTwoPi / 8;  // removed agent at π/4, grid at multiples of π/2
  const auto agents = ring(5, rot);
  const RemovalLeader lead = removal_leader(agents, 1, 5, d);
  ASSERT_NEAR(lead.delta_n, lead.delta_p, 1e-12);
  EXPECT_EQ(lead.info.leader_id, lead.i_n);
  EXPECT_EQ(lead.info.direction, +1);
}

TEST(Removal, RandomizedBijectionAndChainIdentity) {
  std::mt19937 rng(17);
  std::uniform_real_distribution<double> ang(0.0, kTwoPi);
  for (int Nc = 3; Nc <= 12; ++Nc) {
    for (int o = 0; o <= 1; ++o) {
      for (int trial = 0; trial < 200; ++trial) {
        const int Nd = Nc - 1;
        const LissajousSpec d{o == 1 ? 2 : 1, o == 1 ? Nd - 2 : Nd - 1, o};
        if (d.b < 1) continue;
        const auto agents = ring(Nc, ang(rng));
        const int removed = 1 + static_cast<int>(rng() % Nc);
        const ReconfigAssignment plan = removal_plan(agents, removed, Nc, d);
        ASSERT_EQ(static_cast<int>(plan.agents.size()), Nd);
        const AgentAssignment* L = plan.find(plan.leader_id);
        std::vector<double> dest;
        for (const auto& a : plan.agents) {
          ASSERT_TRUE(on_grid(a.psi_D, Nd, o));
          ASSERT_NEAR(std::fabs(a.delta) - std::fabs(L->delta), a.n * (kTwoPi / Nd - kTwoPi / Nc), 1e-9);
          ASSERT_NEAR(wrap_pi(a.psi_d + a.delta - a.psi_D), 0.0, 1e-9);
          ASSERT_LE(std::fabs(a.delta), plan.delta_max + 1e-12);
          dest.push_back(a.psi_D);
        }
        expect_even(dest, Nd);
        ASSERT_NEAR(plan.delta_max, removal_delta_max(L->delta, Nc), 1e-9);
      }
    }
  }
}

TEST(Removal, RejectsTooFewAgents) {
  EXPECT_THROW(removal_plan(ring(2, 0.0), 1, 2, {1, 0, 0}), std::invalid_argument);
}

TEST(Addition, UniqueHolderOnExactFormation) {
  const LissajousSpec d{1, 5, 0};
  const auto agents = ring(5, 0.0);
  int holders = 0;
  for (const auto& a : agents) holders += holds_two_slots(entry_deltas(a.psi, 5, 6, 0));
  EXPECT_EQ(holders, 1);
  const AdditionEntry e = addition_entry(agents, 5, 6, d, 0.9, kSim1);
  EXPECT_NEAR(ellipse_residual(kSim1, e.entry_point, 0.9, 6), 0.0, 1e-12);
  EXPECT_TRUE(on_grid(e.psi_ia_D, 6, 0));
}

TEST(Addition, TieTakesSecondBranch) {
  const EntryDeltas tie{0.2, 0.2};
  EXPECT_NEAR(addition_slot(1.0, tie, 5), wrap_2pi(1.0 + kTwoPi / 5 - 0.2), 1e-15);
  EXPECT_EQ(addition_direction(tie), +1);
  EXPECT_EQ(addition_direction({0.3, 0.1}), -1);
}

TEST(Addition, LeaderFollowsDeltaComparison) {
  std::mt19937 rng(19);
  std::uniform_real_distribution<double> ang(0.0, kTwoPi);
  const LissajousSpec d{1, 5, 0};
  for (int trial = 0; trial < 500; ++trial) {
    const auto agents = ring(5, ang(rng));
    const AdditionEntry e = addition_entry(agents, 5, 6, d, 0.0, kSim1);
    const ReconfigAssignment plan = addition_plan(agents, e, 5, 6, 0);
    if (e.delta1 > e.delta2) {
      EXPECT_EQ(plan.leader_id, e.i_p);
      EXPECT_EQ(plan.direction, -1);
    } else {
      EXPECT_EQ(plan.leader_id, e.i_n);
      EXPECT_EQ(plan.direction, +1);
    }
  }
}

TEST(Addition, RandomizedBijectionAndChainIdentity) {
  std::mt19937 rng(23);
  std::uniform_real_distribution<double> ang(0.0, kTwoPi);
  for (int Nc = 2; Nc <= 12; ++Nc) {
    for (int o = 0; o <= 1; ++o) {
      const int Nd = Nc + 1;
      const LissajousSpec d{o == 1 ? 2 : 1, o == 1 ? Nd - 2 : Nd - 1, o};
      for (int trial = 0; trial < 200; ++trial) {
        const auto agents = ring(Nc, ang(rng));
        const double s_df = ang(rng);
        const AdditionEntry e = addition_entry(agents, Nc, Nd, d, s_df, kSim1);
        const ReconfigAssignment plan = addition_plan(agents, e, Nc, Nd, o);
        const AgentAssignment* L = plan.find(plan.leader_id);
        std::vector<double> dest{e.psi_ia_D};
        for (const auto& a : plan.agents) {
          ASSERT_TRUE(on_grid(a.psi_D, Nd, o));
          ASSERT_NEAR(std::fabs(a.delta) - std::fabs(L->delta), a.n * (kTwoPi / Nd - kTwoPi / Nc), 1e-9);
          ASSERT_LE(std::fabs(a.delta), plan.delta_max + 1e-12);
          dest.push_back(a.psi_D);
        }
        ASSERT_NEAR(plan.delta_max, std::fabs(L->delta), 1e-12);
        expect_even(dest, Nd);
        ASSERT_NEAR(ellipse_residual(kSim1, e.entry_point, s_df, Nd), 0.0, 1e-10);
      }
    }
  }
}

// Grid of N+1 points against N evenly spaced agents: exactly one agent
// interval [P_i, P_i + 2π/N) holds two grid points.
TEST(Addition, PigeonholeBruteForce) {
  std::mt19937 rng(29);
  std::uniform_real_distribution<double> ang(0.0, kTwoPi);
  for (int N = 3; N <= 12; ++N) {
    for (int trial = 0; trial < 1000; ++trial) {
      const double rot = ang(rng);
      int doubles = 0, by_delta = 0;
      for (int i = 0; i < N; ++i) {
        const double P = wrap_2pi(rot + kTwoPi * i / N);
        int count = 0;
        for (int j = 0; j <= N; ++j)
          if (forward_gap(P, kTwoPi * j / (N + 1)) < kTwoPi / N) ++count;
        ASSERT_GE(count, 1);
        doubles += count == 2;
        by_delta += holds_two_slots(entry_deltas(P, N, N + 1, 0));
      }
      ASSERT_EQ(doubles, 1) << "N=" << N << " rot=" << rot;
      ASSERT_EQ(by_delta, 1) << "N=" << N << " rot=" << rot;
    }
  }
}

// Common-window symmetric transitions keep every pairwise separation monotone,
// and adjacent separations never drop below the smaller of the two spacings.
TEST(Transition, SeparationMonotoneAndBounded) {
  std::mt19937 rng(31);
  std::uniform_real_distribution<double> ang(0.0, kTwoPi);
  for (int trial = 0; trial < 50; ++trial) {
    const auto agents = ring(5, ang(rng));
    const LissajousSpec rem{1, 3, 0}, add{1, 5, 0};
    const ReconfigAssignment plans[] = {
        removal_plan(agents, 1 + static_cast<int>(rng() % 5), 5, rem),
        addition_plan(agents, addition_entry(agents, 5, 6, add, 0.0, kSim1), 5, 6, 0)};
    const double floor_gap[] = {kTwoPi / 5, kTwoPi / 6};
    for (int k = 0; k < 2; ++k) {
      const auto& plan = plans[k];
      const SymmetricWindow w = symmetric_window(plan.delta_max, kSim1, 0.5, 10.0);
      std::vector<SymmetricTrajectory> tr;
      for (const auto& a : plan.agents) tr.push_back(transition_for(a, w));
      for (size_t i = 0; i < tr.size(); ++i) {
        for (size_t j = i + 1; j < tr.size(); ++j) {
          int sign = 0;
          double prev = tr[i].eval(w.T0).g - tr[j].eval(w.T0).g;
          for (int q = 1; q <= 1000; ++q) {
            const double t = w.T0 + w.Tp * q / 1000;
            const double cur = tr[i].eval(t).g - tr[j].eval(t).g;
            const int sg = cur > prev + 1e-13 ? 1 : (cur < prev - 1e-13 ? -1 : 0);
            if (sg != 0) {
              ASSERT_TRUE(sign == 0 || sign == sg);
              sign = sg;
            }
            prev = cur;
          }
        }
      }
      // Adjacent spacing along the ring.
      for (int q = 0; q <= 200; ++q) {
        const double t = w.T0 + w.Tp * q / 200;
        std::vector<double> psi;
        for (const auto& x : tr) psi.push_back(wrap_2pi(x.eval(t).g));
        std::sort(psi.begin(), psi.end());
        for (size_t m = 0; m < psi.size(); ++m)
          ASSERT_GE(forward_gap(psi[m], psi[(m + 1) % psi.size()]), floor_gap[k] - 1e-9);
      }
    }
  }
}

TEST(Replacement, EntryMatchesPosition) {
  const Point2 e = replacement_entry(0.0, 0.0, {3, 2, 0}, {2.5, 2.5});
  EXPECT_NEAR(e.x, 2.5, 1e-15);
  EXPECT_NEAR(e.y, 0.0, 1e-15);
  std::mt19937 rng(37);
  std::uniform_real_distribution<double> ang(0.0, kTwoPi);
  for (int i = 0; i < 1000; ++i) {
    const double psi = ang(rng), s = ang(rng);
    EXPECT_NEAR(distance(replacement_entry(psi, s, {2, 3, 1}, kSim1), position({2, 3, 1}, kSim1, psi, s)), 0.0, 1e-12);
  }
}

TEST(Replacement, OutwardNormal) {
  const ExitMove m = outward_normal(0.0, 0.0, {3, 2, 0}, {2.5, 2.5}, 0.407);
  EXPECT_NEAR(m.normal.x, 1.0, 1e-15);
  EXPECT_NEAR(m.normal.y, 0.0, 1e-15);
  EXPECT_NEAR(m.waypoint.x, 2.5 + 3 * 0.407, 1e-12);
}

TEST(Replacement, NormalIsPerpendicularAndOutward) {
  const LissajousSpec c{2, 3, 1};
  std::mt19937 rng(41);
  std::uniform_real_distribution<double> ang(0.0, kTwoPi);
  int checked = 0;
  while (checked < 10000) {
    const double psi = ang(rng), s = ang(rng);
    ExitMove m;
    try {
      m = outward_normal(psi, s, c, kSim1, kRdm);
    } catch (const std::domain_error&) {
      continue;
    }
    ++checked;
    // Tangent of the frozen ellipse is d(position)/d(psi).
    const Vec2 T{-kSim1.A * std::sin(psi - c.a * s), kSim1.B * std::cos(psi + c.b * s)};
    const double unnorm_len = std::hypot(kSim1.B * std::cos(psi + c.b * s), kSim1.A * std::sin(psi - c.a * s));
    ASSERT_NEAR(dot(m.normal, T), 0.0, 1e-12);
    const Point2 E = position(c, kSim1, psi, s);
    ASSERT_NEAR(dot(m.normal, E) * unnorm_len, kSim1.A * kSim1.B * std::fabs(std::cos(c.N() * s)), 1e-9);
    ASSERT_NEAR(distance(m.waypoint, E), 3 * kRdm, 1e-12);
  }
}

TEST(Replacement, ExitKeepsClearOfFormation) {
  // Moving outward never brings the replaced agent closer to anyone on the ellipse.
  const LissajousSpec c{2, 3, 1};
  std::mt19937 rng(43);
  std::uniform_real_distribution<double> ang(0.0, kTwoPi);
  for (int trial = 0; trial < 300; ++trial) {
    const double s = ang(rng);
    const auto agents = ring(5, c.offset());
    const ExitMove m = outward_normal(agents[0].psi, s, c, kSim1, kRdm);
    for (size_t j = 1; j < agents.size(); ++j) {
      const Point2 other = position(c, kSim1, agents[j].psi, s);
      double prev = distance(m.from, other);
      for (int q = 1; q <= 50; ++q) {
        const double d = distance(m.from + m.normal * (3 * kRdm * q / 50), other);
        ASSERT_GE(d, prev - 1e-12);
        prev = d;
      }
    }
  }
}

TEST(Replacement, DegenerateCornerRejected) {
  // On the diagonal ellipse the corner point (A, B) has no defined normal.
  const LissajousSpec c{2, 3, 1};
  const double s = kPi / 10;
  const double psi = c.a * s;  // x = A cos(0) = A
  EXPECT_NEAR(position(c, kSim1, psi, s).y, kSim1.B, 1e-12);
  EXPECT_THROW(outward_normal(psi, s, c, kSim1, kRdm), std::domain_error);
}

TEST(Window, Sizing) {
  const SymmetricWindow w = symmetric_window(kTwoPi / 5, kSim1, 0.5, 3.0);
  EXPECT_NEAR(w.Tp, 15 * (kTwoPi / 5) * std::sqrt(37.25) / 4, 1e-12);
  EXPECT_NEAR(w.psidot_max, 0.5 / std::sqrt(37.25), 1e-15);
  AgentAssignment longest{1, 0.2, 0.2 + kTwoPi / 5, kTwoPi / 5, 0};
  AgentAssignment shorter{2, 1.0, 1.3, 0.3, 1};
  EXPECT_NEAR(std::fabs(transition_for(longest, w).peak_rate()), w.psidot_max, 1e-12);
  EXPECT_NEAR(std::fabs(transition_for(shorter, w).peak_rate()), 0.3 / (kTwoPi / 5) * w.psidot_max, 1e-12);
  EXPECT_THROW(symmetric_window(0.0, kSim1, 0.5, 0.0), std::invalid_argument);
}
