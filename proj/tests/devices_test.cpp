#include <gtest/gtest.h>

#include <random>

#include "dwmarket/devices.hpp"

using namespace dwm;

namespace {

EvSpec random_ev(std::mt19937_64& rng, std::size_t H) {
  std::uniform_real_distribution<double> cap(0.0, 7.0), u(0.0, 1.0);
  EvSpec s{DemandVector(H), 0.0};
  for (std::size_t h = 0; h < H; ++h) s.e_max[h] = u(rng) < 0.3 ? 0.0 : cap(rng);
  s.e_des = u(rng) * s.e_max.sum();
  return s;
}

PriceVector random_prices(std::mt19937_64& rng, std::size_t H, bool with_ties) {
  std::uniform_real_distribution<double> u(0.0, 0.5);
  std::uniform_int_distribution<int> level(1, 4);
  PriceVector p(H);
  for (auto& x : p) x = with_ties ? 0.05 * level(rng) : u(rng);
  return p;
}

// min p·d  s.t.  sum d = e_des,  0 <= d <= e_max
double ev_lp_cost(const PriceVector& p, const EvSpec& s) {
  const std::size_t H = p.size();
  LinearProgram lp(H);
  for (std::size_t h = 0; h < H; ++h) {
    lp.objective[h] = p[h];
    lp.upper[h] = s.e_max[h];
  }
  lp.add_row(std::vector<double>(H, 1.0), Relation::Equal, s.e_des);
  const auto sol = solve_lp(lp);
  EXPECT_EQ(sol.status, LpStatus::Optimal);
  return sol.objective;
}

EwhSpec flat_ewh(std::size_t H) {
  EwhSpec s;
  s.t_in = TemperatureVector(H, 15.0);
  s.t_amb = TemperatureVector(H, 20.0);
  s.draw = DemandVector(H);
  return s;
}

EwhSpec random_ewh(std::mt19937_64& rng, std::size_t H, double e_max) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  EwhSpec s;
  s.c_tank = 0.1 + 0.2 * u(rng);
  s.r_loss = 0.05 * u(rng);
  s.e_max = e_max;
  s.t_min = 45.0;
  s.t0 = 40.0 + 10.0 * u(rng);
  s.p_short = 0.2 + u(rng);
  s.t_in = TemperatureVector(H);
  s.t_amb = TemperatureVector(H);
  s.draw = DemandVector(H);
  for (std::size_t h = 0; h < H; ++h) {
    s.t_in[h] = 10.0 + 10.0 * u(rng);
    s.t_amb[h] = 15.0 + 10.0 * u(rng);
    s.draw[h] = u(rng) < 0.4 ? 0.0 : 2.0 * u(rng);
  }
  return s;
}

double ewh_objective(const PriceVector& p, const EwhSpec& s, const DemandVector& e_in) {
  const EwhPlan plan = ewh_simulate(e_in, s);
  double v = dot(p, e_in);
  for (double x : plan.e_short) v += s.p_short * x;
  return v;
}

}  // namespace

TEST(EvBestResponse, FlatPricesChargeEarliest) {
  EvSpec s{DemandVector(24, 7.0), 14.0};
  const Bid b = ev_best_response(PriceVector(24, 0.1), s);
  DemandVector expect(24);
  expect[0] = 7.0;
  expect[1] = 7.0;
  EXPECT_EQ(b.demand, expect);
  EXPECT_EQ(b.benefit, 0.0);
}

TEST(EvBestResponse, CheapestHourSaturatesFirst) {
  PriceVector p(24, 0.1);
  p[5] = 0.01;
  EvSpec s{DemandVector(24), 12.0};
  s.e_max[5] = 10.0;
  s.e_max[6] = 10.0;
  const Bid b = ev_best_response(p, s);
  EXPECT_EQ(b.demand[5], 10.0);
  EXPECT_EQ(b.demand[6], 2.0);
  EXPECT_EQ(b.demand.sum(), 12.0);
}

TEST(EvBestResponse, InfeasibleDevice) {
  EvSpec s{DemandVector(4, 1.0), 5.0};
  EXPECT_THROW(ev_best_response(PriceVector(4), s), InfeasibleDevice);
  EXPECT_FALSE(check_spec(s, 4).empty());
}

TEST(EvBestResponse, MatchesLinearProgram) {
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t H = 1 + trial % 24;
    const EvSpec s = random_ev(rng, H);
    const PriceVector p = random_prices(rng, H, trial % 3 == 0);
    const Bid b = ev_best_response(p, s);
    EXPECT_NEAR(dot(p, b.demand), ev_lp_cost(p, s), 1e-9) << "trial " << trial;
    EXPECT_TRUE(check_plan(s, b.demand).empty());
  }
}

TEST(EvBestResponse, SupportOnCheapestHours) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const EvSpec s = random_ev(rng, 24);
    const PriceVector p = random_prices(rng, 24, trial % 2 == 0);
    const Bid b = ev_best_response(p, s);
    for (std::size_t h = 0; h < 24; ++h) {
      if (b.demand[h] <= 0.0) continue;
      for (std::size_t g = 0; g < 24; ++g) {
        if (b.demand[g] < s.e_max[g]) {
          EXPECT_LE(p[h], p[g]) << "hour " << h << " vs " << g;
        }
      }
    }
    EXPECT_NEAR(b.demand.sum(), s.e_des, 1e-12 * (1.0 + s.e_des));
  }
}

TEST(EvBestResponse, NoSampledPlanIsBetter) {
  std::mt19937_64 rng(19);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const EvSpec s = random_ev(rng, 24);
    const PriceVector p = random_prices(rng, 24, false);
    const Bid b = ev_best_response(p, s);
    const double best = subproblem_value(p, b.demand, b.benefit);
    for (int k = 0; k < 100; ++k) {
      // Random feasible plan: fill hours in random order with random fractions.
      std::vector<std::size_t> order(24);
      std::iota(order.begin(), order.end(), 0);
      std::shuffle(order.begin(), order.end(), rng);
      DemandVector d(24);
      double remaining = s.e_des;
      for (std::size_t h : order) {
        const double take = std::min(s.e_max[h] * u(rng), remaining);
        d[h] = take;
        remaining -= take;
      }
      for (std::size_t h : order) {
        const double extra = std::min(s.e_max[h] - d[h], remaining);
        d[h] += extra;
        remaining -= extra;
      }
      ASSERT_TRUE(check_plan(s, d, 1e-9).empty());
      EXPECT_GE(subproblem_value(p, d, 0.0), best - 1e-6);
    }
  }
}

TEST(EwhBestResponse, NoDrawNoLossesBuysNothing) {
  EwhSpec s = flat_ewh(24);
  s.r_loss = 0.0;
  s.t0 = 50.0;
  const auto [bid, plan] = ewh_best_response(PriceVector(24, 0.1), s);
  for (std::size_t h = 0; h < 24; ++h) {
    EXPECT_EQ(bid.demand[h], 0.0);
    EXPECT_EQ(plan.e_short[h], 0.0);
  }
  EXPECT_EQ(bid.benefit, 0.0);
}

TEST(EwhBestResponse, NoElementFollowsClosedForm) {
  EwhSpec s = flat_ewh(4);
  s.r_loss = 0.0;
  s.e_max = 0.0;
  s.t0 = 45.0;
  s.draw[2] = 1.0;
  const auto [bid, plan] = ewh_best_response(PriceVector(4, 0.1), s);
  // t_2 = 45 - 1 / 0.2 = 40;  e_short_2 = 1 * (45 - 40) / (45 - 15) = 1/6
  EXPECT_NEAR(plan.t_tank[0], 45.0, 1e-12);
  EXPECT_NEAR(plan.t_tank[2], 40.0, 1e-12);
  EXPECT_NEAR(plan.t_tank[3], 40.0, 1e-12);
  EXPECT_NEAR(plan.e_short[2], 1.0 / 6.0, 1e-12);
  EXPECT_EQ(plan.e_short[3], 0.0);
  EXPECT_NEAR(bid.benefit, s.p_short * (1.0 - 1.0 / 6.0), 1e-12);
}

TEST(EwhBestResponse, WithinGridBoundAndNotWorseThanGrid) {
  std::mt19937_64 rng(23);
  const double delta = 0.1;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t H = 1 + trial % 4;
    const double e_max = 0.1 * static_cast<double>(3 + trial % 8);
    const EwhSpec s = random_ewh(rng, H, e_max);
    const PriceVector p = random_prices(rng, H, false);
    const auto [bid, plan] = ewh_best_response(p, s);
    const double lp_value = ewh_objective(p, s, bid.demand);

    const int levels = static_cast<int>(std::round(e_max / delta));
    std::vector<int> n(H, 0);
    double grid_best = std::numeric_limits<double>::infinity();
    while (true) {
      DemandVector e(H);
      for (std::size_t h = 0; h < H; ++h) e[h] = n[h] * delta;
      grid_best = std::min(grid_best, ewh_objective(p, s, e));
      std::size_t h = 0;
      while (h < H && n[h] == levels) n[h++] = 0;
      if (h == H) break;
      ++n[h];
    }
    // Moving e_in_h by delta shifts every later temperature by at most delta/c_tank.
    double bound = 0.0;
    for (std::size_t h = 0; h < H; ++h) {
      double L = std::abs(p[h]);
      double decay = 1.0;
      for (std::size_t j = h; j < H; ++j) {
        L += s.p_short * s.draw[j] / (s.t_min - s.t_in[j]) * decay / s.c_tank;
        decay *= 1.0 - s.r_loss;
      }
      bound += L * delta;
    }
    EXPECT_LE(lp_value, grid_best + 1e-9) << "trial " << trial;
    EXPECT_GE(lp_value, grid_best - bound) << "trial " << trial;
  }
}

TEST(EwhBestResponse, PlanConsistency) {
  std::mt19937_64 rng(29);
  for (int trial = 0; trial < 30; ++trial) {
    const EwhSpec s = random_ewh(rng, 24, 4.5);
    const PriceVector p = random_prices(rng, 24, false);
    const auto [bid, plan] = ewh_best_response(p, s);
    double prev = s.t0;
    for (std::size_t h = 0; h < 24; ++h) {
      EXPECT_GE(plan.e_in[h], 0.0);
      EXPECT_LE(plan.e_in[h], s.e_max);
      const double expect = prev + (plan.e_in[h] - s.draw[h]) / s.c_tank - s.r_loss * (prev - s.t_amb[h]);
      EXPECT_NEAR(plan.t_tank[h], expect, 1e-7);
      EXPECT_GE(plan.t_short[h], 0.0);
      EXPECT_GE(plan.t_short[h], s.t_min - plan.t_tank[h] - 1e-12);
      prev = plan.t_tank[h];
    }
    EXPECT_EQ(bid.demand, plan.e_in);
  }
}

TEST(EwhBestResponse, HigherPenaltyNeverIncreasesShortfall) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 30; ++trial) {
    EwhSpec s = random_ewh(rng, 24, 1.5);
    const PriceVector p = random_prices(rng, 24, false);
    double previous = std::numeric_limits<double>::infinity();
    for (double ps : {0.05, 0.2, 0.5, 1.0, 3.0}) {
      s.p_short = ps;
      const auto plan = ewh_best_response(p, s).second;
      double total = 0.0;
      for (double x : plan.e_short) total += x;
      EXPECT_LE(total, previous + 1e-7) << "p_short " << ps;
      previous = total;
    }
  }
}

TEST(EwhBestResponse, NoSampledPlanIsBetter) {
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    const EwhSpec s = random_ewh(rng, 24, 4.5);
    const DeviceSpec spec = s;
    const PriceVector p = random_prices(rng, 24, false);
    const Bid b = best_response(p, spec);
    const double best = subproblem_value(p, b.demand, b.benefit);
    for (int k = 0; k < 200; ++k) {
      DemandVector d(24);
      for (std::size_t h = 0; h < 24; ++h) {
        const double r = u(rng);
        d[h] = r < 0.3 ? 0.0 : (r > 0.9 ? s.e_max : std::min(s.e_max, b.demand[h] + (u(rng) - 0.5)));
        d[h] = std::max(0.0, d[h]);
      }
      EXPECT_GE(subproblem_value(p, d, plan_benefit(spec, d)), best - 1e-6);
    }
  }
}

TEST(CheckSpec, RejectsBadHeaters) {
  EwhSpec s = flat_ewh(3);
  EXPECT_TRUE(check_spec(s, 3).empty());
  s.t_in[1] = 45.0;
  s.r_loss = 1.0;
  s.c_tank = 0.0;
  s.draw[0] = -1.0;
  const auto v = check_spec(s, 3);
  EXPECT_EQ(v.size(), 4u);
  EXPECT_FALSE(check_spec(flat_ewh(3), 4).empty());
}

TEST(EnergyRequirement, EvAndHeater) {
  EwhSpec s = flat_ewh(3);
  s.draw = DemandVector{1, 2, 3};
  EXPECT_EQ(energy_requirement(DeviceSpec{s}), 6.0);
  EXPECT_EQ(energy_requirement(DeviceSpec{EvSpec{DemandVector(3, 5.0), 9.0}}), 9.0);
}
