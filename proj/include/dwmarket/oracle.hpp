#pragma once

#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <limits>
#include <string>
#include <vector>

#include "dwmarket/coordinator.hpp"
#include "dwmarket/devices.hpp"
#include "dwmarket/scenario.hpp"

namespace dwm {

inline constexpr double kEnumerationGuard = 1e7;

struct EnumerationGrid {
  double delta = 0.25;
  std::vector<std::string> device_ids;
  std::vector<std::vector<Bid>> plans;  // per device, lexicographic by demand

  double combinations() const {
    double n = plans.empty() ? 0.0 : 1.0;
    for (const auto& p : plans) n *= static_cast<double>(p.size());
    return n;
  }
};

struct JointOptimum {
  DemandVector demand;
  double net_cost = 0.0;
  std::vector<Bid> plans;  // per device, same order as the grid
  double combinations = 0.0;
};

namespace detail {

inline std::size_t grid_steps(double value, double delta, const char* what) {
  const double steps = std::round(value / delta);
  if (std::abs(steps * delta - value) > 1e-9 * (1.0 + std::abs(value))) {
    throw DomainError(std::string(what) + " " + std::to_string(value) + " is not a multiple of the grid step " +
                      std::to_string(delta));
  }
  return static_cast<std::size_t>(steps);
}

/// Every vector n with 0 <= n_h <= cap_h, in lexicographic order, optionally with a fixed sum.
inline void for_each_grid_point(const std::vector<std::size_t>& cap, std::optional<std::size_t> total,
                                const std::function<void(const std::vector<std::size_t>&)>& visit) {
  const std::size_t H = cap.size();
  std::vector<std::size_t> suffix(H + 1, 0);
  for (std::size_t h = H; h-- > 0;) suffix[h] = suffix[h + 1] + cap[h];
  std::vector<std::size_t> n(H, 0);
  std::function<void(std::size_t, std::size_t)> rec = [&](std::size_t h, std::size_t used) {
    if (h == H) {
      if (!total || used == *total) visit(n);
      return;
    }
    for (std::size_t v = 0; v <= cap[h]; ++v) {
      if (total) {
        if (used + v > *total) break;
        if (used + v + suffix[h + 1] < *total) continue;
      }
      n[h] = v;
      rec(h + 1, used + v);
    }
    n[h] = 0;
  };
  rec(0, 0);
}

inline std::vector<Bid> enumerate_plans(const DeviceSpec& spec, double delta) {
  std::vector<Bid> out;
  std::visit(
      [&](const auto& s) {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, EvSpec>) {
          const std::size_t H = s.e_max.size();
          std::vector<std::size_t> cap(H);
          for (std::size_t h = 0; h < H; ++h) {
            cap[h] = static_cast<std::size_t>(std::floor(s.e_max[h] / delta + 1e-9));
          }
          const std::size_t need = grid_steps(s.e_des, delta, "e_des");
          for_each_grid_point(cap, need, [&](const std::vector<std::size_t>& n) {
            DemandVector d(H);
            for (std::size_t h = 0; h < H; ++h) d[h] = static_cast<double>(n[h]) * delta;
            out.push_back(Bid{std::move(d), 0.0});
          });
        } else {
          const std::size_t H = s.draw.size();
          const std::vector<std::size_t> cap(H, static_cast<std::size_t>(std::floor(s.e_max / delta + 1e-9)));
          for_each_grid_point(cap, std::nullopt, [&](const std::vector<std::size_t>& n) {
            DemandVector d(H);
            for (std::size_t h = 0; h < H; ++h) d[h] = static_cast<double>(n[h]) * delta;
            const double b = ewh_benefit(ewh_simulate(d, s), s);
            out.push_back(Bid{std::move(d), b});
          });
        }
      },
      spec);
  return out;
}

}  // namespace detail

/// Discretized plan sets for every device of the scenario, ascending by id.
/// Refuses (DomainError) when the Cartesian product would exceed the guard.
inline EnumerationGrid build_grid(const ScenarioConfig& cfg, double delta) {
  if (!(delta > 0.0)) throw DomainError("grid step must be positive");
  EnumerationGrid grid;
  grid.delta = delta;
  double estimate = 1.0;
  for (const auto& dev : cfg.devices()) {
    // Cheap upper estimate before materializing anything.
    const double per_hour = std::visit(
        [&](const auto& s) -> double {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, EvSpec>) {
            return std::floor(s.e_max.max() / delta + 1e-9) + 1.0;
          } else {
            return std::floor(s.e_max / delta + 1e-9) + 1.0;
          }
        },
        dev.spec);
    estimate *= std::pow(per_hour, static_cast<double>(cfg.horizon));
    if (estimate > kEnumerationGuard * 1e3) {
      throw DomainError("enumeration would visit about " + std::to_string(estimate) + " combinations (guard " +
                        std::to_string(kEnumerationGuard) + ")");
    }
  }
  for (const auto& dev : cfg.devices()) {
    grid.device_ids.push_back(dev.id);
    grid.plans.push_back(detail::enumerate_plans(dev.spec, delta));
    if (grid.plans.back().empty()) throw DomainError("device '" + dev.id + "' has no plan on the grid");
  }
  if (grid.combinations() > kEnumerationGuard) {
    throw DomainError("enumeration would visit " + std::to_string(grid.combinations()) + " combinations (guard " +
                      std::to_string(kEnumerationGuard) + ")");
  }
  return grid;
}

/// Brute-force minimum of C(sum_j d_j) - sum_j b_j over the grid. Ties keep the
/// lexicographically first combination.
inline JointOptimum joint_enumerate(const ScenarioConfig& cfg, double delta = 0.25) {
  const EnumerationGrid grid = build_grid(cfg, delta);
  const std::size_t H = cfg.horizon;
  JointOptimum best{DemandVector(H), 0.0, {}, grid.combinations()};
  const std::size_t J = grid.plans.size();
  if (J == 0) return best;

  best.net_cost = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> choice(J, 0);
  std::vector<DemandVector> partial(J + 1, DemandVector(H));
  std::vector<double> benefit(J + 1, 0.0);
  std::function<void(std::size_t)> rec = [&](std::size_t j) {
    if (j == J) {
      const double cost = cfg.supply.cost(partial[J]) - benefit[J];
      if (cost < best.net_cost) {
        best.net_cost = cost;
        best.demand = partial[J];
        best.plans.clear();
        for (std::size_t i = 0; i < J; ++i) best.plans.push_back(grid.plans[i][choice[i]]);
      }
      return;
    }
    for (std::size_t c = 0; c < grid.plans[j].size(); ++c) {
      choice[j] = c;
      partial[j + 1] = partial[j];
      partial[j + 1] += grid.plans[j][c].demand;
      benefit[j + 1] = benefit[j] + grid.plans[j][c].benefit;
      rec(j + 1);
    }
  };
  rec(0);
  return best;
}

/// Slack allowed between the enumerated optimum and the exact one: a H delta max(D).
inline double discretization_bound(const SupplyModel& supply, std::size_t horizon, double delta, double max_demand) {
  return supply.a * static_cast<double>(horizon) * delta * max_demand;
}

struct DeviceCertificate {
  std::string device_id;
  double allocated_value = 0.0;  // p*·d_j* - b_j*
  double best_value = 0.0;       // fresh best response at p*
  double improvement = 0.0;
  bool ok = true;
};

struct NashReport {
  bool pass = true;
  std::vector<DeviceCertificate> devices;
  double price_deviation = 0.0;  // max_h |p*_h - 2a sum_j d_j*_h|
  bool prices_ok = true;
  std::vector<std::string> failures;
};

/// Checks that no device can lower its own objective at the final prices by
/// more than epsilon (1 + |value|), and that the prices are the marginal cost
/// of the allocated total.
inline NashReport nash_certificate(const Allocation& alloc, const ScenarioConfig& cfg, double epsilon = 1e-5) {
  NashReport report;
  const std::size_t H = cfg.horizon;
  std::map<std::string, DeviceSpec> specs;
  for (const auto& d : cfg.devices()) specs.emplace(d.id, d.spec);

  DemandVector total(H);
  for (std::size_t h = 0; h < H; ++h) {
    ExactSum s;
    for (const auto& d : alloc.devices) s.add(d.demand[h]);
    total[h] = s.value();
  }
  if (alloc.prices.size() == H) {
    report.price_deviation = max_abs_diff(alloc.prices, cfg.supply.marginal_prices(total));
  } else {
    report.price_deviation = std::numeric_limits<double>::infinity();
  }
  report.prices_ok = report.price_deviation <= 1e-9;
  if (!report.prices_ok) report.failures.push_back("prices differ from marginal cost by " + std::to_string(report.price_deviation));

  for (const auto& d : alloc.devices) {
    DeviceCertificate c;
    c.device_id = d.device_id;
    auto it = specs.find(d.device_id);
    if (it == specs.end()) {
      c.ok = false;
      report.failures.push_back(d.device_id + ": not in the scenario");
      report.devices.push_back(c);
      continue;
    }
    c.allocated_value = subproblem_value(alloc.prices, d.demand, d.benefit);
    const Bid fresh = best_response(alloc.prices, it->second);
    c.best_value = subproblem_value(alloc.prices, fresh.demand, fresh.benefit);
    c.improvement = c.allocated_value - c.best_value;
    c.ok = c.improvement <= epsilon * (1.0 + std::abs(c.allocated_value));
    if (!c.ok) report.failures.push_back(d.device_id + ": can improve by " + std::to_string(c.improvement));
    report.devices.push_back(c);
  }
  report.pass = report.failures.empty();
  return report;
}

}  // namespace dwm
