#pragma once

#include <algorithm>
#include <numeric>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "dwmarket/core.hpp"
#include "dwmarket/lp.hpp"

namespace dwm {

/// Electric vehicle: per-hour charging cap (0 while away) and the energy it must
/// receive over the day.
struct EvSpec {
  DemandVector e_max;
  double e_des = 0.0;

  friend bool operator==(const EvSpec&, const EvSpec&) = default;
};

/// Electric water heater with a one-node tank model.
struct EwhSpec {
  double c_tank = 0.2;          // kWh/degC
  double r_loss = 0.02;         // 1/h
  double e_max = 4.5;           // kWh/h
  double t_min = 45.0;          // degC
  TemperatureVector t_in;       // inlet water
  TemperatureVector t_amb;      // ambient
  DemandVector draw;            // hot-water energy withdrawn each hour
  double p_short = 1.0;         // $/kWh of shortfall
  double t0 = 45.0;             // initial tank temperature

  friend bool operator==(const EwhSpec&, const EwhSpec&) = default;
};

using DeviceSpec = std::variant<EvSpec, EwhSpec>;

struct EwhPlan {
  DemandVector e_in;
  TemperatureVector t_tank;
  TemperatureVector t_short;
  DemandVector e_short;
};

// ---------------------------------------------------------------------------
// Validation. Messages are "field: problem" so callers can prefix a locator.

inline std::vector<std::string> check_spec(const EvSpec& s, std::size_t horizon) {
  std::vector<std::string> out;
  if (s.e_max.size() != horizon) {
    out.push_back("e_max: length " + std::to_string(s.e_max.size()) + " != horizon " + std::to_string(horizon));
  }
  bool ok = s.e_max.all_finite();
  if (!ok) out.push_back("e_max: non-finite value");
  for (std::size_t h = 0; h < s.e_max.size(); ++h) {
    if (s.e_max[h] < 0.0) {
      out.push_back("e_max[" + std::to_string(h) + "]: must be >= 0");
      ok = false;
    }
  }
  if (!std::isfinite(s.e_des) || s.e_des < 0.0) {
    out.push_back("e_des: must be finite and >= 0");
  } else if (ok && s.e_des > s.e_max.sum() * (1.0 + 1e-12)) {
    out.push_back("e_des: " + std::to_string(s.e_des) + " exceeds total charging capacity " +
                  std::to_string(s.e_max.sum()));
  }
  return out;
}

inline std::vector<std::string> check_spec(const EwhSpec& s, std::size_t horizon) {
  std::vector<std::string> out;
  auto finite = [&](double v, const char* name) {
    if (!std::isfinite(v)) {
      out.push_back(std::string(name) + ": must be finite");
      return false;
    }
    return true;
  };
  if (finite(s.c_tank, "c_tank") && !(s.c_tank > 0.0)) out.push_back("c_tank: must be > 0");
  if (finite(s.r_loss, "r_loss") && !(s.r_loss >= 0.0 && s.r_loss < 1.0)) out.push_back("r_loss: must be in [0, 1)");
  if (finite(s.e_max, "e_max") && s.e_max < 0.0) out.push_back("e_max: must be >= 0");
  finite(s.t_min, "t_min");
  if (finite(s.p_short, "p_short") && s.p_short < 0.0) out.push_back("p_short: must be >= 0");
  finite(s.t0, "t0");
  auto length = [&](std::size_t n, const char* name) {
    if (n != horizon) {
      out.push_back(std::string(name) + ": length " + std::to_string(n) + " != horizon " + std::to_string(horizon));
      return false;
    }
    return true;
  };
  if (length(s.t_in.size(), "t_in")) {
    for (std::size_t h = 0; h < horizon; ++h) {
      if (!(s.t_min > s.t_in[h])) {
        out.push_back("t_in[" + std::to_string(h) + "]: must be below t_min");
      }
    }
  }
  length(s.t_amb.size(), "t_amb");
  if (length(s.draw.size(), "draw")) {
    for (std::size_t h = 0; h < horizon; ++h) {
      if (s.draw[h] < 0.0) out.push_back("draw[" + std::to_string(h) + "]: must be >= 0");
    }
  }
  return out;
}

inline std::vector<std::string> check_spec(const DeviceSpec& s, std::size_t horizon) {
  return std::visit([&](const auto& spec) { return check_spec(spec, horizon); }, s);
}

inline std::size_t horizon_of(const DeviceSpec& s) {
  return std::visit(
      [](const auto& spec) -> std::size_t {
        if constexpr (std::is_same_v<std::decay_t<decltype(spec)>, EvSpec>) {
          return spec.e_max.size();
        } else {
          return spec.draw.size();
        }
      },
      s);
}

/// Energy the device must (or is expected to) consume over the horizon.
inline double energy_requirement(const DeviceSpec& s) {
  return std::visit(
      [](const auto& spec) -> double {
        if constexpr (std::is_same_v<std::decay_t<decltype(spec)>, EvSpec>) {
          return spec.e_des;
        } else {
          return spec.draw.sum();
        }
      },
      s);
}

// ---------------------------------------------------------------------------
// EV

/// Cheapest-hours-first charging: available hours sorted by price, earliest
/// first on ties, each filled up to its cap until e_des is reached.
inline Bid ev_best_response(const PriceVector& p, const EvSpec& spec) {
  const std::size_t horizon = spec.e_max.size();
  p.require_same_length(spec.e_max, "ev_best_response");
  const double capacity = spec.e_max.sum();
  if (spec.e_des > capacity * (1.0 + 1e-12)) {
    throw InfeasibleDevice("EV needs " + std::to_string(spec.e_des) + " kWh but can take at most " +
                           std::to_string(capacity));
  }
  std::vector<std::size_t> hours;
  for (std::size_t h = 0; h < horizon; ++h) {
    if (spec.e_max[h] > 0.0) hours.push_back(h);
  }
  std::stable_sort(hours.begin(), hours.end(), [&](std::size_t a, std::size_t b) { return p[a] < p[b]; });

  DemandVector d(horizon);
  double remaining = spec.e_des;
  for (std::size_t h : hours) {
    if (remaining <= 0.0) break;
    const double take = std::min(spec.e_max[h], remaining);
    d[h] = take;
    remaining -= take;
  }
  return Bid{std::move(d), 0.0};
}

inline std::vector<std::string> check_plan(const EvSpec& spec, const DemandVector& d, double tol = 1e-9) {
  std::vector<std::string> out;
  if (d.size() != spec.e_max.size()) return {"plan length does not match horizon"};
  for (std::size_t h = 0; h < d.size(); ++h) {
    if (d[h] < -tol) out.push_back("hour " + std::to_string(h) + ": negative charge");
    if (d[h] > spec.e_max[h] + tol) out.push_back("hour " + std::to_string(h) + ": charge above e_max");
  }
  if (std::abs(d.sum() - spec.e_des) > tol * (1.0 + spec.e_des)) {
    out.push_back("total charge " + std::to_string(d.sum()) + " != e_des " + std::to_string(spec.e_des));
  }
  return out;
}

// ---------------------------------------------------------------------------
// EWH

/// Tank trajectory for a given heating schedule, with the minimal shortfall
/// that schedule implies:
///   T_h = T_{h-1} + (E_in_h - draw_h)/c_tank - r_loss (T_{h-1} - t_amb_h)
///   T_short_h = max(0, t_min - T_h)
///   E_short_h = draw_h T_short_h / (t_min - t_in_h)
inline EwhPlan ewh_simulate(const DemandVector& e_in, const EwhSpec& spec) {
  const std::size_t horizon = spec.draw.size();
  e_in.require_same_length(spec.draw, "ewh_simulate");
  EwhPlan plan{e_in, TemperatureVector(horizon), TemperatureVector(horizon), DemandVector(horizon)};
  double prev = spec.t0;
  for (std::size_t h = 0; h < horizon; ++h) {
    const double t = prev + (e_in[h] - spec.draw[h]) / spec.c_tank - spec.r_loss * (prev - spec.t_amb[h]);
    plan.t_tank[h] = t;
    plan.t_short[h] = std::max(0.0, spec.t_min - t);
    plan.e_short[h] = spec.draw[h] * plan.t_short[h] / (spec.t_min - spec.t_in[h]);
    prev = t;
  }
  return plan;
}

/// Benefit of a plan: hot water actually delivered, valued at the shortfall penalty.
inline double ewh_benefit(const EwhPlan& plan, const EwhSpec& spec) {
  double delivered = 0.0;
  for (std::size_t h = 0; h < plan.e_short.size(); ++h) delivered += spec.draw[h] - plan.e_short[h];
  return spec.p_short * delivered;
}

/// Builds the heater's day-ahead LP. Variable layout: [E_in (H) | T_tank (H) | T_short (H)].
inline LinearProgram ewh_program(const PriceVector& p, const EwhSpec& spec) {
  const std::size_t H = spec.draw.size();
  p.require_same_length(spec.draw, "ewh_program");
  const std::size_t n = 3 * H;
  LinearProgram lp(n);
  for (std::size_t h = 0; h < H; ++h) {
    lp.objective[h] = p[h];
    lp.upper[h] = spec.e_max;
    lp.set_free(H + h);
    lp.objective[2 * H + h] = spec.p_short * spec.draw[h] / (spec.t_min - spec.t_in[h]);
  }
  for (std::size_t h = 0; h < H; ++h) {
    // T_h - (1 - r) T_{h-1} - E_in_h / c = -draw_h / c + r t_amb_h   [+ (1 - r) t0 for h = 0]
    std::vector<double> row(n, 0.0);
    row[H + h] = 1.0;
    row[h] = -1.0 / spec.c_tank;
    double rhs = -spec.draw[h] / spec.c_tank + spec.r_loss * spec.t_amb[h];
    if (h == 0) {
      rhs += (1.0 - spec.r_loss) * spec.t0;
    } else {
      row[H + h - 1] = -(1.0 - spec.r_loss);
    }
    lp.add_row(std::move(row), Relation::Equal, rhs);
  }
  for (std::size_t h = 0; h < H; ++h) {
    std::vector<double> row(n, 0.0);
    row[2 * H + h] = 1.0;
    row[H + h] = 1.0;
    lp.add_row(std::move(row), Relation::GreaterEqual, spec.t_min);
  }
  return lp;
}

/// Heater best response at prices p: minimizes electricity cost plus shortfall
/// penalty. The returned plan is recomputed from the LP's heating schedule by
/// the forward recursion, so temperatures satisfy it exactly.
inline std::pair<Bid, EwhPlan> ewh_best_response(const PriceVector& p, const EwhSpec& spec) {
  const std::size_t H = spec.draw.size();
  const LpSolution sol = solve_lp(ewh_program(p, spec));
  if (sol.status != LpStatus::Optimal) {
    throw SolverFailure(std::string("water heater LP returned ") + to_string(sol.status));
  }
  DemandVector e_in(H);
  for (std::size_t h = 0; h < H; ++h) e_in[h] = std::clamp(sol.x[h], 0.0, spec.e_max);
  EwhPlan plan = ewh_simulate(e_in, spec);
  Bid bid{plan.e_in, ewh_benefit(plan, spec)};
  return {std::move(bid), std::move(plan)};
}

inline std::vector<std::string> check_plan(const EwhSpec& spec, const DemandVector& d, double tol = 1e-9) {
  std::vector<std::string> out;
  if (d.size() != spec.draw.size()) return {"plan length does not match horizon"};
  for (std::size_t h = 0; h < d.size(); ++h) {
    if (d[h] < -tol) out.push_back("hour " + std::to_string(h) + ": negative heating");
    if (d[h] > spec.e_max + tol) out.push_back("hour " + std::to_string(h) + ": heating above e_max");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Uniform device interface

inline Bid best_response(const PriceVector& p, const DeviceSpec& spec) {
  return std::visit(
      [&](const auto& s) -> Bid {
        if constexpr (std::is_same_v<std::decay_t<decltype(s)>, EvSpec>) {
          return ev_best_response(p, s);
        } else {
          return ewh_best_response(p, s).first;
        }
      },
      spec);
}

inline std::vector<std::string> check_plan(const DeviceSpec& spec, const DemandVector& d, double tol = 1e-9) {
  return std::visit([&](const auto& s) { return check_plan(s, d, tol); }, spec);
}

/// Best benefit the device can obtain while consuming exactly d (EV: zero; EWH:
/// value of delivered water under the minimal-shortfall trajectory).
inline double plan_benefit(const DeviceSpec& spec, const DemandVector& d) {
  return std::visit(
      [&](const auto& s) -> double {
        if constexpr (std::is_same_v<std::decay_t<decltype(s)>, EvSpec>) {
          return 0.0;
        } else {
          return ewh_benefit(ewh_simulate(d, s), s);
        }
      },
      spec);
}

/// Subproblem objective p·d - b (lower is better for the device).
inline double subproblem_value(const PriceVector& p, const DemandVector& d, double benefit) {
  return dot(p, d) - benefit;
}

}  // namespace dwm
