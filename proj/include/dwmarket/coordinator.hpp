#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dwmarket/core.hpp"
#include "dwmarket/master.hpp"
#include "dwmarket/scenario.hpp"
#include "dwmarket/supply.hpp"
#include "dwmarket/transport/network.hpp"

namespace dwm {

struct DwSettings {
  int max_iters = 24;
  std::optional<double> gap_tol;  // empty: 1e-6 (1 + C(D_0))
  InitialPriceRule initial_prices;
  std::chrono::milliseconds round_timeout = std::chrono::seconds(30);
  MasterOptions master;

  static DwSettings from(const ScenarioConfig& cfg) {
    DwSettings s;
    s.max_iters = cfg.dw.max_iters;
    s.gap_tol = cfg.dw.gap_tol;
    s.initial_prices = cfg.dw.initial_prices;
    return s;
  }
};

inline PriceVector initial_prices(const ScenarioConfig& cfg, const InitialPriceRule& rule) {
  const std::size_t H = cfg.horizon;
  switch (rule.kind) {
    case InitialPriceKind::Zero:
      return PriceVector(H);
    case InitialPriceKind::Explicit:
      if (rule.prices.size() != H) {
        throw DomainError("explicit initial prices have length " + std::to_string(rule.prices.size()) +
                          ", horizon is " + std::to_string(H));
      }
      return PriceVector(rule.prices);
    case InitialPriceKind::FlatAverage:
      break;
  }
  ExactSum total;
  for (const auto& d : cfg.devices()) total.add(energy_requirement(d.spec));
  return PriceVector(H, cfg.supply.curvature() * total.value() / static_cast<double>(H));
}

inline PriceVector initial_prices(const ScenarioConfig& cfg) { return initial_prices(cfg, cfg.dw.initial_prices); }

/// Exact sum of the bids in ascending id order. Forwarded partial sums are used when present.
inline Bid aggregate_bids(std::span<const DeviceBid> bids, std::size_t horizon) {
  std::vector<const DeviceBid*> order;
  for (const auto& b : bids) order.push_back(&b);
  std::sort(order.begin(), order.end(), [](auto* a, auto* b) { return a->device_id < b->device_id; });
  for (std::size_t i = 1; i < order.size(); ++i) {
    if (order[i]->device_id == order[i - 1]->device_id) {
      throw ProtocolError("duplicate bid from '" + order[i]->device_id + "'", {order[i]->device_id});
    }
  }
  BidAccumulator acc(horizon);
  for (const auto* b : order) {
    if (b->terms) {
      acc.add(*b->terms);
    } else {
      acc.add(b->bid);
    }
  }
  return acc.result();
}

inline Bid aggregate_bids(const std::vector<std::pair<std::string, Bid>>& bids, std::size_t horizon) {
  std::vector<DeviceBid> wrapped;
  for (const auto& [id, bid] : bids) wrapped.push_back(DeviceBid{id, bid, std::nullopt});
  return aggregate_bids(wrapped, horizon);
}

/// Metrics of a demand vector priced at its marginal cost.
inline MetricsRow metrics_for(const DemandVector& D, const PriceVector& p, const SupplyModel& supply) {
  constexpr double nan = std::numeric_limits<double>::quiet_NaN();
  MetricsRow m;
  const bool positive = D.mean() > 0.0;
  m.par_demand = positive ? par(D) : nan;
  m.par_price = p.mean() > 0.0 ? par(p) : nan;
  m.std_demand = std_dev(D);
  m.std_price = std_dev(p);
  m.generation_cost = supply.cost(D);
  m.user_payment = user_payment(p, D);
  return m;
}

struct IterationRecord {
  int iteration = 0;
  PriceVector prices;  // announced this round
  Bid aggregate;       // summed best responses to those prices
  bool appended = false;
  MasterSolution master;  // in force after the round
  double s_known = std::numeric_limits<double>::quiet_NaN();  // objective the gap refers to
  double s_best = -std::numeric_limits<double>::infinity();
  double s_best_max = -std::numeric_limits<double>::infinity();
  double gap = std::numeric_limits<double>::infinity();
  MetricsRow metrics;
  std::size_t num_bids = 0;
};

struct DeviceAllocation {
  std::string device_id;
  DemandVector demand;
  double benefit = 0.0;  // sum_k w_k b_{j,k}
};

struct Allocation {
  std::vector<DeviceAllocation> devices;  // ascending id
  PriceVector prices;
  std::vector<double> weights;
  std::vector<int> rounds;  // rounds[k]: iteration whose bid is extreme point k
};

enum class RunStatus { Converged, IterationLimit };

inline const char* to_string(RunStatus s) { return s == RunStatus::Converged ? "converged" : "iteration-limit"; }

struct DwResult {
  std::vector<IterationRecord> records;
  Allocation allocation;
  RunStatus status = RunStatus::IterationLimit;
  MasterSolution final_master;
  PriceVector initial_prices;
  DemandVector initial_demand;  // aggregate best response to the initial prices
  double gap_tol = 0.0;
};

/// d_j* = sum_k w_k d_{j,k} for every participant. history[id][k] is its bid in extreme point k.
inline std::vector<DeviceAllocation> disaggregate(const std::vector<double>& weights,
                                                  const std::map<std::string, std::vector<Bid>>& history,
                                                  std::size_t horizon) {
  std::vector<DeviceAllocation> out;
  for (const auto& [id, bids] : history) {
    if (bids.size() != weights.size()) {
      throw ProtocolError("bid history of '" + id + "' has " + std::to_string(bids.size()) + " rows, expected " +
                              std::to_string(weights.size()),
                          {id});
    }
    DeviceAllocation a{id, DemandVector(horizon), 0.0};
    for (std::size_t k = 0; k < weights.size(); ++k) {
      if (weights[k] == 0.0) continue;
      a.demand.add_scaled(weights[k], bids[k].demand);
      a.benefit += weights[k] * bids[k].benefit;
    }
    out.push_back(std::move(a));
  }
  return out;
}

inline constexpr double kConservationTol = 1e-9;

/// The price-coordination loop. Each round announces prices, collects best
/// responses, and either certifies the current master solution (gap within
/// tolerance, or a repeated bid) or appends the new bid and re-solves.
inline DwResult run_dw(const ScenarioConfig& cfg, const DwSettings& settings, DeviceNetwork& network) {
  if (settings.max_iters < 1) throw DomainError("max_iters must be at least 1");
  if (network.horizon() != cfg.horizon) throw DomainError("network horizon differs from the scenario horizon");
  const std::size_t H = cfg.horizon;
  const SupplyModel& supply = cfg.supply;
  const std::vector<std::string> ids = network.participants();

  DwResult result;
  result.initial_prices = initial_prices(cfg, settings.initial_prices);
  ExtremePointSet points(H);
  std::map<std::string, std::vector<Bid>> history;
  for (const auto& id : ids) history[id];

  PriceVector prices = result.initial_prices;
  std::optional<MasterSolution> master;
  double s_best_max = -std::numeric_limits<double>::infinity();
  double gap_tol = settings.gap_tol.value_or(0.0);

  for (int k = 0; k < settings.max_iters; ++k) {
    IterationRecord rec;
    rec.iteration = k;
    rec.prices = prices;
    network.broadcast_prices(k, prices);
    const auto bids = network.collect_bids(k, ids, settings.round_timeout);
    rec.num_bids = bids.size();
    rec.aggregate = aggregate_bids(bids, H);
    if (k == 0) result.initial_demand = rec.aggregate.demand;

    bool done = false;
    if (master) {
      rec.s_known = master->objective;
      rec.gap = optimality_gap(rec.aggregate, *master);
      rec.s_best = lower_bound(rec.aggregate, *master, supply);
      s_best_max = std::max(s_best_max, rec.s_best);
      done = rec.gap <= gap_tol || points.find(rec.aggregate) != points.size();
    }
    rec.s_best_max = s_best_max;

    if (!done) {
      points.append(rec.aggregate);
      for (const auto& b : bids) history[b.device_id].push_back(b.bid);
      result.allocation.rounds.push_back(k);
      MasterOptions opt = settings.master;
      if (master) opt.warm_start = master->weights;
      master = solve_master(points, supply, opt);
      rec.appended = true;
      if (k == 0 && !settings.gap_tol) gap_tol = 1e-6 * (1.0 + supply.cost(master->constructed_demand));
      // An empty market has nothing left to improve.
      if (ids.empty()) done = true;
    }

    rec.master = *master;
    rec.metrics = metrics_for(master->constructed_demand, master->prices, supply);
    result.records.push_back(std::move(rec));
    prices = master->prices;
    if (done) {
      result.status = RunStatus::Converged;
      break;
    }
  }

  result.gap_tol = gap_tol;
  result.final_master = *master;
  Allocation& alloc = result.allocation;
  alloc.weights = master->weights;
  alloc.prices = master->prices;
  alloc.devices = disaggregate(alloc.weights, history, H);

  DemandVector total(H);
  for (std::size_t h = 0; h < H; ++h) {
    ExactSum s;
    for (const auto& d : alloc.devices) s.add(d.demand[h]);
    total[h] = s.value();
  }
  const double violation = max_abs_diff(total, master->constructed_demand);
  if (!(violation <= kConservationTol)) {
    throw InvariantError("device allocations do not add up to the constructed demand (max deviation " +
                         std::to_string(violation) + ")");
  }

  for (const auto& d : alloc.devices) {
    network.allocate(FinalAllocate{d.device_id, d.demand.raw(), alloc.prices.raw(), alloc.weights, alloc.rounds});
  }
  return result;
}

/// Runs the loop with every device answering in process, settings taken from the scenario.
inline DwResult run_dw(const ScenarioConfig& cfg) {
  auto net = LocalNetwork::from_scenario(cfg);
  return run_dw(cfg, DwSettings::from(cfg), *net);
}

inline DwResult run_dw(const ScenarioConfig& cfg, const DwSettings& settings) {
  auto net = LocalNetwork::from_scenario(cfg);
  return run_dw(cfg, settings, *net);
}

}  // namespace dwm
