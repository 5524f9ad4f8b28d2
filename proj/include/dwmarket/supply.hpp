#pragma once

#include <cmath>
#include <concepts>
#include <string>

#include "dwmarket/core.hpp"

namespace dwm {

/// What the master needs from the supply side: a convex production cost, its
/// gradient (the marginal prices) and an upper bound on its curvature.
template <class S>
concept SupplyCurve = requires(const S& s, const DemandVector& d) {
  { s.cost(d) } -> std::convertible_to<double>;
  { s.marginal_prices(d) } -> std::same_as<PriceVector>;
  { s.curvature() } -> std::convertible_to<double>;
};

/// C(D) = a * sum_h D_h^2, marginal price 2 a D_h.
struct SupplyModel {
  double a = 0.005;

  void validate() const {
    if (!(std::isfinite(a) && a > 0.0)) {
      throw DomainError("supply coefficient a must be finite and positive, got " + std::to_string(a));
    }
  }

  double cost(const DemandVector& d) const {
    require_nonnegative(d);
    double acc = 0.0;
    for (double x : d) acc += x * x;
    return a * acc;
  }

  PriceVector marginal_prices(const DemandVector& d) const {
    require_nonnegative(d);
    PriceVector p(d.size());
    for (std::size_t h = 0; h < d.size(); ++h) p[h] = 2.0 * a * d[h];
    return p;
  }

  /// Largest eigenvalue of the Hessian of cost().
  double curvature() const noexcept { return 2.0 * a; }

 private:
  static void require_nonnegative(const DemandVector& d) {
    for (std::size_t h = 0; h < d.size(); ++h) {
      // The master may hand back -1e-17 style round-off from convex combinations.
      if (d[h] < -1e-9) {
        throw DomainError("negative demand " + std::to_string(d[h]) + " at hour " + std::to_string(h));
      }
    }
  }
};

static_assert(SupplyCurve<SupplyModel>);

inline double generation_cost(const DemandVector& d, const SupplyModel& s) { return s.cost(d); }
inline PriceVector marginal_prices(const DemandVector& d, const SupplyModel& s) { return s.marginal_prices(d); }

}  // namespace dwm
