#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dwmarket/error.hpp"

namespace dwm {

struct EnergyUnit {
  static constexpr const char* name = "kWh";
};
struct PriceUnit {
  static constexpr const char* name = "$/kWh";
};
struct TemperatureUnit {
  static constexpr const char* name = "degC";
};

/// One value per hour of the scheduling horizon, tagged with its unit so that
/// prices and energies cannot be mixed up at compile time.
template <class Unit>
class Hourly {
 public:
  using unit_type = Unit;

  Hourly() = default;
  explicit Hourly(std::size_t horizon, double fill = 0.0) : values_(horizon, fill) {}
  explicit Hourly(std::vector<double> values) : values_(std::move(values)) { require_finite(); }
  Hourly(std::initializer_list<double> values) : values_(values) { require_finite(); }

  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  double operator[](std::size_t h) const { return values_[h]; }
  double& operator[](std::size_t h) { return values_[h]; }

  auto begin() const noexcept { return values_.begin(); }
  auto end() const noexcept { return values_.end(); }
  auto begin() noexcept { return values_.begin(); }
  auto end() noexcept { return values_.end(); }

  std::span<const double> values() const noexcept { return values_; }
  const std::vector<double>& raw() const noexcept { return values_; }

  double sum() const noexcept { return std::accumulate(values_.begin(), values_.end(), 0.0); }
  double max() const {
    if (values_.empty()) throw DomainError("max of empty hourly vector");
    return *std::max_element(values_.begin(), values_.end());
  }
  double mean() const {
    if (values_.empty()) throw DomainError("mean of empty hourly vector");
    return sum() / static_cast<double>(values_.size());
  }
  bool all_finite() const noexcept {
    return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
  }

  Hourly& operator+=(const Hourly& other) {
    require_same_length(other, "+=");
    for (std::size_t h = 0; h < values_.size(); ++h) values_[h] += other.values_[h];
    return *this;
  }
  Hourly& operator*=(double s) noexcept {
    for (auto& v : values_) v *= s;
    return *this;
  }
  friend Hourly operator+(Hourly lhs, const Hourly& rhs) { return lhs += rhs; }
  friend Hourly operator*(double s, Hourly v) { return v *= s; }

  /// this += s * other
  void add_scaled(double s, const Hourly& other) {
    require_same_length(other, "add_scaled");
    for (std::size_t h = 0; h < values_.size(); ++h) values_[h] += s * other.values_[h];
  }

  friend bool operator==(const Hourly&, const Hourly&) = default;

  template <class Other>
  void require_same_length(const Hourly<Other>& other, const char* op) const {
    if (other.size() != size()) {
      throw DomainError(std::string("hourly vector length mismatch in ") + op + ": " +
                        std::to_string(size()) + " vs " + std::to_string(other.size()));
    }
  }

 private:
  void require_finite() const {
    if (!all_finite()) throw DomainError("hourly vector contains a non-finite value");
  }

  std::vector<double> values_;
};

using DemandVector = Hourly<EnergyUnit>;
using PriceVector = Hourly<PriceUnit>;
using TemperatureVector = Hourly<TemperatureUnit>;

inline constexpr std::size_t kDefaultHorizon = 24;

/// A consumption plan with the benefit its owner attaches to it.
struct Bid {
  DemandVector demand;
  double benefit = 0.0;

  friend bool operator==(const Bid&, const Bid&) = default;
};

struct MetricsRow {
  double par_demand = 0.0;
  double par_price = 0.0;
  double std_demand = 0.0;
  double std_price = 0.0;
  double generation_cost = 0.0;
  double user_payment = 0.0;
};

/// Peak-to-average ratio.
template <class U>
double par(const Hourly<U>& v) {
  if (v.empty()) throw DomainError("par of empty vector");
  for (double x : v) {
    if (x < 0.0) throw DomainError("par requires nonnegative values");
  }
  const double mean = v.mean();
  if (!(mean > 0.0)) throw DomainError("par requires a positive mean");
  // A constant vector's mean is the constant itself, whatever the rounding of the sum.
  if (std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; })) return 1.0;
  return v.max() / mean;
}

/// Population standard deviation.
template <class U>
double std_dev(const Hourly<U>& v) {
  if (v.empty()) throw DomainError("standard deviation of empty vector");
  const double mean = v.mean();
  double acc = 0.0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size()));
}

inline double dot(const PriceVector& p, const DemandVector& d) {
  p.require_same_length(d, "dot");
  double acc = 0.0;
  for (std::size_t h = 0; h < p.size(); ++h) acc += p[h] * d[h];
  return acc;
}

inline double user_payment(const PriceVector& p, const DemandVector& d) { return dot(p, d); }

/// L-infinity distance between two equally long vectors.
template <class U>
double max_abs_diff(const Hourly<U>& a, const Hourly<U>& b) {
  a.require_same_length(b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t h = 0; h < a.size(); ++h) m = std::max(m, std::abs(a[h] - b[h]));
  return m;
}

/// Correctly rounded floating-point summation (Shewchuk partials, as in
/// Python's math.fsum). The result does not depend on the order of additions,
/// and the partials themselves can be forwarded to continue the sum elsewhere.
class ExactSum {
 public:
  void add(double x) {
    std::size_t i = 0;
    for (double y : partials_) {
      if (std::abs(x) < std::abs(y)) std::swap(x, y);
      const double hi = x + y;
      const double lo = y - (hi - x);
      if (lo != 0.0) partials_[i++] = lo;
      x = hi;
    }
    partials_.resize(i);
    partials_.push_back(x);
  }

  void add(std::span<const double> xs) {
    for (double x : xs) add(x);
  }

  const std::vector<double>& partials() const noexcept { return partials_; }

  double value() const {
    std::size_t n = partials_.size();
    if (n == 0) return 0.0;
    double hi = partials_[--n];
    double lo = 0.0;
    while (n > 0) {
      const double x = hi;
      const double y = partials_[--n];
      hi = x + y;
      const double yr = hi - x;
      lo = y - yr;
      if (lo != 0.0) break;
    }
    // Round-half-even correction when the remaining partials push past a tie.
    if (n > 0 && ((lo < 0.0 && partials_[n - 1] < 0.0) || (lo > 0.0 && partials_[n - 1] > 0.0))) {
      const double y = lo * 2.0;
      const double x = hi + y;
      const double yr = x - hi;
      if (y == yr) hi = x;
    }
    return hi;
  }

 private:
  std::vector<double> partials_;
};

/// Exact partial sums of a set of bids: one partials list per hour plus one
/// for the benefit. Forwarded by aggregators so that the top-level total is
/// identical to a flat sum regardless of the grouping.
struct BidTerms {
  std::vector<std::vector<double>> demand;
  std::vector<double> benefit;

  friend bool operator==(const BidTerms&, const BidTerms&) = default;
};

class BidAccumulator {
 public:
  explicit BidAccumulator(std::size_t horizon) : hours_(horizon) {}

  void add(const Bid& bid) {
    check_horizon(bid.demand.size());
    for (std::size_t h = 0; h < hours_.size(); ++h) hours_[h].add(bid.demand[h]);
    benefit_.add(bid.benefit);
  }

  void add(const BidTerms& terms) {
    check_horizon(terms.demand.size());
    for (std::size_t h = 0; h < hours_.size(); ++h) hours_[h].add(terms.demand[h]);
    benefit_.add(terms.benefit);
  }

  Bid result() const {
    DemandVector d(hours_.size());
    for (std::size_t h = 0; h < hours_.size(); ++h) d[h] = hours_[h].value();
    return Bid{std::move(d), benefit_.value()};
  }

  BidTerms terms() const {
    BidTerms t;
    t.demand.reserve(hours_.size());
    for (const auto& s : hours_) t.demand.push_back(s.partials());
    t.benefit = benefit_.partials();
    return t;
  }

  std::size_t horizon() const noexcept { return hours_.size(); }

 private:
  void check_horizon(std::size_t n) const {
    if (n != hours_.size()) {
      throw DomainError("bid horizon " + std::to_string(n) + " does not match " +
                        std::to_string(hours_.size()));
    }
  }

  std::vector<ExactSum> hours_;
  ExactSum benefit_;
};

}  // namespace dwm
