#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "dwmarket/error.hpp"

namespace dwm {

enum class Relation { LessEqual, Equal, GreaterEqual };

/// min c'x  s.t.  rows[i]·x (rel_i) rhs_i,  lower <= x <= upper.
/// Bounds may be infinite; a variable with both bounds infinite is free.
struct LinearProgram {
  std::vector<double> objective;
  std::vector<std::vector<double>> rows;
  std::vector<Relation> relations;
  std::vector<double> rhs;
  std::vector<double> lower;
  std::vector<double> upper;

  LinearProgram() = default;
  explicit LinearProgram(std::size_t num_vars)
      : objective(num_vars, 0.0),
        lower(num_vars, 0.0),
        upper(num_vars, std::numeric_limits<double>::infinity()) {}

  std::size_t num_variables() const noexcept { return objective.size(); }
  std::size_t num_constraints() const noexcept { return rows.size(); }

  void add_row(std::vector<double> coeffs, Relation rel, double b) {
    rows.push_back(std::move(coeffs));
    relations.push_back(rel);
    rhs.push_back(b);
  }

  void set_free(std::size_t j) {
    lower[j] = -std::numeric_limits<double>::infinity();
    upper[j] = std::numeric_limits<double>::infinity();
  }

  void validate() const {
    const std::size_t n = objective.size();
    if (lower.size() != n || upper.size() != n) {
      throw DomainError("linear program: bound vectors must have one entry per variable");
    }
    if (relations.size() != rows.size() || rhs.size() != rows.size()) {
      throw DomainError("linear program: rows, relations and rhs differ in length");
    }
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i].size() != n) {
        throw DomainError("linear program: row " + std::to_string(i) + " has " +
                          std::to_string(rows[i].size()) + " coefficients, expected " +
                          std::to_string(n));
      }
      for (double a : rows[i]) {
        if (!std::isfinite(a)) throw DomainError("linear program: non-finite coefficient");
      }
      if (!std::isfinite(rhs[i])) throw DomainError("linear program: non-finite rhs");
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (!std::isfinite(objective[j])) throw DomainError("linear program: non-finite cost");
      if (std::isnan(lower[j]) || std::isnan(upper[j]) || lower[j] == std::numeric_limits<double>::infinity() ||
          upper[j] == -std::numeric_limits<double>::infinity()) {
        throw DomainError("linear program: invalid bound on variable " + std::to_string(j));
      }
    }
  }
};

enum class LpStatus { Optimal, Infeasible, Unbounded };

inline const char* to_string(LpStatus s) {
  switch (s) {
    case LpStatus::Optimal: return "optimal";
    case LpStatus::Infeasible: return "infeasible";
    case LpStatus::Unbounded: return "unbounded";
  }
  return "?";
}

struct LpSolution {
  LpStatus status = LpStatus::Infeasible;
  std::vector<double> x;
  double objective = 0.0;
  std::size_t pivots = 0;
};

struct LpOptions {
  double pivot_tol = 1e-9;
  double feasibility_tol = 1e-7;
  double optimality_tol = 1e-9;
  std::size_t max_pivots = 500000;
};

namespace detail {

/// Dense simplex tableau in standard form (all structural columns >= 0, rhs >= 0).
class Tableau {
 public:
  Tableau(std::size_t rows, std::size_t cols)
      : m_(rows), n_(cols), a_(rows * (cols + 1), 0.0), basis_(rows, 0), cost_(cols + 1, 0.0) {}

  double& at(std::size_t i, std::size_t j) { return a_[i * (n_ + 1) + j]; }
  double at(std::size_t i, std::size_t j) const { return a_[i * (n_ + 1) + j]; }
  double& rhs(std::size_t i) { return at(i, n_); }
  double rhs(std::size_t i) const { return at(i, n_); }

  std::size_t rows() const { return m_; }
  std::size_t cols() const { return n_; }
  std::vector<std::size_t>& basis() { return basis_; }

  /// Loads reduced costs for cost vector c given the current basis.
  void price(const std::vector<double>& c) {
    for (std::size_t j = 0; j < n_; ++j) cost_[j] = c[j];
    cost_[n_] = 0.0;
    for (std::size_t i = 0; i < m_; ++i) {
      const double cb = c[basis_[i]];
      if (cb == 0.0) continue;
      for (std::size_t j = 0; j <= n_; ++j) cost_[j] -= cb * at(i, j);
    }
  }

  double objective_value() const { return -cost_[n_]; }
  double reduced_cost(std::size_t j) const { return cost_[j]; }

  void pivot(std::size_t r, std::size_t c) {
    const double piv = at(r, c);
    for (std::size_t j = 0; j <= n_; ++j) at(r, j) /= piv;
    at(r, c) = 1.0;
    for (std::size_t i = 0; i < m_; ++i) {
      if (i == r) continue;
      const double f = at(i, c);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j <= n_; ++j) at(i, j) -= f * at(r, j);
      at(i, c) = 0.0;
    }
    const double f = cost_[c];
    if (f != 0.0) {
      for (std::size_t j = 0; j <= n_; ++j) cost_[j] -= f * at(r, j);
      cost_[c] = 0.0;
    }
    basis_[r] = c;
  }

  enum class Outcome { Optimal, Unbounded, PivotLimit };

  /// Primal simplex with Bland's rule over the allowed columns.
  Outcome run(const std::vector<bool>& allowed, const LpOptions& opt, std::size_t& pivots) {
    for (;;) {
      std::size_t enter = n_;
      for (std::size_t j = 0; j < n_; ++j) {
        if (allowed[j] && cost_[j] < -opt.optimality_tol) {
          enter = j;
          break;
        }
      }
      if (enter == n_) return Outcome::Optimal;

      std::size_t leave = m_;
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < m_; ++i) {
        const double a = at(i, enter);
        if (a <= opt.pivot_tol) continue;
        const double ratio = std::max(rhs(i), 0.0) / a;
        const double eps = 1e-12 * (1.0 + std::abs(ratio));
        if (leave == m_ || ratio < best - eps) {
          best = ratio;
          leave = i;
        } else if (ratio <= best + eps && basis_[i] < basis_[leave]) {
          best = std::min(best, ratio);
          leave = i;
        }
      }
      if (leave == m_) return Outcome::Unbounded;
      if (++pivots > opt.max_pivots) return Outcome::PivotLimit;
      pivot(leave, enter);
    }
  }

  bool finite() const {
    for (double v : a_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

 private:
  std::size_t m_;
  std::size_t n_;
  std::vector<double> a_;
  std::vector<std::size_t> basis_;
  std::vector<double> cost_;
};

}  // namespace detail

/// Two-phase dense primal simplex (Bland's rule). Throws DomainError on a
/// malformed program and SolverFailure on numerical breakdown.
inline LpSolution solve_lp(const LinearProgram& lp, const LpOptions& opt = {}) {
  lp.validate();
  const std::size_t n = lp.num_variables();

  // x_j = offset_j + sign_j * y_col  (free variables use two columns).
  struct Mapping {
    double offset = 0.0;
    std::size_t col = 0;
    double sign = 1.0;
    bool split = false;
  };
  std::vector<Mapping> map(n);
  std::size_t ny = 0;
  for (std::size_t j = 0; j < n; ++j) {
    if (std::isfinite(lp.lower[j])) {
      map[j] = {lp.lower[j], ny++, 1.0, false};
    } else if (std::isfinite(lp.upper[j])) {
      map[j] = {lp.upper[j], ny++, -1.0, false};
    } else {
      map[j] = {0.0, ny, 1.0, true};
      ny += 2;
    }
  }

  struct Row {
    std::vector<double> a;
    Relation rel;
    double b;
  };
  std::vector<Row> rows;
  rows.reserve(lp.num_constraints() + n);
  for (std::size_t i = 0; i < lp.num_constraints(); ++i) {
    Row r{std::vector<double>(ny, 0.0), lp.relations[i], lp.rhs[i]};
    for (std::size_t j = 0; j < n; ++j) {
      const double a = lp.rows[i][j];
      if (a == 0.0) continue;
      r.b -= a * map[j].offset;
      r.a[map[j].col] += a * map[j].sign;
      if (map[j].split) r.a[map[j].col + 1] -= a;
    }
    rows.push_back(std::move(r));
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (std::isfinite(lp.lower[j]) && std::isfinite(lp.upper[j])) {
      if (lp.upper[j] < lp.lower[j]) return LpSolution{LpStatus::Infeasible, {}, 0.0, 0};
      Row r{std::vector<double>(ny, 0.0), Relation::LessEqual, lp.upper[j] - lp.lower[j]};
      r.a[map[j].col] = 1.0;
      rows.push_back(std::move(r));
    }
  }
  for (auto& r : rows) {
    if (r.b < 0.0) {
      for (auto& a : r.a) a = -a;
      r.b = -r.b;
      if (r.rel == Relation::LessEqual) {
        r.rel = Relation::GreaterEqual;
      } else if (r.rel == Relation::GreaterEqual) {
        r.rel = Relation::LessEqual;
      }
    }
  }

  const std::size_t m = rows.size();
  std::size_t n_slack = 0;
  std::size_t n_art = 0;
  for (const auto& r : rows) {
    if (r.rel != Relation::Equal) ++n_slack;
    if (r.rel != Relation::LessEqual) ++n_art;
  }
  const std::size_t first_art = ny + n_slack;
  const std::size_t total = first_art + n_art;

  detail::Tableau t(m, total);
  std::size_t next_slack = ny;
  std::size_t next_art = first_art;
  double rhs_scale = 1.0;
  for (std::size_t i = 0; i < m; ++i) {
    const Row& r = rows[i];
    for (std::size_t j = 0; j < ny; ++j) t.at(i, j) = r.a[j];
    t.rhs(i) = r.b;
    rhs_scale = std::max(rhs_scale, std::abs(r.b));
    switch (r.rel) {
      case Relation::LessEqual:
        t.at(i, next_slack) = 1.0;
        t.basis()[i] = next_slack++;
        break;
      case Relation::GreaterEqual:
        t.at(i, next_slack++) = -1.0;
        t.at(i, next_art) = 1.0;
        t.basis()[i] = next_art++;
        break;
      case Relation::Equal:
        t.at(i, next_art) = 1.0;
        t.basis()[i] = next_art++;
        break;
    }
  }

  LpSolution sol;
  std::vector<bool> allowed(total, true);

  auto breakdown = [&](const char* phase) {
    std::ostringstream os;
    os << "simplex breakdown in " << phase << " after " << sol.pivots << " pivots (" << m
       << " rows, " << total << " columns)";
    return SolverFailure(os.str(), static_cast<double>(sol.pivots));
  };

  if (n_art > 0) {
    std::vector<double> c1(total, 0.0);
    for (std::size_t j = first_art; j < total; ++j) c1[j] = 1.0;
    t.price(c1);
    const auto outcome = t.run(allowed, opt, sol.pivots);
    if (outcome == detail::Tableau::Outcome::PivotLimit || !t.finite()) throw breakdown("phase 1");
    if (t.objective_value() > opt.feasibility_tol * rhs_scale) {
      sol.status = LpStatus::Infeasible;
      return sol;
    }
    // Drive remaining zero-level artificials out of the basis where possible.
    for (std::size_t i = 0; i < m; ++i) {
      if (t.basis()[i] < first_art) continue;
      std::size_t best = total;
      double best_abs = opt.pivot_tol;
      for (std::size_t j = 0; j < first_art; ++j) {
        if (std::abs(t.at(i, j)) > best_abs) {
          best_abs = std::abs(t.at(i, j));
          best = j;
        }
      }
      if (best < total) t.pivot(i, best);
    }
    for (std::size_t j = first_art; j < total; ++j) allowed[j] = false;
  }

  std::vector<double> c2(total, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const double c = lp.objective[j];
    c2[map[j].col] += c * map[j].sign;
    if (map[j].split) c2[map[j].col + 1] -= c;
  }
  t.price(c2);
  const auto outcome = t.run(allowed, opt, sol.pivots);
  if (outcome == detail::Tableau::Outcome::PivotLimit || !t.finite()) throw breakdown("phase 2");
  if (outcome == detail::Tableau::Outcome::Unbounded) {
    sol.status = LpStatus::Unbounded;
    return sol;
  }

  std::vector<double> y(total, 0.0);
  for (std::size_t i = 0; i < m; ++i) y[t.basis()[i]] = std::max(t.rhs(i), 0.0);
  sol.x.assign(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    double v = map[j].offset + map[j].sign * y[map[j].col];
    if (map[j].split) v -= y[map[j].col + 1];
    sol.x[j] = v;
  }
  sol.status = LpStatus::Optimal;

  // Verify primal feasibility against the original rows.
  double worst = 0.0;
  for (std::size_t i = 0; i < lp.num_constraints(); ++i) {
    double lhs = 0.0;
    for (std::size_t j = 0; j < n; ++j) lhs += lp.rows[i][j] * sol.x[j];
    double viol = 0.0;
    switch (lp.relations[i]) {
      case Relation::LessEqual: viol = lhs - lp.rhs[i]; break;
      case Relation::GreaterEqual: viol = lp.rhs[i] - lhs; break;
      case Relation::Equal: viol = std::abs(lhs - lp.rhs[i]); break;
    }
    worst = std::max(worst, viol);
  }
  if (worst > 1e3 * opt.feasibility_tol * rhs_scale) {
    throw SolverFailure("simplex solution violates a constraint by " + std::to_string(worst), worst);
  }
  for (std::size_t j = 0; j < n; ++j) {
    if (sol.x[j] < lp.lower[j]) sol.x[j] = lp.lower[j];
    if (sol.x[j] > lp.upper[j]) sol.x[j] = lp.upper[j];
  }
  sol.objective = 0.0;
  for (std::size_t j = 0; j < n; ++j) sol.objective += lp.objective[j] * sol.x[j];
  return sol;
}

}  // namespace dwm
