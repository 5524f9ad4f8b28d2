#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

#include "dwmarket/core.hpp"
#include "dwmarket/supply.hpp"

namespace dwm {

/// The bids collected so far (K'). Near-duplicates are refused.
class ExtremePointSet {
 public:
  explicit ExtremePointSet(std::size_t horizon) : horizon_(horizon) {}

  static constexpr double kDuplicateTol = 1e-9;

  std::size_t horizon() const noexcept { return horizon_; }
  std::size_t size() const noexcept { return bids_.size(); }
  bool empty() const noexcept { return bids_.empty(); }
  const Bid& operator[](std::size_t k) const { return bids_[k]; }
  const std::vector<Bid>& bids() const noexcept { return bids_; }

  /// Index of an existing point within kDuplicateTol (L-inf on demand and benefit), or size().
  std::size_t find(const Bid& bid) const {
    for (std::size_t k = 0; k < bids_.size(); ++k) {
      if (max_abs_diff(bids_[k].demand, bid.demand) <= kDuplicateTol &&
          std::abs(bids_[k].benefit - bid.benefit) <= kDuplicateTol) {
        return k;
      }
    }
    return bids_.size();
  }

  /// Appends unless the bid duplicates an existing point. Returns whether it was added.
  bool append(Bid bid) {
    if (bid.demand.size() != horizon_) {
      throw DomainError("bid horizon " + std::to_string(bid.demand.size()) + " != " + std::to_string(horizon_));
    }
    if (!std::isfinite(bid.benefit)) throw DomainError("bid benefit must be finite");
    if (find(bid) != bids_.size()) return false;
    bids_.push_back(std::move(bid));
    return true;
  }

 private:
  std::size_t horizon_;
  std::vector<Bid> bids_;
};

struct MasterSolution {
  std::vector<double> weights;
  DemandVector constructed_demand;
  PriceVector prices;
  double objective = 0.0;  // S_known = C(D) - B'(D)
  double b_prime = 0.0;    // B'(D) = sum_k w_k b_k
  double kkt_residual = 0.0;
  std::size_t gradient_iterations = 0;
};

struct MasterOptions {
  std::size_t max_iterations = 10000;
  double gradient_tol = 1e-8;  // relative: ||projected gradient|| <= tol (1 + |f|)
  double kkt_tol = 1e-7;
  std::vector<double> warm_start;  // weights of a previous solve; missing trailing entries are zero
};

/// Euclidean projection onto the probability simplex (sort-based).
inline Eigen::VectorXd project_to_simplex(const Eigen::VectorXd& v) {
  const Eigen::Index n = v.size();
  std::vector<double> u(v.data(), v.data() + n);
  std::sort(u.begin(), u.end(), std::greater<>());
  double cumulative = 0.0;
  double theta = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    cumulative += u[static_cast<std::size_t>(i)];
    const double t = (cumulative - 1.0) / static_cast<double>(i + 1);
    if (u[static_cast<std::size_t>(i)] - t > 0.0) theta = t;
  }
  return (v.array() - theta).cwiseMax(0.0).matrix();
}

namespace detail {

/// f(w) = (c/2) ||M w||^2 - b'w over the simplex, where c is the supply curvature.
struct MasterQp {
  Eigen::MatrixXd M;  // H x K, column k = demand of bid k
  Eigen::VectorXd b;
  double curvature;

  double value(const Eigen::VectorXd& w) const { return 0.5 * curvature * (M * w).squaredNorm() - b.dot(w); }
  Eigen::VectorXd gradient(const Eigen::VectorXd& w) const {
    return curvature * (M.transpose() * (M * w)) - b;
  }
  /// Natural residual ||w - P(w - g)||_inf; zero exactly at the optimum.
  double residual(const Eigen::VectorXd& w) const {
    return (w - project_to_simplex(w - gradient(w))).lpNorm<Eigen::Infinity>();
  }
};

/// Accelerated projected gradient with function-value restarts.
inline Eigen::VectorXd accelerated_projected_gradient(const MasterQp& qp, Eigen::VectorXd w,
                                                      const MasterOptions& opt, std::size_t& iterations) {
  const double lipschitz = qp.curvature * qp.M.squaredNorm();  // Frobenius bound on sigma_max^2
  const double step = lipschitz > 0.0 ? 1.0 / lipschitz : 1.0;
  Eigen::VectorXd y = w;
  double momentum = 1.0;
  double f = qp.value(w);
  iterations = 0;
  while (iterations < opt.max_iterations) {
    ++iterations;
    const Eigen::VectorXd next = project_to_simplex(y - step * qp.gradient(y));
    const double f_next = qp.value(next);
    if (f_next > f) {
      // Restart from the last iterate without momentum.
      y = w;
      momentum = 1.0;
      continue;
    }
    const double momentum_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
    y = next + ((momentum - 1.0) / momentum_next) * (next - w);
    momentum = momentum_next;
    w = next;
    f = f_next;
    const Eigen::VectorXd pg = (w - project_to_simplex(w - step * qp.gradient(w))) / step;
    if (pg.lpNorm<Eigen::Infinity>() <= opt.gradient_tol * (1.0 + std::abs(f))) break;
  }
  return w;
}

/// Primal active-set finish: solves the KKT system on the current support,
/// stepping to the boundary when a weight would go negative and adding the
/// most attractive inactive bid while one exists. Handles singular faces by
/// following the zero-curvature descent direction left in the residual.
inline Eigen::VectorXd active_set_refine(const MasterQp& qp, Eigen::VectorXd w) {
  const Eigen::Index K = w.size();
  const Eigen::MatrixXd Q = qp.curvature * (qp.M.transpose() * qp.M);
  std::vector<bool> active(static_cast<std::size_t>(K));
  for (Eigen::Index i = 0; i < K; ++i) {
    if (w[i] <= 1e-14) w[i] = 0.0;
    active[static_cast<std::size_t>(i)] = w[i] > 0.0;
  }
  w /= w.sum();

  const std::size_t budget = 20 * static_cast<std::size_t>(K) + 50;
  int full_steps = 0;
  for (std::size_t iter = 0; iter < budget; ++iter) {
    std::vector<Eigen::Index> F;
    for (Eigen::Index i = 0; i < K; ++i) {
      if (active[static_cast<std::size_t>(i)]) F.push_back(i);
    }
    const Eigen::Index nf = static_cast<Eigen::Index>(F.size());
    const Eigen::VectorXd g = qp.gradient(w);
    const double gscale = 1.0 + g.lpNorm<Eigen::Infinity>();

    Eigen::MatrixXd kkt = Eigen::MatrixXd::Zero(nf + 1, nf + 1);
    Eigen::VectorXd rhs(nf + 1);
    for (Eigen::Index a = 0; a < nf; ++a) {
      for (Eigen::Index c = 0; c < nf; ++c) kkt(a, c) = Q(F[a], F[c]);
      kkt(a, nf) = 1.0;
      kkt(nf, a) = 1.0;
      rhs[a] = -g[F[a]];
    }
    rhs[nf] = 0.0;
    const Eigen::CompleteOrthogonalDecomposition<Eigen::MatrixXd> cod(kkt);
    const Eigen::VectorXd sol = cod.solve(rhs);
    const Eigen::VectorXd resid = rhs - kkt * sol;

    Eigen::VectorXd step = Eigen::VectorXd::Zero(K);
    bool ray = false;
    if (resid.lpNorm<Eigen::Infinity>() > 1e-10 * gscale) {
      // Inconsistent system: the residual's first block is a descent direction
      // in the null space of Q restricted to the face.
      for (Eigen::Index a = 0; a < nf; ++a) step[F[a]] = resid[a];
      ray = true;
    } else {
      for (Eigen::Index a = 0; a < nf; ++a) step[F[a]] = sol[a];
    }

    // After a full step (and one refining step) the face is solved: price the inactive bids.
    if (!ray && (step.lpNorm<Eigen::Infinity>() <= 1e-13 || full_steps >= 2)) {
      double nu = 0.0;
      for (Eigen::Index i : F) nu += g[i];
      nu /= static_cast<double>(nf);
      Eigen::Index best = -1;
      double most_negative = -1e-11 * gscale;
      for (Eigen::Index i = 0; i < K; ++i) {
        if (active[static_cast<std::size_t>(i)]) continue;
        const double lambda = g[i] - nu;
        if (lambda < most_negative) {
          most_negative = lambda;
          best = i;
        }
      }
      if (best < 0) return w;
      // Enter along e_j minus the affine combination of the face closest to
      // column j. The slope is lambda_j < 0, so this always descends, even
      // when column j is affinely dependent on the face.
      Eigen::MatrixXd A(qp.M.rows() + 1, nf);
      Eigen::VectorXd target(qp.M.rows() + 1);
      for (Eigen::Index a = 0; a < nf; ++a) {
        A.col(a).head(qp.M.rows()) = qp.M.col(F[a]);
        A(qp.M.rows(), a) = 1.0;
      }
      target.head(qp.M.rows()) = qp.M.col(best);
      target[qp.M.rows()] = 1.0;
      const Eigen::VectorXd comb = A.completeOrthogonalDecomposition().solve(target);
      Eigen::VectorXd dir = Eigen::VectorXd::Zero(K);
      dir[best] = 1.0;
      for (Eigen::Index a = 0; a < nf; ++a) dir[F[a]] -= comb[a];
      dir[best] -= dir.sum();  // restore sum zero exactly
      const double slope = g.dot(dir);
      const double curvature = qp.curvature * (qp.M * dir).squaredNorm();
      double t = curvature > 0.0 ? -slope / curvature : std::numeric_limits<double>::infinity();
      Eigen::Index leaving = -1;
      for (Eigen::Index i = 0; i < K; ++i) {
        if (dir[i] < 0.0 && w[i] > 0.0) {
          const double limit = w[i] / -dir[i];
          if (limit < t) {
            t = limit;
            leaving = i;
          }
        }
      }
      active[static_cast<std::size_t>(best)] = true;
      full_steps = 0;
      if (!(slope < 0.0) || !std::isfinite(t)) continue;
      w += t * dir;
      if (leaving >= 0) {
        w[leaving] = 0.0;
        active[static_cast<std::size_t>(leaving)] = false;
      }
      for (Eigen::Index i = 0; i < K; ++i) {
        if (w[i] < 0.0) w[i] = 0.0;
      }
      w /= w.sum();
      continue;
    }

    double alpha = ray ? std::numeric_limits<double>::infinity() : 1.0;
    Eigen::Index blocking = -1;
    for (Eigen::Index i = 0; i < K; ++i) {
      if (step[i] < 0.0) {
        const double a = -w[i] / step[i];
        if (a < alpha) {
          alpha = a;
          blocking = i;
        }
      }
    }
    if (!std::isfinite(alpha)) return w;  // cannot happen for a nonzero direction summing to zero
    w += alpha * step;
    if (blocking >= 0) {
      w[blocking] = 0.0;
      active[static_cast<std::size_t>(blocking)] = false;
      full_steps = 0;
    } else if (!ray) {
      ++full_steps;
    }
    for (Eigen::Index i = 0; i < K; ++i) {
      if (w[i] < 0.0) w[i] = 0.0;
    }
    w /= w.sum();
  }
  return w;
}

}  // namespace detail

/// Chooses simplex weights over the collected bids minimizing C(sum w_k d_k) - sum w_k b_k.
template <SupplyCurve Supply>
MasterSolution solve_master(const ExtremePointSet& points, const Supply& supply, const MasterOptions& opt = {}) {
  if (points.empty()) throw DomainError("master problem needs at least one bid");
  const std::size_t H = points.horizon();
  const std::size_t K = points.size();

  detail::MasterQp qp{Eigen::MatrixXd(static_cast<Eigen::Index>(H), static_cast<Eigen::Index>(K)),
                      Eigen::VectorXd(static_cast<Eigen::Index>(K)), supply.curvature()};
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t h = 0; h < H; ++h) {
      qp.M(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(k)) = points[k].demand[h];
    }
    qp.b[static_cast<Eigen::Index>(k)] = points[k].benefit;
  }

  MasterSolution sol;
  Eigen::VectorXd w;
  if (K == 1) {
    w = Eigen::VectorXd::Ones(1);
  } else {
    Eigen::VectorXd start = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(K), 1.0 / static_cast<double>(K));
    std::vector<Eigen::VectorXd> candidates;
    if (!opt.warm_start.empty() && opt.warm_start.size() <= K) {
      Eigen::VectorXd warm = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(K));
      for (std::size_t k = 0; k < opt.warm_start.size(); ++k) warm[static_cast<Eigen::Index>(k)] = opt.warm_start[k];
      warm = project_to_simplex(warm);
      candidates.push_back(warm);
      candidates.push_back(detail::active_set_refine(qp, warm));
      start = warm;
    }
    const Eigen::VectorXd first = detail::accelerated_projected_gradient(qp, start, opt, sol.gradient_iterations);
    candidates.push_back(first);
    candidates.push_back(detail::active_set_refine(qp, first));
    // Lowest objective among the certified candidates; earlier candidates win ties.
    double f_best = std::numeric_limits<double>::infinity();
    double smallest_residual = std::numeric_limits<double>::infinity();
    for (const auto& c : candidates) {
      const double r = qp.residual(c);
      smallest_residual = std::min(smallest_residual, r);
      if (!(r <= opt.kkt_tol)) continue;
      const double f = qp.value(c);
      if (f < f_best) {
        f_best = f;
        w = c;
      }
    }
    if (w.size() == 0) {
      throw SolverFailure("master problem did not converge: KKT residual " + std::to_string(smallest_residual),
                          smallest_residual);
    }
  }
  sol.kkt_residual = qp.residual(w);

  sol.weights.assign(w.data(), w.data() + K);
  sol.constructed_demand = DemandVector(H);
  sol.b_prime = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    if (sol.weights[k] == 0.0) continue;
    sol.constructed_demand.add_scaled(sol.weights[k], points[k].demand);
    sol.b_prime += sol.weights[k] * points[k].benefit;
  }
  for (auto& d : sol.constructed_demand) d = std::max(d, 0.0);
  sol.prices = supply.marginal_prices(sol.constructed_demand);
  sol.objective = supply.cost(sol.constructed_demand) - sol.b_prime;
  return sol;
}

/// S_known - S_best for a bid elicited at prior.prices:
///   (b_k - p·d_k) - (B'(D) - p·D)
inline double optimality_gap(const Bid& new_bid, const MasterSolution& prior) {
  prior.prices.require_same_length(new_bid.demand, "optimality_gap");
  prior.prices.require_same_length(prior.constructed_demand, "optimality_gap");
  return (new_bid.benefit - dot(prior.prices, new_bid.demand)) -
         (prior.b_prime - dot(prior.prices, prior.constructed_demand));
}

/// Lower bound on the joint optimum implied by a best-response bid at prior.prices.
template <SupplyCurve Supply>
double lower_bound(const Bid& new_bid, const MasterSolution& prior, const Supply& supply) {
  const auto& p = prior.prices;
  const auto& D = prior.constructed_demand;
  return supply.cost(D) - dot(p, D) - new_bid.benefit + dot(p, new_bid.demand);
}

}  // namespace dwm
