#pragma once

#include <chrono>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "cbasdm/losses.hpp"
#include "cbasdm/majorizer.hpp"
#include "cbasdm/model.hpp"
#include "cbasdm/numeric.hpp"

namespace cbasdm {

/// A fitted model plus convergence diagnostics.
struct Fit {
  Coefficients coeffs;
  MethodConfig method;
  int iterations = 0;
  bool converged = false;
  std::vector<double> loss_path;  // penalized objective after each accepted step
  double wall_time = 0.0;         // seconds
  Index nnz = 0;
  double objective = 0.0;         // final penalized objective of the minimized surrogate
};

inline Index count_nonzero(const Eigen::VectorXd& v) {
  Index k = 0;
  for (Index j = 0; j < v.size(); ++j) k += v[j] != 0.0 ? 1 : 0;
  return k;
}

namespace detail {

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct CdOutcome {
  Eigen::VectorXd alpha;
  std::vector<double> path;
  int iterations = 0;
  bool converged = false;
};

inline double penalty(const Eigen::VectorXd& alpha, const Eigen::VectorXd& tau) {
  return tau.dot(alpha.cwiseAbs());
}

// Greedy coordinate descent: each round evaluates the penalized bound at the
// one-step Newton point for every coordinate and moves the best one.
template <class Surrogate>
CdOutcome coordinate_descent(Surrogate& sur, const Eigen::VectorXd& tau, double tol, int max_iter) {
  const Index p = tau.size();
  CdOutcome out;
  double current = sur.objective() + penalty(sur.alpha(), tau);
  out.path.push_back(current);
  std::vector<bool> stalled(static_cast<std::size_t>(p), false);

  for (int it = 0; it < max_iter; ++it) {
    sur.prepare();
    Index best_j = -1;
    double best_val = 0.0;
    double best_delta = 0.0;
    for (Index j = 0; j < p; ++j) {
      if (stalled[static_cast<std::size_t>(j)]) continue;
      const auto b = sur.bound(j);
      if (!b.usable()) continue;
      const double a_j = sur.alpha()[j];
      double delta = soft_threshold_newton(b.slope(), b.curvature(), a_j, tau[j]);
      if (delta == 0.0 || !std::isfinite(delta)) continue;
      double val = penalized_bound(b, delta, a_j, tau[j]);
      // Crossing zero passes the kink of |.|; landing on it may be better.
      if (a_j != 0.0 && (a_j + delta) * a_j < 0.0) {
        const double at_zero = penalized_bound(b, -a_j, a_j, tau[j]);
        if (!(at_zero > val) || !std::isfinite(val)) {
          delta = -a_j;
          val = at_zero;
        }
      }
      if (std::isfinite(val) && val < best_val) {
        best_val = val;
        best_delta = delta;
        best_j = j;
      }
    }
    out.iterations = it + 1;
    if (best_j < 0) {
      out.converged = true;
      break;
    }

    // Newton on a bound can overshoot; halve until the bound certifies descent.
    const auto b = sur.bound(best_j);
    const double a_j = sur.alpha()[best_j];
    double delta = best_delta;
    double bound_val = best_val;
    bool accepted = false;
    double next = current;
    for (int k = 0; k <= 20; ++k) {
      bound_val = penalized_bound(b, delta, a_j, tau[best_j]);
      if (std::isfinite(bound_val) && bound_val < 0.0) {
        double trial = std::numeric_limits<double>::infinity();
        try {
          Eigen::VectorXd moved = sur.alpha();
          moved[best_j] += delta;
          trial = sur.objective_after(best_j, delta) + penalty(moved, tau);
        } catch (const NumericalError&) {
        }
        if (trial <= current + 1e-12 * (1.0 + std::abs(current))) {
          next = trial;
          accepted = true;
          break;
        }
      }
      delta *= 0.5;
    }
    if (!accepted) {
      stalled[static_cast<std::size_t>(best_j)] = true;
      continue;
    }
    sur.apply(best_j, delta);
    std::fill(stalled.begin(), stalled.end(), false);
    current = next;
    out.path.push_back(current);
    if (-bound_val < tol || std::abs(delta) < tol) {
      out.converged = true;
      break;
    }
  }
  out.alpha = sur.alpha();
  return out;
}

}  // namespace detail

/// Coordinate penalty weights tau * s_j / sqrt(m), s_j the presence standard deviation.
inline Eigen::VectorXd penalty_weights(double tau, const SuffStats& s) {
  return tau * s.sd_pres / std::sqrt(static_cast<double>(s.m));
}

namespace detail {
// Eigen's rcond treats exact zero pivots as a pseudo-inverse, so also test the pivots.
inline bool well_conditioned(const Eigen::LDLT<Eigen::MatrixXd>& ldlt, double* rcond_out = nullptr) {
  double rc = 0.0;
  bool ok = ldlt.info() == Eigen::Success && ldlt.isPositive();
  if (ok) {
    const Eigen::VectorXd dv = ldlt.vectorD();
    const double dmax = dv.cwiseAbs().maxCoeff();
    rc = std::min(ldlt.rcond(), dmax > 0.0 ? dv.minCoeff() / dmax : 0.0);
    ok = rc > 1e-14;
  }
  if (rcond_out) *rcond_out = rc;
  return ok;
}
}  // namespace detail

/// Closed-form Fisher estimator S^{-1}(fbar_m - fbar), or the L1-penalized
/// quadratic by coordinate descent when tau > 0.
inline Fit fit_fisher(const Dataset& d, const SuffStats& s, double tau, bool ridge = false,
                      double tol = 1e-8, int max_iter = 5000) {
  const auto t0 = detail::Clock::now();
  if (!(tau >= 0.0)) throw std::invalid_argument("tau must be nonnegative");
  Fit fit;
  fit.method = MethodConfig::defaults(Method::fisher);
  fit.method.tau = tau;
  fit.method.ridge = ridge;
  fit.method.tol = tol;
  fit.method.max_iter = max_iter;
  if (tau == 0.0) {
    Eigen::MatrixXd cov = s.cov_bg;
    const Index p = s.p();
    if (ridge) cov.diagonal().array() += 1e-8 * cov.trace() / static_cast<double>(p);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(cov);
    double rcond = 0.0;
    if (!detail::well_conditioned(ldlt, &rcond)) {
      std::ostringstream os;
      os << "background covariance S is singular (reciprocal condition estimate " << rcond
         << "); enable the ridge option or drop collinear features";
      throw NumericalError(os.str());
    }
    fit.coeffs.slope = ldlt.solve(s.mean_pres - s.mean_bg);
    fit.iterations = 0;
    fit.converged = true;
    fit.objective = maxent_cba_loss(fit.coeffs.slope, s, d.m());
    fit.loss_path = {fit.objective};
  } else {
    FisherSurrogate sur(s, d.m());
    auto r = detail::coordinate_descent(sur, penalty_weights(tau, s), tol, max_iter);
    fit.coeffs.slope = r.alpha;
    fit.iterations = r.iterations;
    fit.converged = r.converged;
    fit.loss_path = std::move(r.path);
    fit.objective = fit.loss_path.back();
  }
  fit.nnz = count_nonzero(fit.coeffs.slope);
  fit.wall_time = detail::seconds_since(t0);
  return fit;
}

/// Fixed-point iteration for the cumulant-approximated PPM likelihood,
/// returning slope and intercept.
inline Fit fit_fast_ppm(const Dataset& d, const SuffStats& s, double tol = 1e-10, int max_iter = 1000) {
  const auto t0 = detail::Clock::now();
  Eigen::LDLT<Eigen::MatrixXd> ldlt(s.cov_bg);
  if (!detail::well_conditioned(ldlt)) {
    throw NumericalError("background covariance S is singular; fast PPM iteration needs S invertible");
  }
  const double m = static_cast<double>(d.m());
  Eigen::VectorXd alpha = Eigen::VectorXd::Zero(s.p());
  double c = std::log(m);
  Fit fit;
  fit.method = MethodConfig::defaults(Method::maxent);
  fit.method.tol = tol;
  fit.method.max_iter = max_iter;
  double prev_change = std::numeric_limits<double>::infinity();
  int growing = 0;
  for (int it = 0; it < max_iter; ++it) {
    const double kappa = alpha.dot(s.mean_bg) + 0.5 * alpha.dot(s.cov_bg * alpha);
    const double factor = std::exp(std::log(m) - c - kappa);
    const Eigen::VectorXd alpha_new = ldlt.solve(factor * s.mean_pres - s.mean_bg);
    const double c_new = std::log(m) - kappa;
    if (!alpha_new.allFinite() || !std::isfinite(c_new)) {
      throw NumericalError("fast PPM iteration produced non-finite values at iteration " + std::to_string(it + 1));
    }
    const double change = std::max((alpha_new - alpha).cwiseAbs().maxCoeff(), std::abs(c_new - c));
    alpha = alpha_new;
    c = c_new;
    fit.iterations = it + 1;
    fit.loss_path.push_back(change);
    if (change < tol) {
      fit.converged = true;
      break;
    }
    growing = change > prev_change ? growing + 1 : 0;
    if (growing >= 5) {
      std::ostringstream os;
      os << "fast PPM iteration diverging: update size grew for 5 consecutive iterations (last " << change << ")";
      throw NumericalError(os.str());
    }
    prev_change = change;
  }
  // Intercept consistent with the final slope.
  c = std::log(m) - (alpha.dot(s.mean_bg) + 0.5 * alpha.dot(s.cov_bg * alpha));
  fit.coeffs.slope = alpha;
  fit.coeffs.intercept = c;
  fit.nnz = count_nonzero(alpha);
  fit.objective = maxent_cba_loss(alpha, s, d.m());
  fit.wall_time = detail::seconds_since(t0);
  return fit;
}

/// L1-penalized coordinate descent for gamma, maxent (gamma-loss at small
/// gamma), gm, rgm and fisher, starting from alpha = 0.
inline Fit fit_coordinate_descent(const MethodConfig& cfg, const Dataset& d, const SuffStats& s) {
  cfg.validate();
  const auto t0 = detail::Clock::now();
  const Eigen::VectorXd tau = penalty_weights(cfg.tau, s);
  detail::CdOutcome r;
  switch (cfg.method) {
    case Method::maxent:
    case Method::gamma: {
      GammaSurrogate sur(d, s, cfg.gamma);
      r = detail::coordinate_descent(sur, tau, cfg.tol, cfg.max_iter);
      break;
    }
    case Method::gm: {
      RgmSurrogate sur(d, s, -1.0, false);
      r = detail::coordinate_descent(sur, tau, cfg.tol, cfg.max_iter);
      break;
    }
    case Method::rgm: {
      if (cfg.order != 2) throw std::invalid_argument("coordinate descent supports the second-order rGM loss only");
      RgmSurrogate sur(d, s, cfg.gamma, true);
      r = detail::coordinate_descent(sur, tau, cfg.tol, cfg.max_iter);
      break;
    }
    case Method::fisher: {
      FisherSurrogate sur(s, d.m());
      r = detail::coordinate_descent(sur, tau, cfg.tol, cfg.max_iter);
      break;
    }
  }
  Fit fit;
  fit.method = cfg;
  fit.coeffs.slope = r.alpha;
  fit.iterations = r.iterations;
  fit.converged = r.converged;
  fit.loss_path = std::move(r.path);
  fit.objective = fit.loss_path.back();
  fit.nnz = count_nonzero(r.alpha);
  fit.wall_time = detail::seconds_since(t0);
  return fit;
}

/// Dispatch: fisher at tau = 0 is closed form, everything else is coordinate descent.
inline Fit fit_method(const MethodConfig& cfg, const Dataset& d, const SuffStats& s) {
  if (cfg.method == Method::fisher) {
    Fit f = fit_fisher(d, s, cfg.tau, cfg.ridge, cfg.tol, cfg.max_iter);
    f.method = cfg;
    return f;
  }
  return fit_coordinate_descent(cfg, d, s);
}

/// Smallest tau at which alpha = 0 is a fixed point of coordinate descent.
/// Infinite when a feature with nonzero gradient has zero presence spread.
inline double activation_threshold(const MethodConfig& cfg, const Dataset& d, const SuffStats& s) {
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(d.p());
  Eigen::VectorXd grad;
  if (cfg.method == Method::gamma || cfg.method == Method::maxent) {
    grad = s.mean_bg - s.mean_pres;  // gradient of the log-scale objective at 0
  } else {
    grad = loss_gradient(cfg, zero, d, s);
  }
  const double sqrt_m = std::sqrt(static_cast<double>(d.m()));
  double t = 0.0;
  for (Index j = 0; j < d.p(); ++j) {
    if (!(s.raw_upper[j] > s.raw_lower[j]) || grad[j] == 0.0) continue;
    if (!(s.sd_pres[j] > 0.0)) return std::numeric_limits<double>::infinity();
    t = std::max(t, std::abs(grad[j]) * sqrt_m / s.sd_pres[j]);
  }
  return t;
}

/// Intercept from a fitted slope. gamma == 0 gives log(m / Lambda(alpha));
/// otherwise the beta/gamma-loss relation
/// log[sum_pres e^{gamma alpha'f} / sum_i w_i e^{(1+gamma) alpha'f}].
inline double recover_intercept(const Eigen::Ref<const Eigen::VectorXd>& alpha, const Dataset& d, double gamma) {
  detail::check_dim(alpha, d.p());
  if (!(gamma > -1.0)) throw std::invalid_argument("intercept recovery needs gamma > -1");
  const Eigen::VectorXd u_all = d.features() * alpha;
  double c = 0.0;
  if (gamma == 0.0) {
    c = std::log(static_cast<double>(d.m())) - numeric::log_sum_exp_weighted(u_all, d.weights());
  } else {
    const Eigen::VectorXd u_pres = d.presence_features() * alpha;
    c = numeric::log_sum_exp(gamma * u_pres) - numeric::log_sum_exp_weighted((1.0 + gamma) * u_all, d.weights());
  }
  numeric::require_finite(c, "recovered intercept");
  return c;
}

inline double recover_intercept(const Fit& fit, const Dataset& d, double gamma) {
  return recover_intercept(fit.coeffs.slope, d, gamma);
}

}  // namespace cbasdm
