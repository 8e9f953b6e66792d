#pragma once

// Per-coordinate upper bounds D_j(delta, alpha) on the change of a loss when
// alpha_j moves by delta, and the soft-thresholded one-step Newton rule.
//
// Every surrogate exposes the same shape so the coordinate-descent engine can
// be written once:
//   objective()                 current unpenalized objective
//   prepare()                   refresh per-round caches
//   bound(j)                    Bound with value(delta), slope(), curvature(), usable()
//   objective_after(j, delta)   objective at alpha + delta e_j, state untouched
//   apply(j, delta)             move alpha_j by delta
// All bounds satisfy D_j(0) = 0 and D_j'(0) = dL/dalpha_j.

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "cbasdm/losses.hpp"
#include "cbasdm/model.hpp"
#include "cbasdm/numeric.hpp"

namespace cbasdm {

/// Three-branch soft-thresholded derivative at delta = 0 followed by one
/// Newton step. Returns 0 inside the dead zone or when curvature vanishes.
inline double soft_threshold_newton(double slope, double curvature, double alpha_j, double tau_j) {
  if (!(curvature > 0.0)) return 0.0;
  double g = 0.0;
  if (alpha_j != 0.0) {
    g = slope + tau_j * (alpha_j > 0.0 ? 1.0 : -1.0);
  } else if (std::abs(slope) > tau_j) {
    g = slope - tau_j * (slope > 0.0 ? 1.0 : -1.0);
  }
  return -g / curvature;
}

/// Penalized bound D_j^tau(delta) = D_j(delta) + tau_j(|alpha_j + delta| - |alpha_j|).
template <class Bound>
double penalized_bound(const Bound& b, double delta, double alpha_j, double tau_j) {
  return b.value(delta) + tau_j * (std::abs(alpha_j + delta) - std::abs(alpha_j));
}

/// Second-order cumulant approximation L^(2)_gamma for -1 <= gamma < 0.
///
/// Uses the chord bound of exp(gamma delta g) over the centered feature range
/// [a_j, b_j] on presence rows; the S-dependent factor is kept exactly. GM is
/// the instance gamma = -1 with S replaced by zero. Cost per round is O(mp).
class RgmSurrogate {
 public:
  struct Bound {
    double log_z = 0.0;  // log sum_pres e^{E_i}
    double gamma = 0.0;
    double p1 = 0.0;     // chord weight on the upper end
    double lo = 0.0, hi = 0.0;
    double h1 = 0.0, h2 = 0.0;  // exact S terms: h(delta) = h1 delta + h2 delta^2 / 2
    bool ok = false;

    bool usable() const { return ok; }
    double log_factor(double delta) const {
      return h1 * delta + 0.5 * h2 * delta * delta +
             numeric::log_mix_exp(p1, gamma * hi * delta, gamma * lo * delta);
    }
    double value(double delta) const {
      return -(std::exp(log_z) / gamma) * std::expm1(log_factor(delta));
    }
    double slope() const { return -(std::exp(log_z) / gamma) * (h1 + gamma * (p1 * hi + (1.0 - p1) * lo)); }
    double curvature() const {
      const double d1 = h1 + gamma * (p1 * hi + (1.0 - p1) * lo);
      const double d2 = h2 + gamma * gamma * p1 * (1.0 - p1) * (hi - lo) * (hi - lo);
      return -(std::exp(log_z) / gamma) * (d2 + d1 * d1);
    }
  };

  /// `use_cov = false` zeroes S (the GM loss when gamma = -1).
  RgmSurrogate(const Dataset& d, const SuffStats& s, double gamma, bool use_cov)
      : s_(s), gamma_(gamma), use_cov_(use_cov) {
    centered_ = d.presence_features().rowwise() - s.mean_bg.transpose();
    alpha_ = Eigen::VectorXd::Zero(s.p());
    c_ = Eigen::VectorXd::Zero(d.m());
    s_alpha_ = Eigen::VectorXd::Zero(s.p());
    if (use_cov_) cov_ = s.cov_bg;
    else cov_ = Eigen::MatrixXd::Zero(s.p(), s.p());
  }

  const Eigen::VectorXd& alpha() const { return alpha_; }
  double objective() const { return evaluate(c_, q_); }

  void reset(const Eigen::VectorXd& alpha) {
    alpha_ = alpha;
    c_ = centered_ * alpha;
    s_alpha_ = cov_ * alpha;
    q_ = alpha_.dot(s_alpha_);
  }

  void prepare() {
    const double shift = 0.5 * (gamma_ + 1.0) * q_;
    const Eigen::VectorXd e_arg = gamma_ * (c_.array() - shift).matrix();
    const double mx = e_arg.maxCoeff();
    const Eigen::VectorXd e = (e_arg.array() - mx).exp().matrix();
    const double z = e.sum();
    log_z_ = mx + std::log(z);
    weighted_mean_ = centered_.transpose() * e / z;
  }

  Bound bound(Index j) const {
    Bound b;
    b.lo = s_.lower[j];
    b.hi = s_.upper[j];
    if (!(b.hi > b.lo)) return b;
    b.log_z = log_z_;
    b.gamma = gamma_;
    b.p1 = std::clamp((weighted_mean_[j] - b.lo) / (b.hi - b.lo), 0.0, 1.0);
    const double k = gamma_ * (gamma_ + 1.0);
    b.h1 = -k * s_alpha_[j];
    b.h2 = -k * cov_(j, j);
    b.ok = std::isfinite(log_z_);
    return b;
  }

  double objective_after(Index j, double delta) const {
    const Eigen::VectorXd c = c_ + delta * centered_.col(j);
    const double q = q_ + 2.0 * delta * s_alpha_[j] + delta * delta * cov_(j, j);
    return evaluate(c, q);
  }

  void apply(Index j, double delta) {
    alpha_[j] += delta;
    c_ += delta * centered_.col(j);
    s_alpha_ += delta * cov_.col(j);
    q_ = alpha_.dot(s_alpha_);
  }

 private:
  // -(1/gamma) sum_pres expm1(gamma (c_i - (gamma+1) q / 2))
  double evaluate(const Eigen::VectorXd& c, double q) const {
    const double shift = 0.5 * (gamma_ + 1.0) * q;
    double sum = 0.0;
    for (Index i = 0; i < c.size(); ++i) sum += std::expm1(gamma_ * (c[i] - shift));
    const double v = -sum / gamma_;
    numeric::require_finite(v, "rGM objective");
    return v;
  }

  const SuffStats& s_;
  double gamma_;
  bool use_cov_;
  Eigen::MatrixXd centered_;
  Eigen::MatrixXd cov_;
  Eigen::VectorXd alpha_, c_, s_alpha_, weighted_mean_;
  double q_ = 0.0;
  double log_z_ = 0.0;
};

/// Log-scale gamma-loss G(alpha) = -(1/gamma) log(Q/m), Q = A / B^{gamma/(gamma+1)}.
///
/// The background factor B is bounded by the chord of exp((gamma+1) delta f)
/// over the raw feature range. For gamma < 0 the presence factor A gets the
/// same chord bound; for gamma > 0 it gets the Jensen lower bound, which makes
/// that part linear in delta. Cost per round is O(np).
class GammaSurrogate {
 public:
  struct Bound {
    double gamma = 0.0;
    double lo = 0.0, hi = 0.0;
    double pres_mean = 0.0;  // tilted presence mean of f_j
    double bg_mean = 0.0;    // tilted background mean of f_j
    bool ok = false;

    bool usable() const { return ok; }
    double chord_weight(double mean) const { return std::clamp((mean - lo) / (hi - lo), 0.0, 1.0); }
    double value(double delta) const {
      const double k = gamma + 1.0;
      const double bg = numeric::log_mix_exp(chord_weight(bg_mean), k * hi * delta, k * lo * delta) / k;
      double pres = -delta * pres_mean;
      if (gamma < 0.0) {
        pres = -numeric::log_mix_exp(chord_weight(pres_mean), gamma * hi * delta, gamma * lo * delta) / gamma;
      }
      return pres + bg;
    }
    double slope() const { return bg_mean - pres_mean; }
    double curvature() const {
      double c = (gamma + 1.0) * (hi - bg_mean) * (bg_mean - lo);
      if (gamma < 0.0) c += -gamma * (hi - pres_mean) * (pres_mean - lo);
      return c;
    }
  };

  GammaSurrogate(const Dataset& d, const SuffStats& s, double gamma)
      : d_(d), s_(s), gamma_(gamma) {
    alpha_ = Eigen::VectorXd::Zero(d.p());
    u_all_ = Eigen::VectorXd::Zero(d.n());
    u_pres_ = Eigen::VectorXd::Zero(d.m());
  }

  const Eigen::VectorXd& alpha() const { return alpha_; }
  double objective() const { return evaluate(u_pres_, u_all_); }

  void reset(const Eigen::VectorXd& alpha) {
    alpha_ = alpha;
    u_all_ = d_.features() * alpha;
    u_pres_ = d_.presence_features() * alpha;
  }

  void prepare() {
    pres_mean_ = d_.presence_features().transpose() * numeric::softmax(gamma_ * u_pres_);
    bg_mean_ = d_.features().transpose() * numeric::softmax_weighted((gamma_ + 1.0) * u_all_, d_.weights());
  }

  Bound bound(Index j) const {
    Bound b;
    b.lo = s_.raw_lower[j];
    b.hi = s_.raw_upper[j];
    if (!(b.hi > b.lo)) return b;
    b.gamma = gamma_;
    b.pres_mean = pres_mean_[j];
    b.bg_mean = bg_mean_[j];
    b.ok = std::isfinite(b.pres_mean) && std::isfinite(b.bg_mean);
    return b;
  }

  double objective_after(Index j, double delta) const {
    return evaluate(u_pres_ + delta * d_.presence_features().col(j), u_all_ + delta * d_.features().col(j));
  }

  void apply(Index j, double delta) {
    alpha_[j] += delta;
    u_all_ += delta * d_.features().col(j);
    u_pres_ += delta * d_.presence_features().col(j);
  }

 private:
  double evaluate(const Eigen::VectorXd& u_pres, const Eigen::VectorXd& u_all) const {
    const double v = -detail::gamma_log_ratio(u_pres, u_all, gamma_, d_.weights()) / gamma_;
    numeric::require_finite(v, "gamma-loss objective");
    return v;
  }

  const Dataset& d_;
  const SuffStats& s_;
  double gamma_;
  Eigen::VectorXd alpha_, u_all_, u_pres_, pres_mean_, bg_mean_;
};

/// Quadratic Maxent approximation m{alpha'(fbar - fbar_m) + alpha'S alpha / 2};
/// the bound is the exact coordinate restriction, so one Newton step lands on
/// the coordinate minimizer.
class FisherSurrogate {
 public:
  struct Bound {
    double lin = 0.0, quad = 0.0;
    bool ok = false;
    bool usable() const { return ok; }
    double value(double delta) const { return delta * (lin + 0.5 * quad * delta); }
    double slope() const { return lin; }
    double curvature() const { return quad; }
  };

  FisherSurrogate(const SuffStats& s, Index m) : s_(s), m_(static_cast<double>(m)) {
    alpha_ = Eigen::VectorXd::Zero(s.p());
    s_alpha_ = Eigen::VectorXd::Zero(s.p());
    gap_ = s.mean_bg - s.mean_pres;
  }

  const Eigen::VectorXd& alpha() const { return alpha_; }
  double objective() const { return m_ * (alpha_.dot(gap_) + 0.5 * alpha_.dot(s_alpha_)); }
  void prepare() {}

  void reset(const Eigen::VectorXd& alpha) {
    alpha_ = alpha;
    s_alpha_ = s_.cov_bg * alpha;
  }

  Bound bound(Index j) const {
    Bound b;
    b.quad = m_ * s_.cov_bg(j, j);
    b.lin = m_ * (gap_[j] + s_alpha_[j]);
    b.ok = b.quad > 0.0;
    return b;
  }

  double objective_after(Index j, double delta) const {
    return objective() + bound(j).value(delta);
  }

  void apply(Index j, double delta) {
    alpha_[j] += delta;
    s_alpha_ += delta * s_.cov_bg.col(j);
  }

 private:
  const SuffStats& s_;
  double m_;
  Eigen::VectorXd alpha_, s_alpha_, gap_;
};

}  // namespace cbasdm
