#pragma once

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Dense>

#include "cbasdm/model.hpp"
#include "cbasdm/numeric.hpp"

namespace cbasdm {

enum class Method { maxent, gamma, gm, rgm, fisher };

inline const char* to_string(Method m) {
  switch (m) {
    case Method::maxent: return "maxent";
    case Method::gamma: return "gamma";
    case Method::gm: return "gm";
    case Method::rgm: return "rgm";
    case Method::fisher: return "fisher";
  }
  return "?";
}

inline Method parse_method(const std::string& s) {
  if (s == "maxent") return Method::maxent;
  if (s == "gamma") return Method::gamma;
  if (s == "gm") return Method::gm;
  if (s == "rgm") return Method::rgm;
  if (s == "fisher") return Method::fisher;
  throw std::invalid_argument("unknown method '" + s + "' (expected maxent|gamma|gm|rgm|fisher)");
}

/// Estimator selection and its tuning constants.
struct MethodConfig {
  Method method = Method::fisher;
  double gamma = 1e-5;
  double tau = 0.0;
  double tol = 1e-8;
  int max_iter = 5000;
  int order = 2;       // cumulant truncation for rgm
  bool ridge = false;  // jitter a singular S instead of failing

  /// gamma-as-Maxent uses 1e-5; rgm uses -0.5.
  static MethodConfig defaults(Method m) {
    MethodConfig c;
    c.method = m;
    c.gamma = (m == Method::rgm) ? -0.5 : (m == Method::gm ? -1.0 : 1e-5);
    return c;
  }

  void validate() const {
    if (method == Method::gamma || method == Method::maxent) {
      if (!(gamma > -1.0) || gamma == 0.0) {
        throw std::invalid_argument("gamma-loss needs gamma > -1 and gamma != 0 (got " +
                                    std::to_string(gamma) + ")");
      }
    }
    if (method == Method::rgm && !(gamma > -1.0 && gamma < 0.0)) {
      throw std::invalid_argument("rgm needs -1 < gamma < 0 (got " + std::to_string(gamma) + ")");
    }
    if (method == Method::rgm && order != 1 && order != 2) {
      throw std::invalid_argument("cumulant order must be 1 or 2");
    }
    if (!(tau >= 0.0)) throw std::invalid_argument("tau must be nonnegative");
    if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
    if (max_iter <= 0) throw std::invalid_argument("max_iter must be positive");
  }

  std::string label() const {
    std::ostringstream os;
    os << to_string(method);
    if (method == Method::rgm || method == Method::gamma) os << "(" << gamma << ")";
    return os.str();
  }
};

namespace detail {

inline void check_dim(const Eigen::Ref<const Eigen::VectorXd>& alpha, Index p) {
  if (alpha.size() != p) {
    throw std::invalid_argument("coefficient vector has " + std::to_string(alpha.size()) +
                                " entries, expected " + std::to_string(p));
  }
}

[[noreturn]] inline void overflow(const std::string& what, const Eigen::VectorXd& scores) {
  std::ostringstream os;
  os << what << " overflowed; alpha'f ranges over [" << scores.minCoeff() << ", "
     << scores.maxCoeff() << "]";
  throw NumericalError(os.str());
}

// (f(x_i) - fbar)' alpha over presence rows.
inline Eigen::VectorXd centered_presence_scores(const Eigen::Ref<const Eigen::VectorXd>& alpha,
                                                const Dataset& d, const SuffStats& s) {
  Eigen::VectorXd c = d.presence_features() * alpha;
  c.array() -= s.mean_bg.dot(alpha);
  return c;
}

// log(Q/m) where Q = A / B^{g/(g+1)}, A = sum_pres e^{g u}, B = sum_i w_i e^{(g+1) u}.
// Each piece is O(g) for small g, so the result keeps relative precision as g -> 0.
inline double gamma_log_ratio(const Eigen::VectorXd& u_pres, const Eigen::VectorXd& u_all,
                              double gamma, const Eigen::VectorXd& w) {
  const double ubar = u_pres.mean();
  const double mean_expm1 = (gamma * (u_pres.array() - ubar)).unaryExpr([](double x) {
    return std::expm1(x);
  }).mean();
  const double log_mean_a = gamma * ubar + std::log1p(mean_expm1);
  const double log_b = numeric::log_sum_exp_weighted((gamma + 1.0) * u_all, w);
  return log_mean_a - gamma / (gamma + 1.0) * log_b;
}

}  // namespace detail

/// gamma-loss of a log-linear intensity (intercept cancels).
inline double gamma_loss(const Eigen::Ref<const Eigen::VectorXd>& alpha, double gamma, const Dataset& d) {
  detail::check_dim(alpha, d.p());
  if (!(gamma > -1.0) || gamma == 0.0) throw std::invalid_argument("gamma-loss needs gamma > -1, gamma != 0");
  const Eigen::VectorXd u_all = d.features() * alpha;
  const Eigen::VectorXd u_pres = d.presence_features() * alpha;
  const double lr = detail::gamma_log_ratio(u_pres, u_all, gamma, d.weights());
  const double m = static_cast<double>(d.m());
  const double v = -(m / gamma) * std::expm1(lr);
  if (!std::isfinite(v)) detail::overflow("gamma-loss", u_all);
  return v;
}

/// -(1/gamma) log(Q/m): a monotone transform of the gamma-loss that tends to
/// the per-presence Maxent loss as gamma -> 0. Coordinate descent minimizes it.
inline double gamma_log_objective(const Eigen::Ref<const Eigen::VectorXd>& alpha, double gamma,
                                  const Dataset& d) {
  detail::check_dim(alpha, d.p());
  const Eigen::VectorXd u_all = d.features() * alpha;
  const Eigen::VectorXd u_pres = d.presence_features() * alpha;
  const double v = -detail::gamma_log_ratio(u_pres, u_all, gamma, d.weights()) / gamma;
  if (!std::isfinite(v)) detail::overflow("gamma log-objective", u_all);
  return v;
}

/// Maxent negative log-likelihood -sum_pres log(lambda_i / Lambda).
inline double maxent_loss(const Eigen::Ref<const Eigen::VectorXd>& alpha, const Dataset& d) {
  detail::check_dim(alpha, d.p());
  const Eigen::VectorXd u_all = d.features() * alpha;
  const double log_lambda = numeric::log_sum_exp_weighted(u_all, d.weights());
  const double v = -(d.presence_features() * alpha).sum() + static_cast<double>(d.m()) * log_lambda;
  if (!std::isfinite(v)) detail::overflow("maxent loss", u_all);
  return v;
}

// sum_pres exp(scale * c_i); shared by the GM loss and the first-order approximation.
namespace detail {
inline double presence_exp_sum(const Eigen::VectorXd& c, double scale) {
  double s = 0.0;
  for (Index i = 0; i < c.size(); ++i) s += std::exp(scale * c[i]);
  return s;
}
}  // namespace detail

/// Geometric-mean loss sum_pres exp{-alpha'(f(x_i) - fbar)}.
inline double gm_loss(const Eigen::Ref<const Eigen::VectorXd>& alpha, const Dataset& d, const SuffStats& s) {
  detail::check_dim(alpha, d.p());
  const Eigen::VectorXd c = detail::centered_presence_scores(alpha, d, s);
  const double v = detail::presence_exp_sum(c, -1.0);
  if (!std::isfinite(v)) detail::overflow("GM loss", c);
  return v;
}

inline double gm_loss(const Eigen::Ref<const Eigen::VectorXd>& alpha, const Dataset& d) {
  return gm_loss(alpha, d, sufficient_stats(d));
}

/// First- or second-order cumulant approximation of the gamma-loss.
inline double approx_gamma_loss(const Eigen::Ref<const Eigen::VectorXd>& alpha, double gamma, int order,
                                const SuffStats& s, const Dataset& d) {
  detail::check_dim(alpha, d.p());
  if (gamma == 0.0) throw std::invalid_argument("approximate gamma-loss needs gamma != 0; use maxent_cba_loss");
  if (order != 1 && order != 2) throw std::invalid_argument("order must be 1 or 2");
  Eigen::VectorXd c = detail::centered_presence_scores(alpha, d, s);
  if (order == 2) c.array() -= 0.5 * (gamma + 1.0) * alpha.dot(s.cov_bg * alpha);
  const double m = static_cast<double>(d.m());
  const double v = -(1.0 / gamma) * (detail::presence_exp_sum(c, gamma) - m);
  if (!std::isfinite(v)) detail::overflow("approximate gamma-loss", c);
  return v;
}

/// Second-order approximation of the Maxent loss: m{alpha'(fbar - fbar_m) + alpha'S alpha / 2}.
inline double maxent_cba_loss(const Eigen::Ref<const Eigen::VectorXd>& alpha, const SuffStats& s, Index m) {
  detail::check_dim(alpha, s.p());
  return static_cast<double>(m) * (alpha.dot(s.mean_bg - s.mean_pres) + 0.5 * alpha.dot(s.cov_bg * alpha));
}

/// Loss selected by `cfg` (maxent is the exact L0; fisher its quadratic approximation).
inline double loss_value(const MethodConfig& cfg, const Eigen::Ref<const Eigen::VectorXd>& alpha,
                         const Dataset& d, const SuffStats& s) {
  switch (cfg.method) {
    case Method::maxent: return maxent_loss(alpha, d);
    case Method::gamma: return gamma_loss(alpha, cfg.gamma, d);
    case Method::gm: return gm_loss(alpha, d, s);
    case Method::rgm: return approx_gamma_loss(alpha, cfg.gamma, cfg.order, s, d);
    case Method::fisher: return maxent_cba_loss(alpha, s, d.m());
  }
  throw std::logic_error("unhandled method");
}

/// Analytic gradient of `loss_value`.
inline Eigen::VectorXd loss_gradient(const MethodConfig& cfg, const Eigen::Ref<const Eigen::VectorXd>& alpha,
                                     const Dataset& d, const SuffStats& s) {
  detail::check_dim(alpha, d.p());
  const double m = static_cast<double>(d.m());
  const auto& fp = d.presence_features();
  switch (cfg.method) {
    case Method::maxent: {
      const Eigen::VectorXd u_all = d.features() * alpha;
      const Eigen::VectorXd tilt = numeric::softmax_weighted(u_all, d.weights());
      return m * (d.features().transpose() * tilt - s.mean_pres);
    }
    case Method::gamma: {
      const double g = cfg.gamma;
      const Eigen::VectorXd u_all = d.features() * alpha;
      const Eigen::VectorXd u_pres = fp * alpha;
      const double q = m * std::exp(detail::gamma_log_ratio(u_pres, u_all, g, d.weights()));
      const Eigen::VectorXd pres_mean = fp.transpose() * numeric::softmax(g * u_pres);
      const Eigen::VectorXd bg_mean =
          d.features().transpose() * numeric::softmax_weighted((g + 1.0) * u_all, d.weights());
      return -q * (pres_mean - bg_mean);
    }
    case Method::gm:
    case Method::rgm: {
      const double g = cfg.method == Method::gm ? -1.0 : cfg.gamma;
      const int order = cfg.method == Method::gm ? 1 : cfg.order;
      Eigen::VectorXd c = detail::centered_presence_scores(alpha, d, s);
      Eigen::VectorXd shift = -s.mean_bg;
      if (order == 2) {
        const Eigen::VectorXd s_alpha = s.cov_bg * alpha;
        c.array() -= 0.5 * (g + 1.0) * alpha.dot(s_alpha);
        shift -= (g + 1.0) * s_alpha;
      }
      const Eigen::VectorXd e = (g * c).array().exp().matrix();
      return -(fp.transpose() * e + e.sum() * shift);
    }
    case Method::fisher:
      return m * ((s.mean_bg - s.mean_pres) + s.cov_bg * alpha);
  }
  throw std::logic_error("unhandled method");
}

namespace detail {
inline void require_positive(const Eigen::Ref<const Eigen::VectorXd>& v, const char* name) {
  for (Index i = 0; i < v.size(); ++i) {
    if (!(v[i] > 0.0) || !std::isfinite(v[i])) {
      throw std::invalid_argument(std::string(name) + " has a nonpositive entry at index " + std::to_string(i));
    }
  }
}
inline void require_same_size(Index a, Index b, Index c) {
  if (a != b || a != c) throw std::invalid_argument("intensity and weight vectors differ in length");
}
}  // namespace detail

/// gamma-divergence between two intensities over weighted cells.
inline double gamma_divergence(const Eigen::Ref<const Eigen::VectorXd>& lambda1,
                               const Eigen::Ref<const Eigen::VectorXd>& lambda2, double gamma,
                               const Eigen::Ref<const Eigen::VectorXd>& weights) {
  detail::require_same_size(lambda1.size(), lambda2.size(), weights.size());
  if (!(gamma > -1.0) || gamma == 0.0) throw std::invalid_argument("gamma-divergence needs gamma > -1, gamma != 0");
  detail::require_positive(lambda1, "lambda1");
  detail::require_positive(lambda2, "lambda2");
  if (lambda1 == lambda2) return 0.0;
  const Eigen::VectorXd l1 = lambda1.array().log().matrix();
  const Eigen::VectorXd l2 = lambda2.array().log().matrix();
  const double r = gamma / (gamma + 1.0);
  const double log_cross = numeric::log_sum_exp_weighted(gamma * l2 + l1, weights) -
                           r * numeric::log_sum_exp_weighted((gamma + 1.0) * l2, weights);
  const double log_self = numeric::log_sum_exp_weighted((gamma + 1.0) * l1, weights) / (gamma + 1.0);
  return -std::exp(log_self) * std::expm1(log_cross - log_self) / gamma;
}

/// Arithmetic-mean minus geometric-mean divergence.
inline double gm_divergence(const Eigen::Ref<const Eigen::VectorXd>& lambda1,
                            const Eigen::Ref<const Eigen::VectorXd>& lambda2,
                            const Eigen::Ref<const Eigen::VectorXd>& weights) {
  detail::require_same_size(lambda1.size(), lambda2.size(), weights.size());
  detail::require_positive(lambda1, "lambda1");
  detail::require_positive(lambda2, "lambda2");
  if (lambda1 == lambda2) return 0.0;
  const Eigen::VectorXd l1 = lambda1.array().log().matrix();
  const Eigen::VectorXd l2 = lambda2.array().log().matrix();
  const double log_arith = numeric::log_sum_exp_weighted(l1 - l2, weights) + weights.dot(l2);
  const double log_geo = weights.dot(l1);
  return std::exp(log_geo) * std::expm1(log_arith - log_geo);
}

/// Symmetrized KL divergence between the normalized cell distributions
/// p_k(i) = w_i lambda_k(x_i) / sum_j w_j lambda_k(x_j), given log-intensities.
inline double jeffreys_divergence(const Eigen::Ref<const Eigen::VectorXd>& eta1,
                                  const Eigen::Ref<const Eigen::VectorXd>& eta2,
                                  const Eigen::Ref<const Eigen::VectorXd>& weights) {
  detail::require_same_size(eta1.size(), eta2.size(), weights.size());
  const double z1 = numeric::log_sum_exp_weighted(eta1, weights);
  const double z2 = numeric::log_sum_exp_weighted(eta2, weights);
  double j = 0.0;
  for (Index i = 0; i < weights.size(); ++i) {
    if (!(weights[i] > 0.0)) continue;
    const double lw = std::log(weights[i]);
    const double lp1 = lw + eta1[i] - z1;
    const double lp2 = lw + eta2[i] - z2;
    j += (std::exp(lp1) - std::exp(lp2)) * (lp1 - lp2);
  }
  return j;
}

inline double jeffreys_divergence(const Coefficients& fit1, const Coefficients& fit2, const Dataset& d) {
  return jeffreys_divergence(log_intensity(fit1, d), log_intensity(fit2, d), d.weights());
}

/// K(t) = log sum_i w_i exp{t alpha'f(x_i)}.
inline double cgf(double t, const Eigen::Ref<const Eigen::VectorXd>& alpha, const Dataset& d) {
  detail::check_dim(alpha, d.p());
  const Eigen::VectorXd u = d.features() * alpha;
  const double v = numeric::log_sum_exp_weighted(t * u, d.weights());
  if (!std::isfinite(v)) detail::overflow("cumulant generating function", u);
  return v;
}

/// First two cumulants of alpha'f under the background weights.
inline std::pair<double, double> cumulants(const Eigen::Ref<const Eigen::VectorXd>& alpha, const SuffStats& s) {
  detail::check_dim(alpha, s.p());
  return {alpha.dot(s.mean_bg), alpha.dot(s.cov_bg * alpha)};
}

}  // namespace cbasdm
