#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace cbasdm {

/// Thrown when an evaluation overflows or a linear system cannot be solved.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Thrown for malformed or inconsistent input data.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace numeric {

// log(sum_i exp(x_i)); -inf for an empty input.
inline double log_sum_exp(const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() == 0) return -std::numeric_limits<double>::infinity();
  const double mx = x.maxCoeff();
  if (!std::isfinite(mx)) return mx;
  return mx + std::log((x.array() - mx).exp().sum());
}

// log(sum_i w_i exp(x_i)) with zero weights dropped.
inline double log_sum_exp_weighted(const Eigen::Ref<const Eigen::VectorXd>& x,
                                   const Eigen::Ref<const Eigen::VectorXd>& w) {
  double mx = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (w[i] > 0.0) mx = std::max(mx, x[i]);
  }
  if (!std::isfinite(mx)) return mx;
  double s = 0.0;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    if (w[i] > 0.0) s += w[i] * std::exp(x[i] - mx);
  }
  return mx + std::log(s);
}

// Normalized softmax weights proportional to w_i exp(x_i).
inline Eigen::VectorXd softmax_weighted(const Eigen::Ref<const Eigen::VectorXd>& x,
                                        const Eigen::Ref<const Eigen::VectorXd>& w) {
  const double lse = log_sum_exp_weighted(x, w);
  Eigen::VectorXd out(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    out[i] = w[i] > 0.0 ? w[i] * std::exp(x[i] - lse) : 0.0;
  }
  return out;
}

inline Eigen::VectorXd softmax(const Eigen::Ref<const Eigen::VectorXd>& x) {
  const double lse = log_sum_exp(x);
  return (x.array() - lse).exp().matrix();
}

// log(p1 e^{x1} + (1 - p1) e^{x0}) for p1 in [0,1].
inline double log_mix_exp(double p1, double x1, double x0) {
  if (p1 <= 0.0) return x0;
  if (p1 >= 1.0) return x1;
  if (x1 >= x0) return x1 + std::log1p((1.0 - p1) * std::expm1(x0 - x1));
  return x0 + std::log1p(p1 * std::expm1(x1 - x0));
}

inline void require_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw NumericalError(what + " is not finite");
}

}  // namespace numeric
}  // namespace cbasdm
