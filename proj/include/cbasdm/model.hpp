#pragma once

#include <cmath>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cbasdm/numeric.hpp"

namespace cbasdm {

using Index = Eigen::Index;

/// Background locations with quadrature weights and the presence multiset.
///
/// Row i of `features()` is f(x_i). Weights are normalized to sum to one at
/// construction. Presence entries index background rows; a row may appear
/// more than once (multinomial draws), and every presence sum honors that
/// multiplicity. The object is immutable once built.
class Dataset {
 public:
  /// Validates and normalizes. An empty `weights` means uniform 1/n; empty
  /// ids or names are filled with generated labels.
  static Dataset create(Eigen::MatrixXd features, Eigen::VectorXd weights,
                        std::vector<Index> presence,
                        std::vector<std::string> location_ids = {},
                        std::vector<std::string> feature_names = {}) {
    Dataset d;
    const Index n = features.rows();
    const Index p = features.cols();
    if (n == 0 || p == 0) throw DataError("dataset needs at least one row and one feature");
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < p; ++j) {
        if (!std::isfinite(features(i, j))) {
          throw DataError("non-finite feature value at row " + std::to_string(i + 1) +
                          ", column " + std::to_string(j + 1));
        }
      }
    }
    if (weights.size() == 0) {
      weights = Eigen::VectorXd::Constant(n, 1.0 / static_cast<double>(n));
    } else {
      if (weights.size() != n) throw DataError("weight vector length does not match row count");
      for (Index i = 0; i < n; ++i) {
        if (!std::isfinite(weights[i]) || weights[i] < 0.0) {
          throw DataError("weight at row " + std::to_string(i + 1) + " is negative or non-finite");
        }
      }
      const double total = weights.sum();
      if (!(total > 0.0)) throw DataError("weights are all zero");
      weights /= total;
    }
    const auto m = static_cast<Index>(presence.size());
    if (m < 1) throw DataError("presence set is empty");
    if (m >= n) {
      throw DataError("presence count m=" + std::to_string(m) +
                      " must be smaller than background size n=" + std::to_string(n));
    }
    for (Index r : presence) {
      if (r < 0 || r >= n) throw DataError("presence index " + std::to_string(r) + " out of range");
    }
    if (location_ids.empty()) {
      location_ids.reserve(static_cast<std::size_t>(n));
      for (Index i = 0; i < n; ++i) location_ids.push_back("cell_" + std::to_string(i + 1));
    } else if (static_cast<Index>(location_ids.size()) != n) {
      throw DataError("location id count does not match row count");
    }
    if (feature_names.empty()) {
      for (Index j = 0; j < p; ++j) feature_names.push_back("f" + std::to_string(j + 1));
    } else if (static_cast<Index>(feature_names.size()) != p) {
      throw DataError("feature name count does not match column count");
    }
    d.features_ = std::move(features);
    d.weights_ = std::move(weights);
    d.presence_ = std::move(presence);
    d.location_ids_ = std::move(location_ids);
    d.feature_names_ = std::move(feature_names);
    d.presence_rows_.resize(m, p);
    for (Index k = 0; k < m; ++k) d.presence_rows_.row(k) = d.features_.row(d.presence_[static_cast<std::size_t>(k)]);
    return d;
  }

  Index n() const { return features_.rows(); }
  Index p() const { return features_.cols(); }
  Index m() const { return static_cast<Index>(presence_.size()); }

  const Eigen::MatrixXd& features() const { return features_; }
  const Eigen::VectorXd& weights() const { return weights_; }
  const std::vector<Index>& presence() const { return presence_; }
  /// m x p matrix of presence feature rows, in presence order.
  const Eigen::MatrixXd& presence_features() const { return presence_rows_; }
  const std::vector<std::string>& location_ids() const { return location_ids_; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }

  /// Same background and weights, new presence multiset.
  Dataset with_presence(std::vector<Index> presence) const {
    return create(features_, weights_, std::move(presence), location_ids_, feature_names_);
  }

 private:
  Dataset() = default;

  Eigen::MatrixXd features_;
  Eigen::VectorXd weights_;
  std::vector<Index> presence_;
  Eigen::MatrixXd presence_rows_;
  std::vector<std::string> location_ids_;
  std::vector<std::string> feature_names_;
};

/// Everything the cumulant-approximated losses need per iteration.
struct SuffStats {
  Eigen::VectorXd mean_bg;    // weighted background mean
  Eigen::MatrixXd cov_bg;     // weighted background covariance
  Eigen::VectorXd mean_pres;  // presence mean (with multiplicity)
  Eigen::VectorXd sd_pres;    // presence standard deviation, denominator m
  Eigen::VectorXd lower;      // min_i f_j(x_i) - mean_bg_j
  Eigen::VectorXd upper;      // max_i f_j(x_i) - mean_bg_j
  Eigen::VectorXd raw_lower;  // min_i f_j(x_i)
  Eigen::VectorXd raw_upper;  // max_i f_j(x_i)
  Index m = 0;

  Index p() const { return mean_bg.size(); }
  Eigen::VectorXd diag() const { return cov_bg.diagonal(); }
};

/// Row-major ascending summation order, so repeated calls agree bit-for-bit.
inline SuffStats sufficient_stats(const Dataset& d) {
  const Index n = d.n();
  const Index p = d.p();
  const Index m = d.m();
  if (m == 0) throw DataError("sufficient statistics need at least one presence");
  const auto& f = d.features();
  const auto& w = d.weights();

  SuffStats s;
  s.m = m;
  s.mean_bg = Eigen::VectorXd::Zero(p);
  s.raw_lower = f.row(0).transpose();
  s.raw_upper = f.row(0).transpose();
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) {
      s.mean_bg[j] += w[i] * f(i, j);
      s.raw_lower[j] = std::min(s.raw_lower[j], f(i, j));
      s.raw_upper[j] = std::max(s.raw_upper[j], f(i, j));
    }
  }
  // Pin constant columns so their centered values, covariance and gradient are exactly zero.
  for (Index j = 0; j < p; ++j) {
    if (s.raw_lower[j] == s.raw_upper[j]) s.mean_bg[j] = s.raw_lower[j];
  }
  s.cov_bg = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd centered(p);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < p; ++j) centered[j] = f(i, j) - s.mean_bg[j];
    for (Index j = 0; j < p; ++j) {
      for (Index k = j; k < p; ++k) s.cov_bg(j, k) += w[i] * centered[j] * centered[k];
    }
  }
  for (Index j = 0; j < p; ++j) {
    for (Index k = j + 1; k < p; ++k) s.cov_bg(k, j) = s.cov_bg(j, k);
  }

  const auto& fp = d.presence_features();
  s.mean_pres = Eigen::VectorXd::Zero(p);
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < p; ++j) s.mean_pres[j] += fp(i, j);
  }
  s.mean_pres /= static_cast<double>(m);
  for (Index j = 0; j < p; ++j) {
    if ((fp.col(j).array() == fp(0, j)).all()) s.mean_pres[j] = fp(0, j);
  }
  s.sd_pres = Eigen::VectorXd::Zero(p);
  for (Index i = 0; i < m; ++i) {
    for (Index j = 0; j < p; ++j) {
      const double dv = fp(i, j) - s.mean_pres[j];
      s.sd_pres[j] += dv * dv;
    }
  }
  s.sd_pres = (s.sd_pres / static_cast<double>(m)).cwiseSqrt();

  s.lower = s.raw_lower - s.mean_bg;
  s.upper = s.raw_upper - s.mean_bg;
  return s;
}

/// Slope alpha and optional intercept c of log lambda = c + alpha' f.
struct Coefficients {
  Eigen::VectorXd slope;
  std::optional<double> intercept;

  double intercept_or_zero() const { return intercept.value_or(0.0); }
};

inline double log_intensity(const Coefficients& c, const Eigen::Ref<const Eigen::VectorXd>& row) {
  if (row.size() != c.slope.size()) {
    throw std::invalid_argument("feature row has " + std::to_string(row.size()) +
                                " entries but the model has " + std::to_string(c.slope.size()));
  }
  return c.intercept_or_zero() + c.slope.dot(row);
}

/// Log-intensity for every background row.
inline Eigen::VectorXd log_intensity(const Coefficients& c, const Dataset& d) {
  if (d.p() != c.slope.size()) {
    throw std::invalid_argument("dataset has " + std::to_string(d.p()) +
                                " features but the model has " + std::to_string(c.slope.size()));
  }
  Eigen::VectorXd eta = d.features() * c.slope;
  eta.array() += c.intercept_or_zero();
  return eta;
}

enum class StandardizeMode { none, unit_interval, zscore };

/// Per-column affine map f -> (f - shift) / scale.
struct StandardizeTransform {
  Eigen::VectorXd shift;
  Eigen::VectorXd scale;
  StandardizeMode mode = StandardizeMode::none;

  Eigen::MatrixXd apply(const Eigen::MatrixXd& f) const {
    return ((f.rowwise() - shift.transpose()).array().rowwise() / scale.transpose().array()).matrix();
  }
  Eigen::MatrixXd invert(const Eigen::MatrixXd& z) const {
    return ((z.array().rowwise() * scale.transpose().array()).matrix().rowwise() + shift.transpose());
  }
  /// Maps coefficients fitted on standardized features back to raw features.
  Coefficients to_original(const Coefficients& c) const {
    Coefficients out;
    out.slope = c.slope.cwiseQuotient(scale);
    if (c.intercept) out.intercept = *c.intercept - out.slope.dot(shift);
    return out;
  }
};

inline std::pair<Dataset, StandardizeTransform> standardize(const Dataset& d, StandardizeMode mode) {
  const Index p = d.p();
  StandardizeTransform t;
  t.mode = mode;
  t.shift = Eigen::VectorXd::Zero(p);
  t.scale = Eigen::VectorXd::Ones(p);
  const auto& f = d.features();
  for (Index j = 0; j < p; ++j) {
    const std::string& name = d.feature_names()[static_cast<std::size_t>(j)];
    if (mode == StandardizeMode::unit_interval) {
      const double lo = f.col(j).minCoeff();
      const double hi = f.col(j).maxCoeff();
      if (!(hi > lo)) throw DataError("column '" + name + "' is constant; cannot rescale to [0,1]");
      t.shift[j] = lo;
      t.scale[j] = hi - lo;
    } else if (mode == StandardizeMode::zscore) {
      const double mu = d.weights().dot(f.col(j));
      const double var = d.weights().dot((f.col(j).array() - mu).square().matrix());
      if (!(var > 0.0)) throw DataError("column '" + name + "' has zero variance; cannot z-score");
      t.shift[j] = mu;
      t.scale[j] = std::sqrt(var);
    }
  }
  if (mode == StandardizeMode::none) return {d, t};
  Dataset out = Dataset::create(t.apply(f), d.weights(), d.presence(), d.location_ids(), d.feature_names());
  return {std::move(out), t};
}

}  // namespace cbasdm
