#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cbasdm/model.hpp"
#include "cbasdm/numeric.hpp"
#include "cbasdm/rng.hpp"

namespace cbasdm {

enum class SimCase { poisson, gaussian, uniform };

inline const char* to_string(SimCase c) {
  switch (c) {
    case SimCase::poisson: return "poisson";
    case SimCase::gaussian: return "gaussian";
    case SimCase::uniform: return "uniform";
  }
  return "?";
}

inline SimCase parse_sim_case(const std::string& s) {
  if (s == "poisson") return SimCase::poisson;
  if (s == "gaussian") return SimCase::gaussian;
  if (s == "uniform") return SimCase::uniform;
  throw std::invalid_argument("unknown case '" + s + "' (expected poisson|gaussian|uniform)");
}

/// Cox-process scenario: equicorrelated Gaussian copula features, log-linear
/// intensity with the linear coefficient ladder, multinomial presences.
struct SimConfig {
  SimCase kind = SimCase::gaussian;
  double rho = 0.0;
  Index p = 2;
  Index n = 1000;
  Index m = 100;
  double lambda0 = 3.0;
  std::uint64_t seed = 1;

  void validate() const {
    if (p < 2) throw std::invalid_argument("simulation needs p >= 2 (got " + std::to_string(p) + ")");
    if (!(rho >= 0.0 && rho < 1.0)) throw std::invalid_argument("rho must lie in [0, 1)");
    if (m < 1 || m >= n) throw std::invalid_argument("need 1 <= m < n");
    if (!(lambda0 > 0.0)) throw std::invalid_argument("lambda0 must be positive");
  }
};

/// alpha*_j = (j - 1) / (10 (p - 1)), j = 1..p.
inline Eigen::VectorXd true_alpha(Index p) {
  if (p < 2) throw std::invalid_argument("true coefficient ladder needs p >= 2");
  Eigen::VectorXd a(p);
  for (Index j = 0; j < p; ++j) a[j] = static_cast<double>(j) / (10.0 * static_cast<double>(p - 1));
  return a;
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

/// Smallest k with P(X <= k) >= u for X ~ Poisson(rate), capped at rate + 12 sd.
inline int poisson_quantile(double u, double rate) {
  const int cap = static_cast<int>(std::ceil(rate + 12.0 * std::sqrt(rate)));
  double pmf = std::exp(-rate);
  double cdf = pmf;
  int k = 0;
  while (cdf < u && k < cap) {
    ++k;
    pmf *= rate / static_cast<double>(k);
    cdf += pmf;
  }
  return k;
}

/// n x p feature matrix for the configured marginal case.
inline Eigen::MatrixXd generate_features(const SimConfig& cfg) {
  cfg.validate();
  const Index p = cfg.p;
  Eigen::MatrixXd corr = Eigen::MatrixXd::Constant(p, p, cfg.rho);
  corr.diagonal().setOnes();
  Eigen::LLT<Eigen::MatrixXd> llt(corr);
  if (llt.info() != Eigen::Success) {
    std::ostringstream os;
    os << "equicorrelation matrix is not positive definite (rho=" << cfg.rho << ", p=" << p << ")";
    throw NumericalError(os.str());
  }
  const Eigen::MatrixXd chol = llt.matrixL();
  Rng rng(split_seed(cfg.seed, 0));
  Eigen::MatrixXd out(cfg.n, p);
  Eigen::VectorXd z(p);
  for (Index i = 0; i < cfg.n; ++i) {
    for (Index j = 0; j < p; ++j) z[j] = rng.normal();
    const Eigen::VectorXd x = chol * z;
    for (Index j = 0; j < p; ++j) {
      switch (cfg.kind) {
        case SimCase::gaussian: out(i, j) = x[j]; break;
        case SimCase::uniform: out(i, j) = normal_cdf(x[j]); break;
        case SimCase::poisson: out(i, j) = poisson_quantile(normal_cdf(x[j]), cfg.lambda0); break;
      }
    }
  }
  return out;
}

/// m draws with replacement, P(row i) proportional to w_i exp(alpha' f(x_i)).
inline std::vector<Index> sample_presence(const Eigen::MatrixXd& features, const Eigen::VectorXd& weights,
                                          const Eigen::VectorXd& alpha, Index m, std::uint64_t seed) {
  if (m < 1) throw std::invalid_argument("presence sample size must be at least 1");
  if (features.cols() != alpha.size() || features.rows() != weights.size()) {
    throw std::invalid_argument("presence sampler dimension mismatch");
  }
  const Eigen::VectorXd prob = numeric::softmax_weighted(features * alpha, weights);
  std::vector<double> cum(static_cast<std::size_t>(prob.size()));
  double acc = 0.0;
  for (Index i = 0; i < prob.size(); ++i) {
    acc += prob[i];
    cum[static_cast<std::size_t>(i)] = acc;
  }
  Rng rng(seed);
  std::vector<Index> out;
  out.reserve(static_cast<std::size_t>(m));
  for (Index k = 0; k < m; ++k) {
    const double u = rng.uniform() * acc;
    auto it = std::upper_bound(cum.begin(), cum.end(), u);
    if (it == cum.end()) --it;
    out.push_back(static_cast<Index>(it - cum.begin()));
  }
  return out;
}

inline std::vector<Index> sample_presence(const Eigen::MatrixXd& features, const Eigen::VectorXd& alpha, Index m,
                                          std::uint64_t seed) {
  const Eigen::VectorXd w = Eigen::VectorXd::Constant(features.rows(), 1.0 / static_cast<double>(features.rows()));
  return sample_presence(features, w, alpha, m, seed);
}

struct Simulation {
  Dataset data;
  Eigen::VectorXd alpha_star;
};

/// Features from stream 0 of the seed, presences from stream 1.
inline Simulation simulate(const SimConfig& cfg) {
  Eigen::MatrixXd f = generate_features(cfg);
  Eigen::VectorXd a = true_alpha(cfg.p);
  auto pres = sample_presence(f, a, cfg.m, split_seed(cfg.seed, 1));
  return {Dataset::create(std::move(f), Eigen::VectorXd(), std::move(pres)), std::move(a)};
}

}  // namespace cbasdm
