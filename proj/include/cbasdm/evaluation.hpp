#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "cbasdm/estimators.hpp"
#include "cbasdm/losses.hpp"
#include "cbasdm/model.hpp"
#include "cbasdm/rng.hpp"
#include "cbasdm/simulation.hpp"

namespace cbasdm {

inline double squared_error(const Eigen::Ref<const Eigen::VectorXd>& alpha_hat,
                            const Eigen::Ref<const Eigen::VectorXd>& alpha_star) {
  if (alpha_hat.size() != alpha_star.size()) {
    throw std::invalid_argument("squared_error: lengths differ (" + std::to_string(alpha_hat.size()) + " vs " +
                                std::to_string(alpha_star.size()) + ")");
  }
  return (alpha_hat - alpha_star).squaredNorm();
}

/// Mann-Whitney AUC: P(presence score > absence score) + P(tie) / 2, via midranks.
inline double auc(const std::vector<double>& presence, const std::vector<double>& absence) {
  if (presence.empty() || absence.empty()) throw std::invalid_argument("AUC needs non-empty presence and absence scores");
  const std::size_t n1 = presence.size();
  const std::size_t n = n1 + absence.size();
  std::vector<std::pair<double, bool>> all;
  all.reserve(n);
  for (double v : presence) all.emplace_back(v, true);
  for (double v : absence) all.emplace_back(v, false);
  std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  // Twice the rank sum keeps midranks integral.
  std::uint64_t rank_sum2 = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t k = i;
    while (k + 1 < n && all[k + 1].first == all[i].first) ++k;
    const std::uint64_t mid2 = static_cast<std::uint64_t>(i + 1 + k + 1);
    for (std::size_t t = i; t <= k; ++t) {
      if (all[t].second) rank_sum2 += mid2;
    }
    i = k + 1;
  }
  const double u = static_cast<double>(rank_sum2) / 2.0 - static_cast<double>(n1) * static_cast<double>(n1 + 1) / 2.0;
  return u / (static_cast<double>(n1) * static_cast<double>(absence.size()));
}

/// Training AUC of a fit: presence rows (with multiplicity) against all background rows.
inline double training_auc(const Coefficients& c, const Dataset& d) {
  const Eigen::VectorXd eta = log_intensity(c, d);
  std::vector<double> pres, bg(eta.data(), eta.data() + eta.size());
  for (Index r : d.presence()) pres.push_back(eta[r]);
  return auc(pres, bg);
}

struct EvalReport {
  int replication = 0;
  std::string method;
  bool ok = true;
  std::string error;
  double squared_error = 0.0;
  double auc_train = 0.0;
  std::optional<double> auc_test;
  std::optional<double> jeffreys_vs_reference;
  double wall_time = 0.0;
  double relative_cost = 1.0;
  Index nnz = 0;
  int iterations = 0;
  bool converged = false;
};

struct Quartiles {
  double q1 = NAN, median = NAN, q3 = NAN, mean = NAN;
};

/// Linear-interpolation sample quantiles (R type 7).
inline Quartiles quartiles(std::vector<double> v) {
  Quartiles q;
  if (v.empty()) return q;
  std::sort(v.begin(), v.end());
  auto at = [&](double prob) {
    const double h = (static_cast<double>(v.size()) - 1.0) * prob;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
  };
  q.q1 = at(0.25);
  q.median = at(0.5);
  q.q3 = at(0.75);
  q.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  return q;
}

struct MethodSummary {
  std::string method;
  int successes = 0;
  int failures = 0;
  Quartiles squared_error, wall_time, relative_cost, auc_train, auc_test, nnz;
};

struct ExperimentResult {
  std::vector<EvalReport> rows;  // replication-major, methods in the given order
  std::vector<MethodSummary> summary;
  std::string baseline;          // method label costs are relative to
  std::string reference;         // method label Jeffreys divergences are taken against
  bool parallel_timing = false;  // wall times measured with concurrent fits
};

/// Replication r simulates with seed split_seed(master, r); held-out test
/// presences use split_seed(that seed, 2).
inline std::uint64_t replication_seed(std::uint64_t master, int r) {
  return split_seed(master, static_cast<std::uint64_t>(r));
}

namespace detail {

inline std::vector<EvalReport> run_replication(const SimConfig& base, const std::vector<MethodConfig>& methods, int r,
                                               std::size_t baseline_idx, std::optional<std::size_t> reference_idx) {
  SimConfig cfg = base;
  cfg.seed = replication_seed(base.seed, r);
  const Simulation sim = simulate(cfg);
  const SuffStats stats = sufficient_stats(sim.data);
  const auto test_pres = sample_presence(sim.data.features(), sim.data.weights(), sim.alpha_star, cfg.m,
                                         split_seed(cfg.seed, 2));

  std::vector<EvalReport> rows;
  std::vector<std::optional<Coefficients>> coeffs(methods.size());
  for (std::size_t k = 0; k < methods.size(); ++k) {
    EvalReport rep;
    rep.replication = r;
    rep.method = methods[k].label();
    try {
      Fit fit = fit_method(methods[k], sim.data, stats);
      rep.squared_error = squared_error(fit.coeffs.slope, sim.alpha_star);
      rep.auc_train = training_auc(fit.coeffs, sim.data);
      const Eigen::VectorXd eta = log_intensity(fit.coeffs, sim.data);
      std::vector<double> pres, bg(eta.data(), eta.data() + eta.size());
      for (Index i : test_pres) pres.push_back(eta[i]);
      rep.auc_test = auc(pres, bg);
      rep.wall_time = fit.wall_time;
      rep.nnz = fit.nnz;
      rep.iterations = fit.iterations;
      rep.converged = fit.converged;
      coeffs[k] = fit.coeffs;
    } catch (const std::exception& e) {
      rep.ok = false;
      rep.error = e.what();
    }
    rows.push_back(std::move(rep));
  }
  const EvalReport& base_row = rows[baseline_idx];
  for (auto& row : rows) {
    if (row.ok && base_row.ok && base_row.wall_time > 0.0) row.relative_cost = row.wall_time / base_row.wall_time;
    else row.relative_cost = NAN;
  }
  if (reference_idx && coeffs[*reference_idx]) {
    for (std::size_t k = 0; k < methods.size(); ++k) {
      if (coeffs[k]) rows[k].jeffreys_vs_reference = jeffreys_divergence(*coeffs[k], *coeffs[*reference_idx], sim.data);
    }
  }
  return rows;
}

}  // namespace detail

/// Fits every method on `replications` fresh simulations. Costs are relative
/// to fisher when present (otherwise the first method); Jeffreys divergences
/// are taken against maxent when present.
inline ExperimentResult run_experiment(const SimConfig& sim, const std::vector<MethodConfig>& methods, int replications,
                                       int jobs = 1) {
  if (replications < 1) throw std::invalid_argument("replications must be at least 1");
  if (methods.empty()) throw std::invalid_argument("at least one method is required");
  sim.validate();
  for (const auto& m : methods) m.validate();

  std::size_t baseline = 0;
  std::optional<std::size_t> reference;
  for (std::size_t k = methods.size(); k-- > 0;) {
    if (methods[k].method == Method::fisher) baseline = k;
    if (methods[k].method == Method::maxent) reference = k;
  }

  ExperimentResult out;
  out.baseline = methods[baseline].label();
  if (reference) out.reference = methods[*reference].label();
  std::vector<std::vector<EvalReport>> per_rep(static_cast<std::size_t>(replications));
  jobs = std::max(1, std::min(jobs, replications));
  out.parallel_timing = jobs > 1;
  if (jobs == 1) {
    for (int r = 0; r < replications; ++r) {
      per_rep[static_cast<std::size_t>(r)] = detail::run_replication(sim, methods, r, baseline, reference);
    }
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < jobs; ++t) {
      pool.emplace_back([&, t] {
        for (int r = t; r < replications; r += jobs) {
          per_rep[static_cast<std::size_t>(r)] = detail::run_replication(sim, methods, r, baseline, reference);
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  for (auto& rows : per_rep) {
    for (auto& row : rows) out.rows.push_back(std::move(row));
  }

  for (const auto& m : methods) {
    MethodSummary s;
    s.method = m.label();
    std::vector<double> se, wt, rc, at, ats, nz;
    for (const auto& row : out.rows) {
      if (row.method != s.method) continue;
      if (!row.ok) {
        ++s.failures;
        continue;
      }
      ++s.successes;
      se.push_back(row.squared_error);
      wt.push_back(row.wall_time);
      if (std::isfinite(row.relative_cost)) rc.push_back(row.relative_cost);
      at.push_back(row.auc_train);
      if (row.auc_test) ats.push_back(*row.auc_test);
      nz.push_back(static_cast<double>(row.nnz));
    }
    s.squared_error = quartiles(se);
    s.wall_time = quartiles(wt);
    s.relative_cost = quartiles(rc);
    s.auc_train = quartiles(at);
    s.auc_test = quartiles(ats);
    s.nnz = quartiles(nz);
    out.summary.push_back(std::move(s));
  }
  return out;
}

}  // namespace cbasdm
