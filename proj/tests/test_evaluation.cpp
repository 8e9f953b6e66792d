#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "cbasdm/cbasdm.hpp"
#include "oracles.hpp"

using namespace cbasdm;

namespace {

SimConfig small_sim(std::uint64_t seed = 3) {
  SimConfig c;
  c.kind = SimCase::poisson;
  c.rho = 0.5;
  c.p = 5;
  c.n = 1500;
  c.m = 100;
  c.seed = seed;
  return c;
}

}  // namespace

TEST(SquaredError, Basics) {
  const Eigen::VectorXd a = oracle::random_vector(6, 1.0, 1);
  EXPECT_EQ(squared_error(a, a), 0.0);
  Eigen::VectorXd b = a;
  b[0] += 1.0;
  EXPECT_DOUBLE_EQ(squared_error(b, a), 1.0);
  const Eigen::VectorXd c = oracle::random_vector(6, 1.0, 2);
  double loop = 0.0;
  for (Index j = 0; j < 6; ++j) loop += (a[j] - c[j]) * (a[j] - c[j]);
  EXPECT_NEAR(squared_error(a, c), loop, 1e-14);
  EXPECT_THROW(squared_error(a, Eigen::VectorXd::Zero(5)), std::invalid_argument);
}

TEST(Auc, HandCases) {
  EXPECT_EQ(auc({3, 1}, {2, 0}), 0.75);
  EXPECT_EQ(auc({5, 6, 7}, {1, 2}), 1.0);
  EXPECT_EQ(auc({4, 4}, {4, 4, 4}), 0.5);
  EXPECT_EQ(auc({0}, {1}), 0.0);
  EXPECT_THROW(auc({}, {1}), std::invalid_argument);
  EXPECT_THROW(auc({1}, {}), std::invalid_argument);
}

TEST(Auc, PairCountOracleWithTies) {
  std::mt19937_64 gen(5);
  std::uniform_int_distribution<int> coarse(0, 20);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> a(500), b(500);
    for (auto& v : a) v = coarse(gen) + 0.5;
    for (auto& v : b) v = coarse(gen);
    EXPECT_EQ(auc(a, b), oracle::pair_count_auc(a, b));
  }
}

TEST(Auc, MonotoneTransformInvariance) {
  std::mt19937_64 gen(6);
  std::normal_distribution<double> nd;
  std::vector<double> a(80), b(120);
  for (auto& v : a) v = nd(gen) + 0.5;
  for (auto& v : b) v = nd(gen);
  const double base = auc(a, b);
  auto map = [](std::vector<double> v, auto f) {
    for (auto& x : v) x = f(x);
    return v;
  };
  auto ex = [](double x) { return std::exp(x); };
  auto af = [](double x) { return 3.0 * x - 2.0; };
  EXPECT_EQ(auc(map(a, ex), map(b, ex)), base);
  EXPECT_EQ(auc(map(a, af), map(b, af)), base);
}

TEST(Quartiles, TypeSeven) {
  const Quartiles q = quartiles({4, 1, 3, 2});
  EXPECT_DOUBLE_EQ(q.q1, 1.75);
  EXPECT_DOUBLE_EQ(q.median, 2.5);
  EXPECT_DOUBLE_EQ(q.q3, 3.25);
  EXPECT_DOUBLE_EQ(q.mean, 2.5);
  EXPECT_TRUE(std::isnan(quartiles({}).median));
}

TEST(Experiment, SingleFisherSelfBaseline) {
  const auto res = run_experiment(small_sim(), {MethodConfig::defaults(Method::fisher)}, 1);
  ASSERT_EQ(res.rows.size(), 1u);
  EXPECT_EQ(res.rows[0].relative_cost, 1.0);
  EXPECT_EQ(res.baseline, "fisher");
  EXPECT_TRUE(res.rows[0].ok);
  EXPECT_GE(res.rows[0].auc_train, 0.0);
  EXPECT_LE(res.rows[0].auc_train, 1.0);
}

TEST(Experiment, DeterministicAcrossRunsAndThreads) {
  const std::vector<MethodConfig> methods = {MethodConfig::defaults(Method::fisher), MethodConfig::defaults(Method::gm),
                                             MethodConfig::defaults(Method::rgm), MethodConfig::defaults(Method::maxent)};
  const auto a = run_experiment(small_sim(), methods, 4, 1);
  const auto b = run_experiment(small_sim(), methods, 4, 3);
  ASSERT_EQ(a.rows.size(), 16u);
  ASSERT_EQ(b.rows.size(), 16u);
  EXPECT_TRUE(b.parallel_timing);
  EXPECT_FALSE(a.parallel_timing);
  EXPECT_EQ(a.reference, "maxent");
  for (std::size_t k = 0; k < a.rows.size(); ++k) {
    EXPECT_EQ(a.rows[k].method, b.rows[k].method);
    EXPECT_EQ(a.rows[k].replication, b.rows[k].replication);
    EXPECT_EQ(a.rows[k].squared_error, b.rows[k].squared_error);
    EXPECT_EQ(a.rows[k].auc_test, b.rows[k].auc_test);
    EXPECT_GT(a.rows[k].relative_cost, 0.0);
  }
  ASSERT_EQ(a.summary.size(), 4u);
  for (const auto& s : a.summary) {
    EXPECT_EQ(s.successes, 4);
    EXPECT_EQ(s.failures, 0);
    EXPECT_LE(s.squared_error.q1, s.squared_error.median);
    EXPECT_LE(s.squared_error.median, s.squared_error.q3);
  }
  // Jeffreys divergence of maxent against itself.
  EXPECT_EQ(*a.rows[3].jeffreys_vs_reference, 0.0);
}

TEST(Experiment, FailuresAreRecordedPerCell) {
  MethodConfig bad = MethodConfig::defaults(Method::rgm);
  bad.order = 1;  // coordinate descent only supports the second-order loss
  const auto res = run_experiment(small_sim(), {MethodConfig::defaults(Method::fisher), bad}, 2);
  EXPECT_EQ(res.summary[1].failures, 2);
  EXPECT_EQ(res.summary[0].successes, 2);
  EXPECT_FALSE(res.rows[1].ok);
  EXPECT_FALSE(res.rows[1].error.empty());
}

TEST(Io, FitDocumentRoundTrip) {
  const Simulation sim = simulate(small_sim());
  const SuffStats s = sufficient_stats(sim.data);
  MethodConfig c = MethodConfig::defaults(Method::rgm);
  c.tau = 0.1;
  Fit f = fit_method(c, sim.data, s);
  f.coeffs.intercept = recover_intercept(f, sim.data, 0.0);
  std::ostringstream out;
  fit_document(f, sim.data.feature_names()).write(out);
  std::istringstream in(out.str());
  const FitFile back = parse_fit_document(KeyValueDoc::read(in));
  EXPECT_EQ(back.fit.coeffs.slope, f.coeffs.slope);
  EXPECT_EQ(*back.fit.coeffs.intercept, *f.coeffs.intercept);
  EXPECT_EQ(back.fit.method.method, Method::rgm);
  EXPECT_EQ(back.fit.method.gamma, c.gamma);
  EXPECT_EQ(back.fit.method.tau, 0.1);
  EXPECT_EQ(back.fit.iterations, f.iterations);
  EXPECT_EQ(back.fit.nnz, f.nnz);
  EXPECT_EQ(back.fit.converged, f.converged);
  EXPECT_EQ(back.feature_names, sim.data.feature_names());
  // Stable field order.
  std::vector<std::string> keys;
  for (const auto& e : KeyValueDoc::read(*std::make_unique<std::istringstream>(out.str())).entries) keys.push_back(e.first);
  const std::vector<std::string> expect = {"format", "method", "gamma", "tau", "order", "p", "features", "alpha",
                                           "intercept", "iterations", "converged", "wall_time", "nnz", "objective"};
  EXPECT_EQ(keys, expect);
}

TEST(Io, MissingInterceptIsNa) {
  Fit f;
  f.coeffs.slope = Eigen::Vector2d(0.5, -1.0);
  f.method = MethodConfig::defaults(Method::fisher);
  std::ostringstream out;
  fit_document(f, {"a", "b"}).write(out);
  EXPECT_NE(out.str().find("intercept\tNA"), std::string::npos);
  std::istringstream in(out.str());
  EXPECT_FALSE(parse_fit_document(KeyValueDoc::read(in)).fit.coeffs.intercept.has_value());
}

TEST(Io, PredictionTableAndJeffreys) {
  const Simulation sim = simulate(small_sim(9));
  const SuffStats s = sufficient_stats(sim.data);
  const Fit a = fit_fisher(sim.data, s, 0.0);
  const Fit b = fit_method(MethodConfig::defaults(Method::gm), sim.data, s);
  const Prediction pa = predict(a.coeffs, sim.data), pb = predict(b.coeffs, sim.data);
  EXPECT_NEAR(pa.probability.sum(), 1.0, 1e-10);
  std::ostringstream oa, ob;
  write_prediction(oa, pa);
  write_prediction(ob, pb);
  std::istringstream ia(oa.str()), ib(ob.str());
  const Prediction ra = read_prediction(io::read_table(ia, "a"), "a");
  const Prediction rb = read_prediction(io::read_table(ib, "b"), "b");
  EXPECT_EQ(ra.probability, pa.probability);
  EXPECT_EQ(ra.location_ids, pa.location_ids);
  EXPECT_NEAR(jeffreys_from_probabilities(ra.probability, rb.probability),
              jeffreys_divergence(a.coeffs, b.coeffs, sim.data), 1e-12);
}

TEST(Io, ZeroFitGivesUniformProbabilities) {
  const Dataset d = oracle::random_dataset({40, 3, 5}, 4);
  Coefficients zero;
  zero.slope = Eigen::VectorXd::Zero(3);
  const Prediction p = predict(zero, d);
  for (Index i = 0; i < 40; ++i) EXPECT_NEAR(p.probability[i], 1.0 / 40.0, 1e-15);
}

TEST(Io, SimulationDocumentAndTables) {
  const SimConfig c = small_sim(11);
  const Simulation sim = simulate(c);
  std::ostringstream meta, bg, pres;
  simulation_document(c, sim.alpha_star).write(meta);
  write_background(bg, sim.data);
  write_presence(pres, sim.data);
  std::istringstream mi(meta.str()), bi(bg.str()), pi(pres.str());
  const KeyValueDoc doc = KeyValueDoc::read(mi);
  EXPECT_EQ(doc.scalar("lambda0"), "3");
  EXPECT_EQ(doc.scalar("rng"), std::string(Rng::algorithm));
  EXPECT_EQ(doc.get("alpha_star").size(), 5u);
  const Dataset back = load_dataset(io::read_table(bi, "bg"), io::read_table(pi, "pres"));
  EXPECT_EQ(back.features(), sim.data.features());
  EXPECT_EQ(back.presence(), sim.data.presence());
}

TEST(Io, ParseErrors) {
  EXPECT_THROW(io::parse_double("1.5x", "here"), DataError);
  EXPECT_THROW(io::parse_double("", "here"), DataError);
  EXPECT_TRUE(std::isnan(io::parse_double("NA", "here")));
  std::istringstream ragged("a\tb\n1\t2\n3\n");
  EXPECT_THROW(io::read_table(ragged, "ragged"), DataError);
  EXPECT_THROW(io::read_table(std::string("/nonexistent/file.tsv")), IoError);
}
