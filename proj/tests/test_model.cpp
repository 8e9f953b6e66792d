#include <gtest/gtest.h>

#include <sstream>

#include "cbasdm/cbasdm.hpp"
#include "oracles.hpp"

using namespace cbasdm;

namespace {

Dataset two_point() {
  Eigen::MatrixXd f(2, 1);
  f << 0.0, 1.0;
  return Dataset::create(f, Eigen::VectorXd(), {1});
}

io::Table table(std::vector<std::string> header, std::vector<std::vector<std::string>> rows) {
  io::Table t;
  t.header = std::move(header);
  t.rows = std::move(rows);
  return t;
}

}  // namespace

TEST(Dataset, UniformWeightsByDefault) {
  const Dataset d = Dataset::create(Eigen::MatrixXd::Ones(4, 1), Eigen::VectorXd(), {0});
  for (Index i = 0; i < 4; ++i) EXPECT_DOUBLE_EQ(d.weights()[i], 0.25);
}

TEST(Dataset, WeightsNormalized) {
  Eigen::VectorXd w(4);
  w << 2, 1, 1, 0;
  const Dataset d = Dataset::create(Eigen::MatrixXd::Ones(4, 1), w, {0});
  EXPECT_DOUBLE_EQ(d.weights()[0], 0.5);
  EXPECT_DOUBLE_EQ(d.weights()[1], 0.25);
  EXPECT_DOUBLE_EQ(d.weights()[2], 0.25);
  EXPECT_DOUBLE_EQ(d.weights()[3], 0.0);
}

TEST(Dataset, RandomWeightsSumToOne) {
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const Dataset d = oracle::random_dataset({137, 2, 5, true}, seed);
    EXPECT_NEAR(d.weights().sum(), 1.0, 1e-12);
  }
}

TEST(Dataset, RejectsBadInput) {
  Eigen::MatrixXd f = Eigen::MatrixXd::Ones(3, 2);
  EXPECT_THROW(Dataset::create(f, Eigen::VectorXd(), {}), DataError);
  EXPECT_THROW(Dataset::create(f, Eigen::VectorXd(), {0, 1, 2}), DataError);
  EXPECT_THROW(Dataset::create(f, Eigen::VectorXd(), {5}), DataError);
  Eigen::VectorXd neg(3);
  neg << 1, -1, 1;
  EXPECT_THROW(Dataset::create(f, neg, {0}), DataError);
  EXPECT_THROW(Dataset::create(f, Eigen::VectorXd::Zero(3), {0}), DataError);
  f(1, 1) = std::nan("");
  EXPECT_THROW(Dataset::create(f, Eigen::VectorXd(), {0}), DataError);
}

TEST(SuffStats, TwoPointHandComputation) {
  const SuffStats s = sufficient_stats(two_point());
  EXPECT_DOUBLE_EQ(s.mean_bg[0], 0.5);
  EXPECT_DOUBLE_EQ(s.cov_bg(0, 0), 0.25);
  EXPECT_DOUBLE_EQ(s.mean_pres[0], 1.0);
  EXPECT_DOUBLE_EQ(s.lower[0], -0.5);
  EXPECT_DOUBLE_EQ(s.upper[0], 0.5);
  EXPECT_DOUBLE_EQ(s.raw_lower[0], 0.0);
  EXPECT_DOUBLE_EQ(s.raw_upper[0], 1.0);
}

TEST(SuffStats, ConstantColumnDegenerates) {
  Eigen::MatrixXd f(5, 2);
  f << 1, 3, 2, 3, 3, 3, 4, 3, 5, 3;
  const SuffStats s = sufficient_stats(Dataset::create(f, Eigen::VectorXd(), {0, 2}));
  EXPECT_EQ(s.cov_bg(1, 1), 0.0);
  EXPECT_EQ(s.cov_bg(0, 1), 0.0);
  EXPECT_EQ(s.cov_bg(1, 0), 0.0);
  EXPECT_EQ(s.sd_pres[1], 0.0);
}

TEST(SuffStats, MatchesNaiveLoops) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const Index n = 20 + static_cast<Index>(seed * 6 % 180);
    const Index p = 1 + static_cast<Index>(seed % 8);
    const Dataset d = oracle::random_dataset({n, p, 7, seed % 2 == 0, 2.0}, seed);
    const SuffStats s = sufficient_stats(d);
    const auto o = oracle::naive_stats(d);
    for (Index a = 0; a < p; ++a) {
      EXPECT_NEAR(s.mean_bg[a], o.mean_bg[a], 1e-12 * (1 + std::abs(o.mean_bg[a])));
      EXPECT_NEAR(s.mean_pres[a], o.mean_pres[a], 1e-12 * (1 + std::abs(o.mean_pres[a])));
      EXPECT_NEAR(s.sd_pres[a], o.sd_pres[a], 1e-12 * (1 + o.sd_pres[a]));
      EXPECT_NEAR(s.lower[a], o.lower[a], 1e-12 * (1 + std::abs(o.lower[a])));
      EXPECT_NEAR(s.upper[a], o.upper[a], 1e-12 * (1 + std::abs(o.upper[a])));
      for (Index b = 0; b < p; ++b) EXPECT_NEAR(s.cov_bg(a, b), o.cov[a][b], 1e-12 * (1 + std::abs(o.cov[a][b])));
    }
  }
}

TEST(SuffStats, PresenceMultiplicityCounts) {
  Eigen::MatrixXd f(3, 1);
  f << 0, 1, 4;
  const SuffStats s = sufficient_stats(Dataset::create(f, Eigen::VectorXd(), {2, 2}));
  EXPECT_DOUBLE_EQ(s.mean_pres[0], 4.0);
  EXPECT_EQ(s.m, 2);
}

TEST(SuffStats, SymmetricPsdAndDeterministic) {
  const Dataset d = oracle::random_dataset({150, 6, 20, true}, 99);
  const SuffStats a = sufficient_stats(d);
  const SuffStats b = sufficient_stats(d);
  EXPECT_EQ(a.cov_bg, b.cov_bg);
  EXPECT_EQ(a.mean_bg, b.mean_bg);
  EXPECT_LE((a.cov_bg - a.cov_bg.transpose()).cwiseAbs().maxCoeff(), 1e-12);
  const double min_eig = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(a.cov_bg).eigenvalues().minCoeff();
  EXPECT_GE(min_eig, -1e-10 * a.cov_bg.trace());
  for (Index j = 0; j < a.p(); ++j) EXPECT_LE(a.lower[j], a.upper[j]);
}

TEST(LogIntensity, HandArithmetic) {
  Coefficients c;
  c.slope = Eigen::Vector2d(1, 2);
  c.intercept = 1.0;
  EXPECT_DOUBLE_EQ(log_intensity(c, Eigen::Vector2d(3, -1)), 2.0);
  Coefficients zero;
  zero.slope = Eigen::Vector2d::Zero();
  EXPECT_DOUBLE_EQ(log_intensity(zero, Eigen::Vector2d(7, -3)), 0.0);
  EXPECT_THROW(log_intensity(c, Eigen::Vector3d(1, 2, 3)), std::invalid_argument);
}

TEST(LogIntensity, ConstantIntensityTotal) {
  const Dataset d = oracle::random_dataset({40, 3, 8}, 3);
  Coefficients c;
  c.slope = Eigen::VectorXd::Zero(3);
  c.intercept = std::log(8.0);
  const Eigen::VectorXd eta = log_intensity(c, d);
  EXPECT_NEAR(d.weights().dot(eta.array().exp().matrix()), 8.0, 1e-12);
}

TEST(LogIntensity, Linear) {
  const Eigen::VectorXd row = oracle::random_vector(5, 1.0, 1);
  Coefficients a, b, ab;
  a.slope = oracle::random_vector(5, 1.0, 2);
  b.slope = oracle::random_vector(5, 1.0, 3);
  a.intercept = 0.3;
  b.intercept = -1.1;
  ab.slope = a.slope + b.slope;
  ab.intercept = *a.intercept + *b.intercept;
  EXPECT_NEAR(log_intensity(ab, row), log_intensity(a, row) + log_intensity(b, row), 1e-12);
}

TEST(Standardize, UnitInterval) {
  Eigen::MatrixXd f(3, 1);
  f << 2, 4, 6;
  auto [z, t] = standardize(Dataset::create(f, Eigen::VectorXd(), {0}), StandardizeMode::unit_interval);
  EXPECT_DOUBLE_EQ(z.features()(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(z.features()(1, 0), 0.5);
  EXPECT_DOUBLE_EQ(z.features()(2, 0), 1.0);
}

TEST(Standardize, NoneIsIdentity) {
  const Dataset d = oracle::random_dataset({30, 2, 4}, 5);
  auto [z, t] = standardize(d, StandardizeMode::none);
  EXPECT_EQ(z.features(), d.features());
  EXPECT_EQ(t.shift, Eigen::VectorXd::Zero(2));
  EXPECT_EQ(t.scale, Eigen::VectorXd::Ones(2));
}

TEST(Standardize, ZscoreRoundTrip) {
  const Dataset d = oracle::random_dataset({60, 4, 6, true, 5.0}, 8);
  auto [z, t] = standardize(d, StandardizeMode::zscore);
  const SuffStats s = sufficient_stats(z);
  for (Index j = 0; j < 4; ++j) {
    EXPECT_NEAR(s.mean_bg[j], 0.0, 1e-12);
    EXPECT_NEAR(s.cov_bg(j, j), 1.0, 1e-12);
  }
  const Eigen::MatrixXd back = t.invert(z.features());
  for (Index i = 0; i < d.n(); ++i)
    for (Index j = 0; j < d.p(); ++j)
      EXPECT_NEAR(back(i, j), d.features()(i, j), 1e-10 * (1 + std::abs(d.features()(i, j))));
}

TEST(Standardize, ConstantColumnRejectedByName) {
  Eigen::MatrixXd f(3, 2);
  f << 1, 5, 2, 5, 3, 5;
  const Dataset d = Dataset::create(f, Eigen::VectorXd(), {0}, {}, {"elev", "flat"});
  for (auto mode : {StandardizeMode::unit_interval, StandardizeMode::zscore}) {
    try {
      standardize(d, mode);
      FAIL() << "expected rejection";
    } catch (const DataError& e) {
      EXPECT_NE(std::string(e.what()).find("flat"), std::string::npos);
    }
  }
}

TEST(Standardize, CoefficientsMapBack) {
  const Dataset d = oracle::random_dataset({50, 3, 6, false, 3.0}, 12);
  auto [z, t] = standardize(d, StandardizeMode::zscore);
  Coefficients cz;
  cz.slope = oracle::random_vector(3, 1.0, 4);
  cz.intercept = 0.7;
  const Coefficients raw = t.to_original(cz);
  const Eigen::VectorXd a = log_intensity(cz, z);
  const Eigen::VectorXd b = log_intensity(raw, d);
  EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(LoadDataset, UniformDefaultAndMapping) {
  const auto bg = table({"location_id", "x"}, {{"a", "1"}, {"b", "2"}, {"c", "3"}, {"d", "4"}});
  const auto pres = table({"location_id"}, {{"c"}, {"a"}, {"c"}});
  const Dataset d = load_dataset(bg, pres);
  EXPECT_EQ(d.n(), 4);
  EXPECT_DOUBLE_EQ(d.weights()[3], 0.25);
  EXPECT_EQ(d.presence(), (std::vector<Index>{2, 0, 2}));
}

TEST(LoadDataset, WeightColumn) {
  const auto bg = table({"location_id", "w", "x"}, {{"a", "2", "1"}, {"b", "1", "2"}, {"c", "1", "3"}, {"d", "0", "4"}});
  const auto pres = table({"location_id"}, {{"b"}});
  const Dataset d = load_dataset(bg, pres, std::string("w"));
  EXPECT_EQ(d.p(), 1);
  EXPECT_DOUBLE_EQ(d.weights()[0], 0.5);
  EXPECT_DOUBLE_EQ(d.weights()[3], 0.0);
}

TEST(LoadDataset, Errors) {
  const auto bg = table({"location_id", "x"}, {{"a", "1"}, {"b", "2"}, {"c", "3"}});
  try {
    load_dataset(bg, table({"location_id"}, {{"zz9"}}));
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("zz9"), std::string::npos);
  }
  EXPECT_THROW(load_dataset(table({"location_id", "x"}, {{"a", "1"}, {"a", "2"}, {"c", "3"}}),
                            table({"location_id"}, {{"a"}})),
               DataError);
  try {
    load_dataset(table({"location_id", "x"}, {{"a", "1"}, {"b", "inf"}, {"c", "3"}}), table({"location_id"}, {{"a"}}));
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("row 2"), std::string::npos);
  }
  EXPECT_THROW(load_dataset(bg, table({"location_id"}, {{"a"}}), std::string("nope")), DataError);
}

TEST(LoadDataset, CommaAndTabRoundTrip) {
  std::istringstream csv("location_id,x,y\nr1,1.5,2\nr2,-3,4e-3\nr3,0,0\n");
  const io::Table t = io::read_table(csv, "csv");
  const Dataset d = load_dataset(t, table({"location_id"}, {{"r2"}}));
  EXPECT_DOUBLE_EQ(d.features()(1, 1), 4e-3);
  std::ostringstream out;
  write_background(out, d, true);
  std::istringstream back(out.str());
  const Dataset e = load_dataset(io::read_table(back, "tsv"), table({"location_id"}, {{"r2"}}), std::string("weight"));
  EXPECT_EQ(e.features(), d.features());
  EXPECT_EQ(e.weights(), d.weights());
  EXPECT_EQ(e.feature_names(), d.feature_names());
}
