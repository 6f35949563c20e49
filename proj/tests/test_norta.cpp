#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "boxprob/boxprob.hpp"
#include "helpers.hpp"

using namespace boxprob;
using namespace testing_helpers;

namespace {

std::vector<double> ranks(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < order.size(); ++i) r[order[i]] = static_cast<double>(i);
  return r;
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

std::vector<double> column(const std::vector<std::vector<double>>& rows, std::size_t j) {
  std::vector<double> c;
  c.reserve(rows.size());
  for (const auto& r : rows) c.push_back(r[j]);
  return c;
}

Eigen::MatrixXd spearman_matrix(std::size_t n, std::initializer_list<double> off) {
  Eigen::MatrixXd s = Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  auto it = off.begin();
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < s.cols(); ++j) s(i, j) = s(j, i) = *it++;
  }
  return s;
}

std::vector<MarginalDistribution> mixed_marginals() {
  return {MarginalDistribution::normal(5.0, 0.2), MarginalDistribution::exponential(5.0, 3.0),
          MarginalDistribution::chi_square(2.0, 4.0, 0.1), MarginalDistribution::lognormal(std::log(0.1), 0.5, 1.3)};
}

}  // namespace

TEST(Marginal, CdfExamples) {
  EXPECT_EQ(marginal_cdf(MarginalDistribution::exponential(1.0), 0.0), 0.0);
  EXPECT_EQ(marginal_cdf(MarginalDistribution::exponential(1.0), -3.0), 0.0);
  EXPECT_EQ(marginal_cdf(MarginalDistribution::uniform(0.0, 1.0), 0.5), 0.5);
  EXPECT_NEAR(marginal_cdf(MarginalDistribution::chi_square(2.0), 2.0), 1.0 - std::exp(-1.0), 1e-12);
  EXPECT_EQ(marginal_cdf(MarginalDistribution::uniform(0.0, 1.0), 2.0), 1.0);
}

TEST(Marginal, ClosedForms) {
  const auto e = MarginalDistribution::exponential(2.0, 1.0);
  EXPECT_NEAR(e.cdf(1.5), 1.0 - std::exp(-1.0), 1e-12);
  const auto ln = MarginalDistribution::lognormal(0.3, 0.7, -1.0);
  EXPECT_NEAR(ln.cdf(1.0), univariate_normal_cdf((std::log(2.0) - 0.3) / 0.7), 1e-12);
  const auto n = MarginalDistribution::normal(1.0, 2.0);
  EXPECT_NEAR(n.cdf(3.0), univariate_normal_cdf(1.0), 1e-12);
  const auto c = MarginalDistribution::chi_square(2.0, 1.0, 0.5);
  EXPECT_NEAR(c.cdf(2.0), 1.0 - std::exp(-1.0), 1e-12);
}

TEST(Marginal, QuantileRoundTrip) {
  std::mt19937_64 rng(41);
  for (const auto& m : {MarginalDistribution::normal(1.0, 2.0), MarginalDistribution::lognormal(0.2, 0.6, 1.0),
                        MarginalDistribution::exponential(3.0, -1.0), MarginalDistribution::chi_square(3.0, 0.5, 2.0),
                        MarginalDistribution::uniform(-2.0, 5.0)}) {
    std::uniform_real_distribution<double> p(1e-6, 1 - 1e-6);
    for (int k = 0; k < 200; ++k) {
      const double x = m.quantile(p(rng));
      EXPECT_NEAR(marginal_quantile(m, marginal_cdf(m, x)), x, 1e-8 * (1 + std::abs(x))) << to_string(m.family());
    }
    EXPECT_EQ(m.quantile(0.0), m.support_lower());
    EXPECT_EQ(m.quantile(1.0), m.support_upper());
  }
}

TEST(Marginal, InvalidParameters) {
  EXPECT_THROW(MarginalDistribution::normal(0.0, 0.0), InvalidArgument);
  EXPECT_THROW(MarginalDistribution::exponential(-1.0), InvalidArgument);
  EXPECT_THROW(MarginalDistribution::uniform(1.0, 1.0), InvalidArgument);
  EXPECT_THROW(MarginalDistribution::chi_square(2.0, 0.0, -1.0), InvalidArgument);
  EXPECT_THROW(MarginalDistribution::lognormal(0.0, std::nan("")), InvalidArgument);
}

TEST(SpearmanToPearson, Examples) {
  EXPECT_EQ(spearman_to_pearson(0.0), 0.0);
  EXPECT_EQ(spearman_to_pearson(1.0), 1.0);
  EXPECT_NEAR(spearman_to_pearson(0.5), 0.5176380902050415, 1e-12);
}

TEST(SpearmanToPearson, OddIncreasingOntoUnitInterval) {
  double prev = -2.0;
  for (int k = -100; k <= 100; ++k) {
    const double rho = k / 100.0;
    const double r = spearman_to_pearson(rho);
    EXPECT_EQ(spearman_to_pearson(-rho), -r);
    EXPECT_GT(r, prev);
    EXPECT_LE(std::abs(r), 1.0 + 1e-15);
    prev = r;
  }
  EXPECT_NEAR(spearman_to_pearson(-1.0), -1.0, 1e-15);
}

TEST(TransformBoxBounds, Examples) {
  const NortaModel n({MarginalDistribution::normal(2.0, 0.5), MarginalDistribution::exponential(1.0),
                      MarginalDistribution::uniform(0.0, 1.0)},
                     Eigen::Matrix3d::Identity());
  const auto [lo, hi] = transform_box_bounds(n, Box{{1.0, 0.0, 0.5}, {3.0, kInf, 1.0}});
  EXPECT_NEAR(lo[0], -2.0, 1e-12);
  EXPECT_NEAR(hi[0], 2.0, 1e-12);
  EXPECT_EQ(lo[1], -kInf);
  EXPECT_EQ(hi[1], kInf);
  EXPECT_NEAR(lo[2], 0.0, 1e-15);
  EXPECT_EQ(hi[2], kInf);
}

TEST(TransformBoxBounds, MonotoneAndTailAccurate) {
  const auto m = MarginalDistribution::exponential(1.0);
  double prev = -kInf;
  for (double x : {1e-300, 1e-10, 0.5, 1.0, 5.0, 30.0, 600.0}) {
    const double z = m.to_normal_score(x);
    EXPECT_GT(z, prev) << x;
    prev = z;
  }
  // exp(-30) upper tail is resolved, not rounded to +inf
  EXPECT_NEAR(m.to_normal_score(30.0), normal_quantile_upper(std::exp(-30.0)), 1e-9);
}

TEST(TransformedGaussian, IdentitySpearman) {
  const NortaModel n(mixed_marginals(), Eigen::Matrix4d::Identity());
  EXPECT_TRUE(n.transformed_gaussian().cov().isIdentity(0.0));
  EXPECT_TRUE(n.transformed_gaussian().mean().isZero(0.0));
  EXPECT_TRUE(n.independent());
}

TEST(TransformedGaussian, PerfectCorrelationIsRejected) {
  try {
    NortaModel({MarginalDistribution::normal(0, 1), MarginalDistribution::normal(0, 1)}, spearman_matrix(2, {1.0}));
    FAIL();
  } catch (const NotPositiveDefinite& e) {
    EXPECT_NEAR(e.smallest_eigenvalue(), 0.0, 1e-12);
  }
}

TEST(TransformedGaussian, MixedSettingIsAccepted) {
  const NortaModel n(mixed_marginals(), spearman_matrix(4, {0.2, 0.1, 0.3, 0.25, 0.15, 0.2}));
  const Gaussian g = build_transformed_gaussian(n);
  const auto& cov = g.cov();
  EXPECT_NEAR(cov(0, 3), 2 * std::sin(0.3 * std::numbers::pi / 6), 1e-15);
  EXPECT_EQ(cov.diagonal(), Eigen::Vector4d::Ones());
}

TEST(NortaModel, RejectsMalformedSpearman) {
  auto m = mixed_marginals();
  Eigen::Matrix4d s = Eigen::Matrix4d::Identity();
  s(0, 1) = 0.2;
  EXPECT_THROW(NortaModel(m, s), InvalidArgument);  // asymmetric
  s(1, 0) = 0.2;
  s(2, 2) = 0.9;
  EXPECT_THROW(NortaModel(m, s), InvalidArgument);  // diagonal
  s(2, 2) = 1.0;
  s(0, 1) = s(1, 0) = 1.5;
  EXPECT_THROW(NortaModel(m, s), InvalidArgument);  // range
  EXPECT_THROW(NortaModel(m, Eigen::Matrix3d::Identity()), DimensionError);
}

TEST(SampleNorta, StandardNormalMoments) {
  const NortaModel n({MarginalDistribution::normal(0, 1), MarginalDistribution::normal(0, 1)}, Eigen::Matrix2d::Identity());
  const auto xs = sample_norta(n, 100'000, 1);
  for (std::size_t j = 0; j < 2; ++j) {
    const auto c = column(xs, j);
    const double mean = std::accumulate(c.begin(), c.end(), 0.0) / c.size();
    double var = 0;
    for (double v : c) var += (v - mean) * (v - mean);
    EXPECT_NEAR(mean, 0.0, 0.02);
    EXPECT_NEAR(std::sqrt(var / c.size()), 1.0, 0.02);
  }
}

TEST(SampleNorta, ExponentialSupport) {
  const NortaModel n({MarginalDistribution::exponential(1), MarginalDistribution::exponential(1)},
                     spearman_matrix(2, {0.6}));
  for (const auto& x : sample_norta(n, 20'000, 2)) {
    EXPECT_GE(x[0], 0.0);
    EXPECT_GE(x[1], 0.0);
  }
}

TEST(SampleNorta, RankCorrelationIsPreserved) {
  const NortaModel two({MarginalDistribution::normal(0, 1), MarginalDistribution::exponential(1)},
                       spearman_matrix(2, {0.5}));
  const auto xs = sample_norta(two, 100'000, 3);
  EXPECT_NEAR(pearson(ranks(column(xs, 0)), ranks(column(xs, 1))), 0.5, 0.02);

  const auto s = spearman_matrix(4, {0.2, 0.1, 0.3, 0.25, 0.15, -0.2});
  const NortaModel mixed(mixed_marginals(), s);
  const std::size_t count = 50'000;
  const auto ys = sample_norta(mixed, count, 4);
  const double se = std::sqrt(1.06 / (count - 3));
  for (Eigen::Index i = 0; i < 4; ++i) {
    for (Eigen::Index j = i + 1; j < 4; ++j) {
      const double r = pearson(ranks(column(ys, i)), ranks(column(ys, j)));
      EXPECT_LE(std::abs(std::atanh(r) - std::atanh(s(i, j))), 3 * se) << i << "," << j;
    }
  }
}

TEST(SampleNorta, DeterministicGivenSeed) {
  const NortaModel n(mixed_marginals(), Eigen::Matrix4d::Identity());
  EXPECT_EQ(sample_norta(n, 100, 9), sample_norta(n, 100, 9));
  EXPECT_NE(sample_norta(n, 100, 9), sample_norta(n, 100, 10));
}

TEST(NortaEquivalence, NormalMarginalsMatchDirectGaussian) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> rho(-0.4, 0.4);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> sd(0.3, 2.0);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t n = 2 + rep % 3;
    const auto d = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd s = Eigen::MatrixXd::Identity(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = i + 1; j < d; ++j) s(i, j) = s(j, i) = rho(rng);
    }
    std::vector<MarginalDistribution> m;
    Eigen::VectorXd mu(d);
    Eigen::VectorXd sigma(d);
    for (Eigen::Index i = 0; i < d; ++i) {
      mu(i) = u(rng);
      sigma(i) = sd(rng);
      m.push_back(MarginalDistribution::normal(mu(i), sigma(i)));
    }
    Eigen::MatrixXd cov(d, d);
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) cov(i, j) = sigma(i) * sigma(j) * (i == j ? 1.0 : spearman_to_pearson(s(i, j)));
    }
    const NortaModel norta(m, s);
    const Gaussian direct(mu, cov);
    Box box{std::vector<double>(n), std::vector<double>(n)};
    for (std::size_t i = 0; i < n; ++i) {
      box.lower[i] = mu(static_cast<Eigen::Index>(i)) + u(rng) - 0.5;
      box.upper[i] = box.lower[i] + 1.0 + u(rng);
    }
    box.lower[0] = -kInf;
    const auto [zl, zu] = transform_box_bounds(norta, box);
    const double via_norta = mvn_rectangle_probability(build_transformed_gaussian(norta), zl, zu).value;
    const double via_direct = mvn_rectangle_probability(direct, box.lower, box.upper).value;
    EXPECT_NEAR(via_norta, via_direct, 1e-5) << rep;
  }
}

TEST(NortaModel, ShiftedTranslatesEveryFamily) {
  const NortaModel n(mixed_marginals(), Eigen::Matrix4d::Identity());
  const std::vector<double> delta{1.0, -2.0, 0.5, 3.0};
  const auto s = n.shifted(delta);
  for (std::size_t i = 0; i < 4; ++i) {
    for (double x : {0.0, 3.5, 5.0, 7.0}) {
      EXPECT_NEAR(s.marginals()[i].cdf(x + delta[i]), n.marginals()[i].cdf(x), 1e-14);
    }
  }
}
