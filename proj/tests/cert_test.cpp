#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "bro/cert/certification.hpp"

using namespace bro;

TEST(Margin, Examples) {
  EXPECT_DOUBLE_EQ(margin(Tensor::vector({3, 1, 0}), 0), 2.0);
  EXPECT_DOUBLE_EQ(margin(Tensor::vector({1, 1}), 0), 0.0);
  EXPECT_DOUBLE_EQ(margin(Tensor::vector({0, 5, 2}), 0), -5.0);
  EXPECT_THROW(margin(Tensor::vector({1}), 0), ContractError);
  EXPECT_THROW(margin(Tensor::vector({1, 2}), 2), ContractError);
}

TEST(CertifiedRadius, Examples) {
  EXPECT_NEAR(certified_radius(1.0, 1.0), 0.70710678, 1e-8);
  EXPECT_EQ(certified_radius(-0.3, 1.0), 0.0);
  EXPECT_NEAR(certified_radius(2.0, 4.0), 0.35355339, 1e-8);
  EXPECT_THROW(certified_radius(1.0, 0.0), ContractError);
}

TEST(CertifiedRadius, Monotone) {
  double prev = 0.0;
  for (double m = 0.0; m < 3.0; m += 0.25) {
    const double r = certified_radius(m, 2.0);
    EXPECT_GE(r, prev);
    prev = r;
    EXPECT_GE(certified_radius(m, 1.0), certified_radius(m, 1.5));
  }
}

TEST(LlnRadius, ReducesToPlainBoundForOrthonormalRows) {
  const Tensor rows = Tensor::eye(2);
  const std::vector<double> z{1.0, 0.0};
  EXPECT_NEAR(lln_certified_radius(z, 0, rows, 1.0), 1.0 / std::sqrt(2.0), 1e-15);
}

TEST(LlnRadius, MisclassifiedGivesZero) {
  std::mt19937_64 rng(1);
  const std::vector<double> z{0.0, 2.0, 1.0};
  EXPECT_EQ(lln_certified_radius(z, 0, Tensor::randn({3, 4}, rng), 1.0), 0.0);
}

TEST(LlnRadius, IdenticalRowsAreSkipped) {
  const Tensor rows({2, 3}, std::vector<double>{1, 0, 0, 1, 0, 0});
  const std::vector<double> z{1.0, 0.5};
  EXPECT_EQ(lln_certified_radius(z, 0, rows, 1.0), std::numeric_limits<double>::infinity());
}

TEST(LlnRadius, MatchesPairwiseOracle) {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor rows = Tensor::randn({3, 5}, rng);
    const std::vector<double> z{u(rng) + 1.5, u(rng), u(rng)};
    const double lip = 0.5 + std::abs(u(rng));
    double oracle = std::numeric_limits<double>::infinity();
    for (std::size_t j = 1; j < 3; ++j) {
      double d2 = 0.0;
      for (std::size_t i = 0; i < 5; ++i) d2 += std::pow(rows(0, i) - rows(j, i), 2);
      oracle = std::min(oracle, (z[0] - z[j]) / (lip * std::sqrt(d2)));
    }
    EXPECT_NEAR(lln_certified_radius(z, 0, rows, lip), std::max(0.0, oracle), 1e-14);
  }
}

TEST(ComposeLipschitz, Products) {
  EXPECT_DOUBLE_EQ(compose_lipschitz({{{"a", 1}, {"b", 1}, {"c", 1}}}), 1.0);
  EXPECT_DOUBLE_EQ(compose_lipschitz({{{"a", 2}, {"b", 0.5}, {"c", 3}}}), 3.0);
  EXPECT_THROW(compose_lipschitz({{{"a", 0.0}}}), ContractError);
}

TEST(RadiusStats, Examples) {
  const auto a = radius_stats({1, 1, 1});
  EXPECT_EQ(a.median, 1.0);
  EXPECT_EQ(a.variance, 0.0);
  EXPECT_EQ(a.skewness, 0.0);

  // (0, 0, 3): mean 1, m2 = (1 + 1 + 4) / 3 = 2, m3 = (-1 - 1 + 8) / 3 = 2,
  // g1 = 2 / 2^{3/2} = 1 / sqrt(2).
  const auto b = radius_stats({0, 0, 3});
  EXPECT_EQ(b.median, 0.0);
  EXPECT_NEAR(b.variance, 2.0, 1e-15);
  EXPECT_NEAR(b.skewness, 1.0 / std::sqrt(2.0), 1e-15);

  EXPECT_DOUBLE_EQ(radius_stats({4, 1, 3, 2}).median, 2.5);
  EXPECT_THROW(radius_stats({}), ContractError);
}

TEST(RadiusStats, MatchesMomentOracle) {
  std::mt19937_64 rng(3);
  std::exponential_distribution<double> e(2.0);
  std::vector<double> r(101);
  for (auto& x : r) x = e(rng);
  long double mean = 0;
  for (double x : r) mean += x;
  mean /= r.size();
  long double m2 = 0, m3 = 0;
  for (double x : r) {
    m2 += (x - mean) * (x - mean);
    m3 += (x - mean) * (x - mean) * (x - mean);
  }
  m2 /= r.size();
  m3 /= r.size();
  const auto st = radius_stats(r);
  EXPECT_NEAR(st.variance, static_cast<double>(m2), 1e-13);
  EXPECT_NEAR(st.skewness, static_cast<double>(m3 / std::pow(m2, 1.5L)), 1e-12);
  std::sort(r.begin(), r.end());
  EXPECT_EQ(st.median, r[50]);
}

TEST(Curve, CleanAccuracyAtZeroAndEmptyBeyondMax) {
  std::vector<CertificationRecord> recs{{0, 0, 1.0, 0.5}, {1, 1, 0.0, 0.0}, {0, 1, -1.0, 0.0}, {1, 1, 2.0, 1.2}};
  const auto c = accuracy_radius_curve(recs, {0.0, 0.4, 1.0, 5.0});
  EXPECT_DOUBLE_EQ(c[0].accuracy, 0.75);
  EXPECT_DOUBLE_EQ(c[1].accuracy, 0.5);
  EXPECT_DOUBLE_EQ(c[2].accuracy, 0.25);
  EXPECT_DOUBLE_EQ(c[3].accuracy, 0.0);
  EXPECT_THROW(accuracy_radius_curve(recs, {1.0, 0.0}), ContractError);
}

TEST(Curve, MatchesCountingOracleAndIsNonIncreasing) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-1.0, 2.0);
  std::vector<CertificationRecord> recs;
  for (int i = 0; i < 200; ++i) {
    const std::vector<double> z{u(rng), u(rng), u(rng)};
    recs.push_back(certify_logits(z, i % 3, certified_radius(margin(std::span<const double>(z), i % 3), 1.0)));
  }
  std::vector<double> grid;
  for (int i = 0; i <= 20; ++i) grid.push_back(0.1 * i);
  const auto c = accuracy_radius_curve(recs, grid);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    int count = 0;
    for (const auto& r : recs) count += (r.label == r.predicted && r.radius >= grid[g]);
    EXPECT_DOUBLE_EQ(c[g].accuracy, count / 200.0);
    if (g) {
      EXPECT_LE(c[g].accuracy, c[g - 1].accuracy);
    }
  }
}

TEST(Records, InvariantsFromLogits) {
  const auto tie = certify_logits(std::vector<double>{1.0, 1.0}, 0, 0.0);
  EXPECT_TRUE(tie.correct());
  EXPECT_EQ(tie.radius, 0.0);
  const auto wrong = certify_logits(std::vector<double>{0.0, 3.0, 1.0}, 0, 9.0);
  EXPECT_EQ(wrong.predicted, 1u);
  EXPECT_EQ(wrong.radius, 0.0);
}

TEST(Report, RoundTripsThroughText) {
  std::vector<CertificationRecord> recs{{0, 0, 1.0, 0.5}, {1, 0, -1.0, 0.0},
                                        {1, 1, 2.0, std::numeric_limits<double>::infinity()}};
  const auto rep = make_report(recs, {0.0, 0.25, 1.0});
  std::stringstream ss;
  write_report(ss, rep);
  const auto back = read_report(ss);
  ASSERT_EQ(back.records.size(), 3u);
  EXPECT_EQ(back.records[2].radius, std::numeric_limits<double>::infinity());
  EXPECT_EQ(back.records[1].predicted, 0u);
  EXPECT_EQ(back.curve.size(), 3u);
  EXPECT_DOUBLE_EQ(back.curve[1].accuracy, rep.curve[1].accuracy);
  EXPECT_DOUBLE_EQ(back.stats.median, rep.stats.median);
}

TEST(Report, RejectsMalformedText) {
  std::stringstream bad("{\"version\": 99}\n");
  EXPECT_THROW(read_report(bad), FormatError);
  std::stringstream junk("not json\n");
  EXPECT_THROW(read_report(junk), FormatError);
  std::stringstream empty;
  EXPECT_THROW(read_report(empty), FormatError);
}
