#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "../common/label_oracle.hpp"
#include "mosq/labels/stats.hpp"
#include "test_util.hpp"

using namespace mosq;
using namespace mosq::labels;

namespace {

std::vector<int> random_scores(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> len(2, 30), score(1, 5);
  std::vector<int> s(static_cast<std::size_t>(len(rng)));
  for (auto& v : s) v = score(rng);
  return s;
}

}  // namespace

TEST(ComputeStats, TypicalRecord) {
  const auto st = compute_stats(std::vector<int>{4, 4, 3, 5, 4});
  EXPECT_EQ(st.mos, 4.0);
  EXPECT_EQ(st.median, 4.0);
  EXPECT_EQ(st.histogram, (std::array<double, 5>{0, 0, 0.2, 0.6, 0.2}));
  EXPECT_EQ(st.n, 5u);
  EXPECT_NEAR(st.sigma, std::sqrt(0.4), 1e-15);
  EXPECT_EQ(st.skewness, 0.0);
}

TEST(ComputeStats, ConstantRecordIsDegenerate) {
  const auto st = compute_stats(std::vector<int>{3, 3, 3, 3});
  EXPECT_EQ(st.sigma, 0.0);
  EXPECT_EQ(st.skewness, 0.0);
  EXPECT_EQ(st.kurtosis, 0.0);
  EXPECT_EQ(st.histogram, (std::array<double, 5>{0, 0, 1, 0, 0}));
}

TEST(ComputeStats, TwoPointExtremes) {
  const auto st = compute_stats(std::vector<int>{1, 5});
  EXPECT_EQ(st.mos, 3.0);
  EXPECT_EQ(st.sigma, 2.0);
  EXPECT_EQ(st.median, 3.0);
  EXPECT_EQ(st.kurtosis, -2.0);
}

TEST(ComputeStats, SkewedRecordMatchesHandValue) {
  // [1,1,1,5]: mean 2, m2 3, m3 6, m4 21 -> g1 = 6/3^1.5, excess = 21/9 - 3
  const auto st = compute_stats(std::vector<int>{1, 1, 1, 5});
  EXPECT_NEAR(st.skewness, 6.0 / std::pow(3.0, 1.5), 1e-15);
  EXPECT_NEAR(st.kurtosis, 21.0 / 9.0 - 3.0, 1e-15);
}

TEST(ComputeStats, Errors) {
  EXPECT_MOSQ_ERROR(compute_stats(std::vector<int>{4}), ErrorKind::TooFewScores);
  EXPECT_MOSQ_ERROR(compute_stats(std::vector<int>{}), ErrorKind::TooFewScores);
  EXPECT_MOSQ_ERROR(compute_stats(std::vector<int>{4, 6}), ErrorKind::ScoreOutOfRange);
  EXPECT_MOSQ_ERROR(compute_stats(std::vector<int>{0, 3}), ErrorKind::ScoreOutOfRange);
}

TEST(ComputeStats, MatchesBruteForce) {
  std::mt19937_64 rng(42);
  for (int i = 0; i < 2000; ++i) {
    const auto s = random_scores(rng);
    const auto st = compute_stats(s);
    const auto o = oracle::brute_force(s);
    ASSERT_EQ(st.mos, o.mos);
    ASSERT_EQ(st.median, o.median);
    ASSERT_EQ(st.histogram, o.histogram);
    ASSERT_NEAR(st.sigma, o.sigma, 1e-10);
    ASSERT_NEAR(st.skewness, o.skewness, 1e-10);
    ASSERT_NEAR(st.kurtosis, o.kurtosis, 1e-10);
  }
}

// Bitwise equality is not reachable in binary64 (the histogram entries are
// themselves rounded), so the identity is checked to two ulp.
TEST(ComputeStats, MosIsHistogramMeanToTwoUlp) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 5000; ++i) {
    const auto st = compute_stats(random_scores(rng));
    double dot = 0.0;
    for (int k = 0; k < 5; ++k) dot += st.histogram[static_cast<std::size_t>(k)] * (k + 1);
    ASSERT_LE(std::abs(dot - st.mos), 2.0 * (std::nextafter(st.mos, 10.0) - st.mos));
  }
}

TEST(ComputeStats, VarianceIdentityAndRanges) {
  std::mt19937_64 rng(6);
  for (int i = 0; i < 2000; ++i) {
    const auto st = compute_stats(random_scores(rng));
    double sq = 0.0, total = 0.0;
    for (int k = 0; k < 5; ++k) {
      sq += st.histogram[static_cast<std::size_t>(k)] * (k + 1) * (k + 1);
      total += st.histogram[static_cast<std::size_t>(k)];
    }
    ASSERT_NEAR(st.sigma * st.sigma, sq - st.mos * st.mos, 1e-12);
    ASSERT_NEAR(total, 1.0, 1e-9);
    ASSERT_GE(st.sigma, 0.0);
    ASSERT_LE(st.sigma, 2.0);
  }
}

TEST(ComputeStats, PermutationInvariant) {
  std::mt19937_64 rng(8);
  for (int i = 0; i < 500; ++i) {
    auto s = random_scores(rng);
    const auto a = compute_stats(s);
    std::shuffle(s.begin(), s.end(), rng);
    const auto b = compute_stats(s);
    ASSERT_EQ(a.mos, b.mos);
    ASSERT_EQ(a.sigma, b.sigma);
    ASSERT_EQ(a.skewness, b.skewness);
    ASSERT_EQ(a.kurtosis, b.kurtosis);
    ASSERT_EQ(a.median, b.median);
  }
}

TEST(CorpusReport, ConstantCorpusMassAtThree) {
  std::vector<OpinionRecord> recs(10, OpinionRecord{"c", "m", {3, 3, 3}});
  const auto rep = corpus_report(recs);
  std::size_t total = 0;
  for (std::size_t i = 0; i < rep.mos.bins; ++i) {
    total += rep.mos.counts[i];
    if (rep.mos.counts[i]) {
      EXPECT_LE(rep.mos.bin_low(i), 3.0);
      EXPECT_GT(rep.mos.bin_high(i), 3.0);
      EXPECT_EQ(rep.mos.counts[i], 10u);
    }
  }
  EXPECT_EQ(total, 10u);
}

TEST(CorpusReport, CsvLayout) {
  std::vector<OpinionRecord> recs{{"a", "m", {1, 2}}, {"b", "m", {5, 5, 4}}};
  std::ostringstream os;
  corpus_report(recs).write_csv(os);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "statistic,bin_low,bin_high,count");
  std::size_t rows = 0, count_sum = 0;
  while (std::getline(is, line)) {
    ++rows;
    count_sum += std::stoul(line.substr(line.rfind(',') + 1));
  }
  EXPECT_EQ(count_sum, 2u * 6u);
  EXPECT_GT(rows, 6u);
}
