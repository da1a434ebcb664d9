#include <gtest/gtest.h>

#include <cmath>

#include "mind/baselines.hpp"
#include "mind/error.hpp"
#include "synthetic.hpp"

namespace mind::baselines {
namespace {

trace::TokenRecord token(float logprob, float entropy) { return {1, "x", logprob, entropy, {0.0f}}; }

TEST(Entropy, Analytic) {
  EXPECT_NEAR(token_entropy(std::vector<double>(4, 0.25)), std::log(4.0), 1e-12);
  EXPECT_EQ(token_entropy(std::vector<double>{0, 1, 0}), 0.0);
  EXPECT_NEAR(token_entropy(std::vector<double>{0.5, 0.25, 0.25}), 1.0397207708399179, 1e-12);
  for (std::size_t k = 2; k <= 1024; ++k) {
    ASSERT_NEAR(token_entropy(std::vector<double>(k, 1.0 / double(k))), std::log(double(k)), 1e-9) << k;
  }
}

TEST(Entropy, BoundedByLogK) {
  Rng rng(1);
  for (int i = 0; i < 500; ++i) {
    const auto k = 1 + uniform_index(rng, 50);
    std::vector<double> p(k);
    double sum = 0;
    for (auto& v : p) sum += (v = uniform01(rng));
    for (auto& v : p) v /= sum;
    const double h = token_entropy(p);
    EXPECT_GE(h, 0.0);
    EXPECT_LE(h, std::log(double(k)) + 1e-12);
  }
}

TEST(Entropy, RejectsInvalidDistributions) {
  EXPECT_THROW(token_entropy(std::vector<double>{}), DataError);
  EXPECT_THROW(token_entropy(std::vector<double>{0.5, 0.6}), DataError);
  EXPECT_THROW(token_entropy(std::vector<double>{1.5, -0.5}), DataError);
  EXPECT_THROW(token_entropy(std::vector<double>{NAN, 1.0}), DataError);
  EXPECT_NO_THROW(token_entropy(std::vector<double>{0.5, 0.5 + 1e-7}));
}

TEST(Series, PredictiveProbability) {
  const std::vector<trace::TokenRecord> certain{token(0.0f, 0.0f), token(0.0f, 0.0f)};
  EXPECT_EQ(pp_series(certain).values, (std::vector<double>{0.0, 0.0}));
  const std::vector<trace::TokenRecord> one{token(-2.0f, 0.0f)};
  EXPECT_EQ(pp_series(one).values[0], 2.0);
  EXPECT_EQ(pp_series(one, ProbabilityOrientation::kLogProbability).values[0], -2.0);
}

TEST(Series, ValuesAreNonNegativeOnRandomTraces) {
  Rng rng(2);
  const auto h = testing::random_header(rng);
  const auto recs = testing::random_records(h, 500, rng);
  for (double v : pp_series(recs).values) EXPECT_GE(v, 0.0);
  for (double v : pe_series(recs).values) EXPECT_GE(v, 0.0);
}

TEST(Series, EntropyIsTakenFromTrace) {
  const std::vector<trace::TokenRecord> recs{token(-1.0f, std::log(4.0f)), token(-1.0f, 0.0f)};
  const auto s = pe_series(recs);
  EXPECT_FLOAT_EQ(float(s.values[0]), std::log(4.0f));
  EXPECT_EQ(s.values[1], 0.0);
}

TEST(Pooling, Examples) {
  EXPECT_EQ(pool({{0.1, 0.9, 0.4}, SeriesKind::kEntropy}, PoolingMode::kMax), 0.9);
  EXPECT_EQ(pool({{1, 2, 3}, SeriesKind::kEntropy}, PoolingMode::kMean), 2.0);
  Rng rng(3);
  for (int i = 0; i < 100; ++i) {
    const double x = normal(rng, 0, 10);
    EXPECT_EQ(pool({{x}, SeriesKind::kEntropy}, PoolingMode::kMin), x);
  }
  EXPECT_THROW(pool({{}, SeriesKind::kEntropy}, PoolingMode::kMax), DataError);
}

TEST(Pooling, MinMeanMaxOrdering) {
  Rng rng(4);
  for (int i = 0; i < 2000; ++i) {
    TokenScoreSeries s{{}, SeriesKind::kNegLogProb};
    const auto n = 1 + uniform_index(rng, 30);
    // Repeated values exercise the rounding edge of the mean.
    const double base = uniform(rng, 0, 1);
    for (std::size_t j = 0; j < n; ++j) s.values.push_back(rng() % 3 == 0 ? base : uniform(rng, 0, 20));
    const double lo = pool(s, PoolingMode::kMin), mid = pool(s, PoolingMode::kMean), hi = pool(s, PoolingMode::kMax);
    ASSERT_LE(lo, mid);
    ASSERT_LE(mid, hi);
  }
  TokenScoreSeries same{std::vector<double>(7, 0.1), SeriesKind::kEntropy};
  EXPECT_EQ(pool(same, PoolingMode::kMean), 0.1);
}

TEST(Labels, MethodNames) {
  EXPECT_EQ(method_label(SeriesKind::kNegLogProb, PoolingMode::kMax), "PP-max");
  EXPECT_EQ(method_label(SeriesKind::kNegLogProb, PoolingMode::kMin), "PP-min");
  EXPECT_EQ(method_label(SeriesKind::kNegLogProb, PoolingMode::kMean), "LNPP");
  EXPECT_EQ(method_label(SeriesKind::kEntropy, PoolingMode::kMax), "PE-max");
  EXPECT_EQ(method_label(SeriesKind::kEntropy, PoolingMode::kMin), "PE-min");
  EXPECT_EQ(method_label(SeriesKind::kEntropy, PoolingMode::kMean), "LNPE");
  for (auto m : {PoolingMode::kMax, PoolingMode::kMin, PoolingMode::kMean}) {
    EXPECT_EQ(parse_pooling(pooling_name(m)), m);
  }
}

}  // namespace
}  // namespace mind::baselines
