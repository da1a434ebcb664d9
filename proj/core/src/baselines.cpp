#include "mind/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mind/error.hpp"

namespace mind::baselines {

std::string_view pooling_name(PoolingMode m) {
  switch (m) {
    case PoolingMode::kMax: return "max";
    case PoolingMode::kMin: return "min";
    case PoolingMode::kMean: return "mean";
  }
  return "?";
}

std::optional<PoolingMode> parse_pooling(std::string_view name) {
  if (name == "max") return PoolingMode::kMax;
  if (name == "min") return PoolingMode::kMin;
  if (name == "mean") return PoolingMode::kMean;
  return std::nullopt;
}

double token_entropy(std::span<const double> dist) {
  if (dist.empty()) throw DataError("entropy: empty distribution");
  double total = 0.0;
  double h = 0.0;
  for (double p : dist) {
    if (!(p >= 0.0) || !std::isfinite(p)) throw DataError("entropy: negative or non-finite probability");
    total += p;
    if (p > 0.0) h -= p * std::log(p);
  }
  if (std::abs(total - 1.0) > kDistributionTolerance) {
    throw DataError("entropy: distribution sums to " + std::to_string(total));
  }
  return h;
}

TokenScoreSeries pp_series(std::span<const trace::TokenRecord> records, ProbabilityOrientation orientation) {
  TokenScoreSeries s{{}, SeriesKind::kNegLogProb};
  s.values.reserve(records.size());
  for (const auto& r : records) {
    const double lp = r.chosen_logprob;
    s.values.push_back(orientation == ProbabilityOrientation::kImprobability ? -lp : lp);
  }
  return s;
}

TokenScoreSeries pe_series(std::span<const trace::TokenRecord> records) {
  TokenScoreSeries s{{}, SeriesKind::kEntropy};
  s.values.reserve(records.size());
  for (const auto& r : records) s.values.push_back(r.entropy);
  return s;
}

double pool(const TokenScoreSeries& series, PoolingMode mode) {
  const auto& v = series.values;
  if (v.empty()) throw DataError("pool: empty series");
  switch (mode) {
    case PoolingMode::kMax: return *std::max_element(v.begin(), v.end());
    case PoolingMode::kMin: return *std::min_element(v.begin(), v.end());
    case PoolingMode::kMean: {
      const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      // Rounding in the sum can push the mean one ulp past the extremes.
      const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
      return std::clamp(mean, *lo, *hi);
    }
  }
  return 0.0;
}

std::string method_label(SeriesKind kind, PoolingMode mode) {
  const std::string base = kind == SeriesKind::kNegLogProb ? "PP" : "PE";
  if (mode == PoolingMode::kMean) return "LN" + base;
  return base + "-" + std::string(pooling_name(mode));
}

}  // namespace mind::baselines
