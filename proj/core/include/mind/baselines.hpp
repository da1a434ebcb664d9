#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mind/trace.hpp"

// Reference-free uncertainty baselines over per-token scores: predictive
// probability (PP) and predictive entropy (PE) with max/min/mean pooling.
// Natural logarithms throughout; larger scores are more suspicious.
namespace mind::baselines {

enum class SeriesKind { kNegLogProb, kEntropy };

struct TokenScoreSeries {
  std::vector<double> values;
  SeriesKind kind = SeriesKind::kNegLogProb;
};

enum class PoolingMode { kMax, kMin, kMean };

std::string_view pooling_name(PoolingMode m);
std::optional<PoolingMode> parse_pooling(std::string_view name);

// How the PP series is oriented. kImprobability (-log p) keeps every method
// "larger = more suspicious"; kLogProbability flips it for replication runs.
enum class ProbabilityOrientation { kImprobability, kLogProbability };
inline constexpr ProbabilityOrientation kDefaultOrientation = ProbabilityOrientation::kImprobability;

inline constexpr double kDistributionTolerance = 1e-6;

// Shannon entropy with 0 log 0 = 0. DataError unless entries are >= 0 and sum
// to 1 within kDistributionTolerance.
double token_entropy(std::span<const double> dist);

TokenScoreSeries pp_series(std::span<const trace::TokenRecord> records,
                           ProbabilityOrientation orientation = kDefaultOrientation);
TokenScoreSeries pe_series(std::span<const trace::TokenRecord> records);

double pool(const TokenScoreSeries& series, PoolingMode mode);

// Method label as used in score files: "PP-max", "LNPE", ...
std::string method_label(SeriesKind kind, PoolingMode mode);

}  // namespace mind::baselines
