#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

// Sentence- and passage-level evaluation of hallucination scores.
namespace mind::eval {

struct ScoredUnit {
  std::string unit_id;
  std::string passage_id;
  std::size_t sentence_index = 0;
  double score = 0.0;
  std::uint8_t label = 0;
};

enum class Level { kSentence, kPassage };
enum class PassageScore { kMax, kMean };

std::string_view level_name(Level l);
std::optional<Level> parse_level(std::string_view name);

struct EvalReport {
  Level level = Level::kSentence;
  double auc = 0.0;
  double corr = 0.0;
  std::size_t n_units = 0;
  std::size_t n_positive = 0;
  std::size_t n_negative = 0;
};

// P(score of a random positive > score of a random negative), ties counting
// one half. O(n log n) via average ranks. DataError on length mismatch or a
// single-class label vector.
double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> labels);

// Product-moment correlation. DataError when either side has zero variance.
double pearson(std::span<const double> scores, std::span<const double> labels);
double pearson(std::span<const double> scores, std::span<const std::uint8_t> labels);

// One unit per passage, in order of first appearance: label = OR of sentence
// labels, score = max (or mean) of sentence scores.
std::vector<ScoredUnit> passage_aggregate(std::span<const ScoredUnit> units,
                                          PassageScore mode = PassageScore::kMax);

EvalReport evaluate(std::span<const ScoredUnit> units, Level level,
                    PassageScore mode = PassageScore::kMax);

std::string report_to_json(const EvalReport& report, std::string_view method = {});

struct TableRow {
  std::string method;
  std::string model;
  double auc = 0.0;
  double corr = 0.0;
};

// Methods down, models across, an AUC and a Corr column per model.
std::string render_table(std::span<const TableRow> rows);

}  // namespace mind::eval
