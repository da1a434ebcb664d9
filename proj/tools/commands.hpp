#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mind/baselines.hpp"
#include "mind/classifier.hpp"
#include "mind/corpus.hpp"
#include "mind/datagen.hpp"
#include "mind/eval.hpp"
#include "mind/scoring.hpp"

// Subcommand implementations behind the `mind` executable. Each writes a run
// manifest next to its outputs.
namespace mind::cli {

inline constexpr std::string_view kEngineVersion = "0.1.0";
inline constexpr const char* kDataDirEnv = "MIND_DATA_DIR";

enum ExitCode : int { kOk = 0, kUsage = 1, kDataFailure = 2, kNumericFailure = 3 };

// $MIND_DATA_DIR, or "." when unset.
std::filesystem::path default_data_dir();

struct DatagenOptions {
  std::filesystem::path corpus;
  corpus::CorpusFormat format = corpus::CorpusFormat::kJsonl;
  std::optional<std::filesystem::path> annotations;
  datagen::PromptMode mode = datagen::PromptMode::kBase;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
};

struct DatagenSummary {
  std::size_t articles = 0;
  std::size_t malformed = 0;
  std::size_t requests = 0;
  std::size_t skipped = 0;
};

// Writes <out>/requests.jsonl and <out>/manifest.datagen.json.
DatagenSummary cmd_datagen(const DatagenOptions& opts, std::ostream& log);

struct AssembleOptions {
  std::filesystem::path requests;
  std::filesystem::path transcripts;
  std::optional<std::filesystem::path> trace_dir;  // default: transcripts' directory
  trace::FeatureVariant variant = trace::kDefaultVariant;
  double train_fraction = 0.8;
  std::uint64_t seed = 0;
  std::filesystem::path out_dir;
};

// Writes dataset.mndd, train.mndd, dev.mndd, tuples.jsonl, labels.jsonl.
datagen::LabelingResult cmd_assemble(const AssembleOptions& opts, std::ostream& log);

struct TrainOptions {
  std::filesystem::path train;
  std::filesystem::path dev;
  classifier::MlpConfig mlp;  // input_dim taken from the dataset
  classifier::TrainConfig train_config;
  std::filesystem::path out_dir;
};

// Writes model.mndm and history.jsonl.
classifier::TrainResult cmd_train(const TrainOptions& opts, std::ostream& log);

enum class TraceMode { kStream, kFile };

struct ScoreOptions {
  std::filesystem::path model;
  // A trace file, "-" for stdin, or unset when scoring a transcript list.
  std::optional<std::filesystem::path> trace;
  std::optional<std::filesystem::path> transcripts;
  TraceMode mode = TraceMode::kStream;
  std::optional<trace::FeatureVariant> variant;  // default: the model's
  scoring::Granularity granularity = scoring::Granularity::kSentence;
  bool baselines = false;
  std::string stream_id = "stream";
  std::optional<std::filesystem::path> out;  // unset: write to `out` stream
  std::optional<std::filesystem::path> manifest;
};

// Returns the number of score events written.
std::size_t cmd_score(const ScoreOptions& opts, std::istream& in, std::ostream& out, std::ostream& log);

struct EvalOptions {
  std::filesystem::path scores;
  std::filesystem::path labels;
  eval::Level level = eval::Level::kSentence;
  eval::PassageScore passage_score = eval::PassageScore::kMax;
  std::string model_name = "model";
  std::optional<std::filesystem::path> out;  // report JSONL
};

struct MethodReport {
  std::string method;
  eval::EvalReport report;
};

std::vector<MethodReport> cmd_eval(const EvalOptions& opts, std::ostream& out);

struct SelftestOptions {
  bool quick = false;
};

// Returns true when every check passes.
bool cmd_selftest(const SelftestOptions& opts, std::ostream& out);

}  // namespace mind::cli
