#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mind/corpus.hpp"
#include "mind/trace.hpp"

// Pseudo-labeled training data: truncate each article at an entity, hand the
// prefix to a generator (via request/transcript files), label the returned
// continuation by whether it reproduces the entity, and reduce the captured
// traces to feature rows.
namespace mind::datagen {

enum class PromptMode { kBase, kChat };

std::string_view mode_name(PromptMode m);
std::optional<PromptMode> parse_mode(std::string_view name);

struct GenerationRequest {
  std::string request_id;
  std::string article_id;
  std::string title;
  PromptMode mode = PromptMode::kBase;
  std::string prompt_text;
  corpus::EntityOccurrence entity;
  std::string prefix_text;

  friend bool operator==(const GenerationRequest&, const GenerationRequest&) = default;
};

enum class LabelOutcome { kNonHallucination, kHallucination, kDiscard };

std::string_view outcome_name(LabelOutcome o);

struct DataTuple {
  std::string llm_id;
  std::string article_id;
  std::string request_id;
  std::string continuation;  // first sentence only
  std::string trace_ref;
  std::uint8_t label = 0;    // 1 = hallucination
  std::size_t sentence_tokens = 0;  // leading trace records that cover `continuation`
};

// text[0, entity.start); throws DataError for an entity outside the article,
// an ineligible entity, or a split UTF-8 sequence.
std::string truncate_at_entity(const corpus::Article& article, const corpus::EntityOccurrence& entity);

std::string build_prompt(std::string_view title, std::string_view prefix, PromptMode mode);

// First sentence of a generated continuation; DataError if all whitespace.
std::string truncate_first_sentence(std::string_view continuation);

// Trim whitespace, strip surrounding punctuation, ASCII casefold.
std::string normalize_entity(std::string_view surface);
// Trim leading whitespace, ASCII casefold.
std::string normalize_continuation(std::string_view continuation);

LabelOutcome label_continuation(std::string_view continuation, std::string_view entity_surface);
inline LabelOutcome label_continuation(std::string_view continuation,
                                       const corpus::EntityOccurrence& entity) {
  return label_continuation(continuation, entity.surface);
}

struct RequestBatch {
  std::vector<GenerationRequest> requests;
  std::size_t skipped = 0;  // articles without an eligible entity
};

// `annotations` may be null (heuristic entities) or keyed by article id;
// articles missing from a non-null map also fall back to the heuristic.
RequestBatch build_generation_requests(std::span<const corpus::Article> articles,
                                       const std::map<std::string, corpus::EntityAnnotationFile>* annotations,
                                       PromptMode mode, std::uint64_t seed);

std::string requests_to_jsonl(std::span<const GenerationRequest> requests);
std::vector<GenerationRequest> requests_from_jsonl(std::string_view jsonl);

struct Transcript {
  std::string request_id;
  std::string continuation_text;
  std::string trace_ref;
  std::string status = "ok";
};

std::vector<Transcript> transcripts_from_jsonl(std::string_view jsonl);
std::string transcripts_to_jsonl(std::span<const Transcript> transcripts);

using TraceLoader = std::function<trace::Trace(const std::string& trace_ref)>;

// Resolves relative trace_refs against `base_dir`.
TraceLoader file_trace_loader(std::filesystem::path base_dir);

struct LabelingResult {
  std::vector<DataTuple> tuples;  // Discard outcomes removed
  std::size_t non_hallucination = 0;
  std::size_t hallucination = 0;
  std::size_t discarded = 0;
  std::size_t failed = 0;  // transcripts with status != "ok"
};

// Joins transcripts to their requests (transcript order), labels them, and
// checks that each trace's token texts concatenate to the continuation.
LabelingResult label_transcripts(std::span<const GenerationRequest> requests,
                                 std::span<const Transcript> transcripts, const TraceLoader& load);

// Number of leading records whose concatenated text reaches the end of the
// first sentence of that text.
std::size_t first_sentence_token_count(std::span<const trace::TokenRecord> records);

// Row-major feature matrix plus labels.
struct LabeledDataset {
  std::size_t dim = 0;
  std::vector<float> features;
  std::vector<std::uint8_t> labels;
  trace::FeatureVariant variant = trace::kDefaultVariant;

  std::size_t size() const { return labels.size(); }
  std::span<const float> row(std::size_t i) const {
    return std::span<const float>(features).subspan(i * dim, dim);
  }
  // (negatives, positives)
  std::pair<std::size_t, std::size_t> class_counts() const;
  void append(std::span<const float> values, std::uint8_t label);

  friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

inline constexpr char kDatasetMagic[4] = {'M', 'N', 'D', 'D'};
inline constexpr std::uint16_t kDatasetVersion = 1;

inline constexpr std::size_t kDefaultDatasetSize = 5120;
inline constexpr std::size_t kDefaultTrainSize = 4096;

std::string encode_dataset(const LabeledDataset& ds);
LabeledDataset decode_dataset(std::string_view bytes);
void save_dataset(const std::filesystem::path& path, const LabeledDataset& ds);
LabeledDataset load_dataset(const std::filesystem::path& path);

// Seeded shuffle, then the first `train_fraction` of rows go to train.
std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& ds,
                                                        double train_fraction, std::uint64_t seed);

// Feature rows in tuple order. DataError names the offending tuple when its
// trace cannot be loaded or its dimension differs from the first.
LabeledDataset assemble_dataset(std::span<const DataTuple> tuples, trace::FeatureVariant variant,
                                const TraceLoader& load);

}  // namespace mind::datagen
