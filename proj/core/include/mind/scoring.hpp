#pragma once

#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mind/baselines.hpp"
#include "mind/classifier.hpp"
#include "mind/trace.hpp"

// Real-time scoring of a generation as its trace arrives. A score is emitted
// each time the sentence splitter closes a sentence and once more at end of
// stream.
//
// Token ownership: a token belongs to the sentence containing its first
// non-whitespace byte; all-whitespace tokens stay with the current sentence.
namespace mind::scoring {

enum class Granularity {
  kSentence,  // features and baselines over the tokens of each sentence
  kResponse,  // running features over the whole response so far
};

std::string_view granularity_name(Granularity g);
std::optional<Granularity> parse_granularity(std::string_view name);

struct BaselineScore {
  std::string method;   // "PP-max", "LNPE", ...
  std::string pooling;  // "max" / "min" / "mean"
  double score = 0.0;
};

struct ScoreEvent {
  std::string unit_id;
  std::size_t sentence_index = 0;
  std::size_t token_begin = 0;
  std::size_t token_end = 0;  // exclusive
  bool partial = false;       // running response score before end of stream
  double score = 0.0;         // classifier hallucination probability
  std::vector<BaselineScore> baselines;
};

struct ScorerOptions {
  trace::FeatureVariant variant = trace::kDefaultVariant;
  Granularity granularity = Granularity::kSentence;
  bool baselines = false;
  std::string stream_id = "stream";
};

// "<stream_id>#<sentence>" for sentences, "<stream_id>" for responses.
std::string unit_id(const ScorerOptions& opts, std::size_t sentence_index);

// Sentence index owning each token (batch form of the ownership rule).
std::vector<std::size_t> assign_tokens_to_sentences(std::span<const trace::TokenRecord> records);

class StreamingScorer {
 public:
  using Sink = std::function<void(const ScoreEvent&)>;

  // `model` must outlive the scorer.
  StreamingScorer(const classifier::MlpModel& model, const trace::TraceHeader& header, ScorerOptions opts);

  void push(const trace::TokenRecord& record, const Sink& sink);
  // DataError if no token was pushed.
  void finish(const Sink& sink);

  std::size_t tokens_seen() const { return tokens_; }

 private:
  struct Running {
    double max = 0.0, min = 0.0, sum = 0.0;
    std::size_t n = 0;
    void add(double v);
    double pooled(baselines::PoolingMode mode) const;
  };

  void add_token(const trace::TokenRecord& record);
  void emit(std::size_t sentence_index, bool partial, const Sink& sink);
  void reset_unit();

  const classifier::MlpModel& model_;
  ScorerOptions opts_;
  trace::FeatureAccumulator acc_;
  Running pp_, pe_;
  std::string text_;
  std::size_t region_start_ = 0;  // byte offset of the open sentence
  std::size_t current_ = 0;       // index of the open sentence
  std::size_t tokens_ = 0;
  std::size_t unit_begin_ = 0;
  std::size_t sentence_tokens_ = 0;
  std::size_t last_sentence_ = 0;  // owner of the most recent token
};

// File-mode path: segments the whole trace first, then scores each unit with
// batch feature extraction. Produces the same events as StreamingScorer.
std::vector<ScoreEvent> score_trace(const classifier::MlpModel& model, const trace::Trace& trace,
                                    const ScorerOptions& opts);

// One JSONL line per method: {"unit_id","method","pooling","score"}; partial
// events add "partial": true.
std::string event_to_jsonl(const ScoreEvent& event);

}  // namespace mind::scoring
