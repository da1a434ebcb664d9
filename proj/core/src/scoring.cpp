#include "mind/scoring.hpp"

#include <algorithm>

#include <nlohmann/json.hpp>

#include "mind/corpus.hpp"
#include "mind/error.hpp"
#include "text_util.hpp"

namespace mind::scoring {
namespace {

constexpr baselines::PoolingMode kPoolings[] = {baselines::PoolingMode::kMax, baselines::PoolingMode::kMin,
                                                baselines::PoolingMode::kMean};

std::optional<std::size_t> first_non_space(std::string_view s) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (!text::is_space(s[i])) return i;
  }
  return std::nullopt;
}

std::vector<BaselineScore> batch_baselines(std::span<const trace::TokenRecord> records) {
  std::vector<BaselineScore> out;
  for (const auto& series : {baselines::pp_series(records), baselines::pe_series(records)}) {
    for (auto mode : kPoolings) {
      out.push_back({baselines::method_label(series.kind, mode), std::string(baselines::pooling_name(mode)),
                     baselines::pool(series, mode)});
    }
  }
  return out;
}

}  // namespace

std::string_view granularity_name(Granularity g) { return g == Granularity::kSentence ? "sentence" : "response"; }

std::optional<Granularity> parse_granularity(std::string_view name) {
  if (name == "sentence") return Granularity::kSentence;
  if (name == "response") return Granularity::kResponse;
  return std::nullopt;
}

std::string unit_id(const ScorerOptions& opts, std::size_t sentence_index) {
  if (opts.granularity == Granularity::kResponse) return opts.stream_id;
  return opts.stream_id + "#" + std::to_string(sentence_index);
}

std::vector<std::size_t> assign_tokens_to_sentences(std::span<const trace::TokenRecord> records) {
  std::string text;
  std::vector<std::optional<std::size_t>> anchors;
  for (const auto& r : records) {
    const auto fnw = first_non_space(r.token_text);
    anchors.push_back(fnw ? std::optional(text.size() + *fnw) : std::nullopt);
    text += r.token_text;
  }
  const auto spans = corpus::split_sentences(text);
  std::vector<std::size_t> owner;
  std::size_t current = 0;
  for (const auto& a : anchors) {
    if (a) current = corpus::sentence_of(spans, *a).value_or(current);
    owner.push_back(current);
  }
  return owner;
}

// --- streaming -------------------------------------------------------------

void StreamingScorer::Running::add(double v) {
  if (n == 0) {
    max = min = v;
  } else {
    max = std::max(max, v);
    min = std::min(min, v);
  }
  sum += v;
  ++n;
}

double StreamingScorer::Running::pooled(baselines::PoolingMode mode) const {
  switch (mode) {
    case baselines::PoolingMode::kMax: return max;
    case baselines::PoolingMode::kMin: return min;
    case baselines::PoolingMode::kMean: return std::clamp(sum / static_cast<double>(n), min, max);
  }
  return 0.0;
}

StreamingScorer::StreamingScorer(const classifier::MlpModel& model, const trace::TraceHeader& header,
                                 ScorerOptions opts)
    : model_(model), opts_(std::move(opts)), acc_(header, opts_.variant) {
  if (header.hidden_dim != model.net.input_dim()) {
    throw DataError("scorer: trace hidden_dim " + std::to_string(header.hidden_dim) + " != model input " +
                    std::to_string(model.net.input_dim()));
  }
}

void StreamingScorer::reset_unit() {
  acc_.reset();
  pp_ = {};
  pe_ = {};
  unit_begin_ = tokens_;
}

void StreamingScorer::add_token(const trace::TokenRecord& record) {
  acc_.push(record);
  if (opts_.baselines) {
    pp_.add(-static_cast<double>(record.chosen_logprob));
    pe_.add(static_cast<double>(record.entropy));
  }
  ++tokens_;
  ++sentence_tokens_;
  last_sentence_ = current_;
}

void StreamingScorer::emit(std::size_t sentence_index, bool partial, const Sink& sink) {
  ScoreEvent ev;
  ev.unit_id = unit_id(opts_, sentence_index);
  ev.sentence_index = sentence_index;
  ev.token_begin = unit_begin_;
  ev.token_end = tokens_;
  ev.partial = partial;
  const auto fv = acc_.snapshot();
  ev.score = classifier::predict(model_, fv.values);
  if (opts_.baselines) {
    for (const auto* run : {&pp_, &pe_}) {
      const auto kind = run == &pp_ ? baselines::SeriesKind::kNegLogProb : baselines::SeriesKind::kEntropy;
      for (auto mode : kPoolings) {
        ev.baselines.push_back({baselines::method_label(kind, mode), std::string(baselines::pooling_name(mode)),
                                run->pooled(mode)});
      }
    }
  }
  sink(ev);
}

void StreamingScorer::push(const trace::TokenRecord& record, const Sink& sink) {
  const std::size_t token_start = text_.size();
  text_ += record.token_text;
  const auto fnw = first_non_space(record.token_text);

  const std::string_view region = std::string_view(text_).substr(region_start_);
  const auto spans = corpus::split_sentences(region);
  if (spans.empty()) {
    add_token(record);
    return;
  }
  std::size_t target = current_;
  if (fnw) {
    const auto local = corpus::sentence_of(spans, token_start + *fnw - region_start_);
    if (local) target = current_ + *local;
  }

  const std::size_t completed = spans.size() - 1;
  bool placed = false;
  for (std::size_t step = 0; step <= completed; ++step) {
    if (!placed && target == current_) {
      add_token(record);
      placed = true;
    }
    if (step == completed) break;
    if (sentence_tokens_ > 0) {
      emit(current_, opts_.granularity == Granularity::kResponse, sink);
      if (opts_.granularity == Granularity::kSentence) reset_unit();
    }
    ++current_;
    sentence_tokens_ = 0;
  }
  if (!placed) add_token(record);
  region_start_ += spans.back().start;
}

void StreamingScorer::finish(const Sink& sink) {
  if (tokens_ == 0) throw DataError("scorer: empty trace");
  if (opts_.granularity == Granularity::kResponse) {
    emit(last_sentence_, false, sink);
  } else if (sentence_tokens_ > 0) {
    emit(current_, false, sink);
  }
}

// --- batch -----------------------------------------------------------------

std::vector<ScoreEvent> score_trace(const classifier::MlpModel& model, const trace::Trace& tr,
                                    const ScorerOptions& opts) {
  if (tr.records.empty()) throw DataError("scorer: empty trace");
  if (tr.header.hidden_dim != model.net.input_dim()) {
    throw DataError("scorer: trace hidden_dim " + std::to_string(tr.header.hidden_dim) + " != model input " +
                    std::to_string(model.net.input_dim()));
  }
  const auto owner = assign_tokens_to_sentences(tr.records);
  const std::span<const trace::TokenRecord> all(tr.records);

  std::vector<ScoreEvent> events;
  const auto make = [&](std::size_t sentence, std::size_t begin, std::size_t end, bool partial) {
    ScoreEvent ev;
    ev.unit_id = unit_id(opts, sentence);
    ev.sentence_index = sentence;
    ev.token_begin = begin;
    ev.token_end = end;
    ev.partial = partial;
    const auto slice = all.subspan(begin, end - begin);
    ev.score = classifier::predict(model, trace::extract_features(tr.header, slice, opts.variant).values);
    if (opts.baselines) ev.baselines = batch_baselines(slice);
    events.push_back(std::move(ev));
  };

  // Contiguous runs of tokens per owning sentence.
  std::size_t begin = 0;
  for (std::size_t i = 1; i <= owner.size(); ++i) {
    if (i < owner.size() && owner[i] == owner[begin]) continue;
    const bool last_run = i == owner.size();
    if (opts.granularity == Granularity::kSentence) {
      make(owner[begin], begin, i, false);
    } else if (!last_run) {
      make(owner[begin], 0, i, true);
    }
    begin = i;
  }
  if (opts.granularity == Granularity::kResponse) make(owner.back(), 0, owner.size(), false);
  return events;
}

std::string event_to_jsonl(const ScoreEvent& event) {
  std::string out;
  const auto line = [&](std::string_view method, const nlohmann::json& pooling, double score) {
    nlohmann::ordered_json j;
    j["unit_id"] = event.unit_id;
    j["method"] = method;
    j["pooling"] = pooling;
    j["score"] = score;
    if (event.partial) j["partial"] = true;
    out += j.dump();
    out += '\n';
  };
  line("MIND", nullptr, event.score);
  for (const auto& b : event.baselines) line(b.method, b.pooling, b.score);
  return out;
}

}  // namespace mind::scoring
