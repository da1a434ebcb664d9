#include "mind/datagen.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <numeric>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "mind/binary_io.hpp"
#include "mind/error.hpp"
#include "mind/io.hpp"
#include "mind/random.hpp"
#include "text_util.hpp"

namespace mind::datagen {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr std::string_view kBasePreamble = "This is a Wikipedia passage about ";
constexpr std::string_view kChatPreamble =
    "The following sentence is the first sentence of a Wikipedia article titled ";
constexpr std::string_view kChatInstruction = "Please continue writing the sentence below. ";

bool is_ascii_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 0x80 && std::ispunct(u);
}

// Byte length of a punctuation code point ending at `end`, or 0.
std::size_t trailing_punct(std::string_view s) {
  if (s.empty()) return 0;
  if (is_ascii_punct(s.back())) return 1;
  std::size_t start = s.size() - 1;
  while (start > 0 && text::is_continuation_byte(s[start])) --start;
  std::size_t len = 0;
  const char32_t cp = text::decode(s, start, len);
  if (start + len != s.size()) return 0;
  const bool punct = (cp >= 0x2010 && cp <= 0x2027) || cp == U'«' || cp == U'»' || cp == U'¿' ||
                     cp == U'¡';
  return punct ? len : 0;
}

std::size_t leading_punct(std::string_view s) {
  if (s.empty()) return 0;
  if (is_ascii_punct(s.front())) return 1;
  std::size_t len = 0;
  const char32_t cp = text::decode(s, 0, len);
  const bool punct = (cp >= 0x2010 && cp <= 0x2027) || cp == U'«' || cp == U'»' || cp == U'¿' ||
                     cp == U'¡';
  return punct ? len : 0;
}

std::string ascii_casefold(std::string_view s) {
  std::string out(s);
  for (char& c : out) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }
  return out;
}

std::string json_string(const json& obj, const char* key, const std::string& where) {
  const auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) throw DataError(where + ": missing string field " + key);
  return it->get<std::string>();
}

}  // namespace

std::string_view mode_name(PromptMode m) { return m == PromptMode::kBase ? "base" : "chat"; }

std::optional<PromptMode> parse_mode(std::string_view name) {
  if (name == "base") return PromptMode::kBase;
  if (name == "chat") return PromptMode::kChat;
  return std::nullopt;
}

std::string_view outcome_name(LabelOutcome o) {
  switch (o) {
    case LabelOutcome::kNonHallucination: return "non_hallucination";
    case LabelOutcome::kHallucination: return "hallucination";
    case LabelOutcome::kDiscard: return "discard";
  }
  return "?";
}

std::string truncate_at_entity(const corpus::Article& article, const corpus::EntityOccurrence& entity) {
  const auto& sp = entity.char_span;
  if (entity.article_id != article.id || sp.start >= sp.end || sp.end > article.text.size()) {
    throw DataError("truncate: entity '" + entity.surface + "' is not within article '" + article.id + "'");
  }
  if (std::string_view(article.text).substr(sp.start, sp.size()) != entity.surface) {
    throw DataError("truncate: entity surface does not match article text");
  }
  if (sp.start == 0 || !corpus::is_eligible(entity)) {
    throw DataError("truncate: entity '" + entity.surface + "' is not eligible for truncation");
  }
  if (text::is_continuation_byte(article.text[sp.start])) {
    throw DataError("truncate: entity start splits a UTF-8 sequence");
  }
  return article.text.substr(0, sp.start);
}

std::string build_prompt(std::string_view title, std::string_view prefix, PromptMode mode) {
  if (text::trim(title).empty()) throw DataError("prompt: empty title");
  std::string out;
  if (mode == PromptMode::kBase) {
    out.append(kBasePreamble).append(title).append(". ");
  } else {
    out.append(kChatPreamble).append(title).append(". ").append(kChatInstruction);
  }
  out.append(prefix);
  return out;
}

std::string truncate_first_sentence(std::string_view continuation) {
  const auto spans = corpus::split_sentences(continuation);
  if (spans.empty()) throw DataError("continuation is empty or all whitespace");
  return std::string(continuation.substr(spans[0].start, spans[0].size()));
}

std::string normalize_entity(std::string_view surface) {
  auto s = text::trim(surface);
  for (bool changed = true; changed && !s.empty();) {
    changed = false;
    if (const auto n = leading_punct(s); n > 0) {
      s.remove_prefix(n);
      changed = true;
    }
    if (const auto n = trailing_punct(s); n > 0) {
      s.remove_suffix(n);
      changed = true;
    }
    s = text::trim(s);
  }
  return ascii_casefold(s);
}

std::string normalize_continuation(std::string_view continuation) {
  return ascii_casefold(text::trim_left(continuation));
}

LabelOutcome label_continuation(std::string_view continuation, std::string_view entity_surface) {
  const auto entity = normalize_entity(entity_surface);
  if (entity.empty()) throw DataError("label: empty entity surface");
  const auto cont = normalize_continuation(continuation);
  if (cont.starts_with(entity)) return LabelOutcome::kNonHallucination;
  if (cont.find(entity) == std::string::npos) return LabelOutcome::kHallucination;
  return LabelOutcome::kDiscard;
}

RequestBatch build_generation_requests(std::span<const corpus::Article> articles,
                                       const std::map<std::string, corpus::EntityAnnotationFile>* annotations,
                                       PromptMode mode, std::uint64_t seed) {
  RequestBatch batch;
  for (std::size_t i = 0; i < articles.size(); ++i) {
    const auto& article = articles[i];
    const corpus::EntityAnnotationFile* ann = nullptr;
    if (annotations != nullptr) {
      if (const auto it = annotations->find(article.id); it != annotations->end()) ann = &it->second;
    }
    const auto entities = corpus::detect_entities(article, ann);
    const auto article_seed = splitmix64(seed ^ fnv1a64(article.id));
    const auto entity = corpus::select_truncation_entity(article, entities, article_seed);
    if (!entity) {
      ++batch.skipped;
      continue;
    }
    GenerationRequest req;
    char id[32];
    std::snprintf(id, sizeof id, "req-%06zu", i);
    req.request_id = id;
    req.article_id = article.id;
    req.title = article.title;
    req.mode = mode;
    req.entity = *entity;
    req.prefix_text = truncate_at_entity(article, *entity);
    req.prompt_text = build_prompt(article.title, req.prefix_text, mode);
    batch.requests.push_back(std::move(req));
  }
  return batch;
}

std::string requests_to_jsonl(std::span<const GenerationRequest> requests) {
  std::string out;
  for (const auto& r : requests) {
    ordered_json j;
    j["request_id"] = r.request_id;
    j["prompt_text"] = r.prompt_text;
    j["mode"] = mode_name(r.mode);
    j["metadata"] = {
        {"article_id", r.article_id},
        {"title", r.title},
        {"prefix_text", r.prefix_text},
        {"entity",
         {{"surface", r.entity.surface},
          {"start", r.entity.char_span.start},
          {"end", r.entity.char_span.end},
          {"sentence_index", r.entity.sentence_index},
          {"sentence_initial", r.entity.sentence_initial}}},
    };
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::vector<GenerationRequest> requests_from_jsonl(std::string_view jsonl) {
  std::vector<GenerationRequest> out;
  const auto lines = io::split_lines(jsonl);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    if (text::trim(lines[ln]).empty()) continue;
    const auto where = "requests line " + std::to_string(ln + 1);
    const auto j = json::parse(lines[ln], nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw DataError(where + ": unparseable");
    try {
      GenerationRequest r;
      r.request_id = json_string(j, "request_id", where);
      r.prompt_text = json_string(j, "prompt_text", where);
      const auto mode = parse_mode(json_string(j, "mode", where));
      if (!mode) throw DataError(where + ": unknown mode");
      r.mode = *mode;
      const auto& meta = j.at("metadata");
      r.article_id = json_string(meta, "article_id", where);
      r.title = json_string(meta, "title", where);
      r.prefix_text = json_string(meta, "prefix_text", where);
      const auto& e = meta.at("entity");
      r.entity.article_id = r.article_id;
      r.entity.surface = json_string(e, "surface", where);
      r.entity.char_span = {e.at("start").get<std::size_t>(), e.at("end").get<std::size_t>()};
      r.entity.sentence_index = e.at("sentence_index").get<std::size_t>();
      r.entity.sentence_initial = e.at("sentence_initial").get<bool>();
      out.push_back(std::move(r));
    } catch (const json::exception& ex) {
      throw DataError(where + ": " + ex.what());
    }
  }
  return out;
}

std::vector<Transcript> transcripts_from_jsonl(std::string_view jsonl) {
  std::vector<Transcript> out;
  const auto lines = io::split_lines(jsonl);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    if (text::trim(lines[ln]).empty()) continue;
    const auto where = "transcripts line " + std::to_string(ln + 1);
    const auto j = json::parse(lines[ln], nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw DataError(where + ": unparseable");
    Transcript t;
    t.request_id = json_string(j, "request_id", where);
    t.status = j.value("status", std::string("ok"));
    if (t.status == "ok") {
      t.continuation_text = json_string(j, "continuation_text", where);
      t.trace_ref = json_string(j, "trace_ref", where);
    }
    out.push_back(std::move(t));
  }
  return out;
}

std::string transcripts_to_jsonl(std::span<const Transcript> transcripts) {
  std::string out;
  for (const auto& t : transcripts) {
    ordered_json j;
    j["request_id"] = t.request_id;
    j["continuation_text"] = t.continuation_text;
    j["trace_ref"] = t.trace_ref;
    j["status"] = t.status;
    out += j.dump();
    out += '\n';
  }
  return out;
}

TraceLoader file_trace_loader(std::filesystem::path base_dir) {
  return [base = std::move(base_dir)](const std::string& ref) {
    std::filesystem::path p(ref);
    if (p.is_relative()) p = base / p;
    return trace::read_trace(p);
  };
}

std::size_t first_sentence_token_count(std::span<const trace::TokenRecord> records) {
  std::string text;
  for (const auto& r : records) text += r.token_text;
  const auto spans = corpus::split_sentences(text);
  if (spans.empty()) return 0;
  std::size_t covered = 0;
  for (std::size_t i = 0; i < records.size(); ++i) {
    covered += records[i].token_text.size();
    if (covered >= spans[0].end) return i + 1;
  }
  return records.size();
}

LabelingResult label_transcripts(std::span<const GenerationRequest> requests,
                                 std::span<const Transcript> transcripts, const TraceLoader& load) {
  std::unordered_map<std::string_view, const GenerationRequest*> by_id;
  for (const auto& r : requests) by_id.emplace(r.request_id, &r);

  LabelingResult result;
  for (const auto& t : transcripts) {
    if (t.status != "ok") {
      ++result.failed;
      continue;
    }
    const auto it = by_id.find(t.request_id);
    if (it == by_id.end()) throw DataError("transcript for unknown request " + t.request_id);
    const auto& req = *it->second;

    const auto first = truncate_first_sentence(t.continuation_text);
    const auto outcome = label_continuation(first, req.entity);
    if (outcome == LabelOutcome::kDiscard) {
      ++result.discarded;
      continue;
    }

    trace::Trace tr;
    try {
      tr = load(t.trace_ref);
    } catch (const std::exception& e) {
      throw DataError("request " + t.request_id + ": cannot load trace '" + t.trace_ref + "': " + e.what());
    }
    if (tr.text() != t.continuation_text) {
      throw DataError("request " + t.request_id + ": trace tokens do not reproduce the continuation");
    }

    DataTuple tuple;
    tuple.llm_id = tr.header.model_id;
    tuple.article_id = req.article_id;
    tuple.request_id = req.request_id;
    tuple.continuation = first;
    tuple.trace_ref = t.trace_ref;
    tuple.label = outcome == LabelOutcome::kHallucination ? 1 : 0;
    tuple.sentence_tokens = first_sentence_token_count(tr.records);
    (tuple.label ? result.hallucination : result.non_hallucination)++;
    result.tuples.push_back(std::move(tuple));
  }
  return result;
}

std::pair<std::size_t, std::size_t> LabeledDataset::class_counts() const {
  const auto pos = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), std::uint8_t{1}));
  return {labels.size() - pos, pos};
}

void LabeledDataset::append(std::span<const float> values, std::uint8_t label) {
  if (labels.empty() && dim == 0) dim = values.size();
  if (values.size() != dim) {
    throw DataError("dataset: row dimension " + std::to_string(values.size()) + " != " + std::to_string(dim));
  }
  if (label > 1) throw DataError("dataset: label must be 0 or 1");
  features.insert(features.end(), values.begin(), values.end());
  labels.push_back(label);
}

std::string encode_dataset(const LabeledDataset& ds) {
  ordered_json meta;
  meta["rows"] = ds.size();
  meta["dim"] = ds.dim;
  meta["variant"] = trace::variant_name(ds.variant);
  const auto json_text = meta.dump();
  binary::ByteWriter w;
  w.bytes(std::string_view(kDatasetMagic, 4));
  w.u16(kDatasetVersion);
  w.u32(static_cast<std::uint32_t>(json_text.size()));
  w.bytes(json_text);
  w.f32s(ds.features);
  for (auto l : ds.labels) w.u8(l);
  return w.take();
}

LabeledDataset decode_dataset(std::string_view bytes) {
  binary::ByteReader r(bytes, "dataset");
  if (r.remaining() < 4 || r.bytes(4) != std::string_view(kDatasetMagic, 4)) {
    throw DataError("dataset: bad magic");
  }
  if (const auto v = r.u16(); v != kDatasetVersion) {
    throw DataError("dataset: version mismatch (" + std::to_string(v) + ")");
  }
  const auto meta = json::parse(r.bytes(r.u32()), nullptr, false);
  if (meta.is_discarded() || !meta.is_object()) throw DataError("dataset: invalid header");
  LabeledDataset ds;
  std::size_t rows = 0;
  try {
    rows = meta.at("rows").get<std::size_t>();
    ds.dim = meta.at("dim").get<std::size_t>();
    const auto variant = trace::parse_variant(meta.at("variant").get<std::string>());
    if (!variant) throw DataError("dataset: unknown feature variant");
    ds.variant = *variant;
  } catch (const json::exception& e) {
    throw DataError(std::string("dataset: ") + e.what());
  }
  if (rows * ds.dim * 4 + rows != r.remaining()) throw DataError("dataset: payload size mismatch");
  ds.features.resize(rows * ds.dim);
  r.f32s(ds.features);
  ds.labels.resize(rows);
  for (auto& l : ds.labels) {
    l = r.u8();
    if (l > 1) throw DataError("dataset: label out of range");
  }
  return ds;
}

void save_dataset(const std::filesystem::path& path, const LabeledDataset& ds) {
  io::write_file(path, encode_dataset(ds));
}

LabeledDataset load_dataset(const std::filesystem::path& path) {
  return decode_dataset(io::read_file(path));
}

std::pair<LabeledDataset, LabeledDataset> split_dataset(const LabeledDataset& ds, double train_fraction,
                                                        std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw DataError("split: train fraction must be in (0, 1)");
  }
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(splitmix64(seed));
  shuffle(std::span(order), rng);
  const auto n_train = static_cast<std::size_t>(train_fraction * static_cast<double>(ds.size()) + 0.5);
  LabeledDataset train{ds.dim, {}, {}, ds.variant};
  LabeledDataset dev{ds.dim, {}, {}, ds.variant};
  for (std::size_t i = 0; i < order.size(); ++i) {
    (i < n_train ? train : dev).append(ds.row(order[i]), ds.labels[order[i]]);
  }
  return {std::move(train), std::move(dev)};
}

LabeledDataset assemble_dataset(std::span<const DataTuple> tuples, trace::FeatureVariant variant,
                                const TraceLoader& load) {
  LabeledDataset ds;
  ds.variant = variant;
  for (const auto& t : tuples) {
    trace::Trace tr;
    try {
      tr = load(t.trace_ref);
    } catch (const std::exception& e) {
      throw DataError("tuple " + t.request_id + " (article " + t.article_id + "): cannot load trace '" +
                      t.trace_ref + "': " + e.what());
    }
    const std::size_t n = t.sentence_tokens > 0 ? std::min(t.sentence_tokens, tr.records.size())
                                                : tr.records.size();
    const auto fv = trace::extract_features(tr.header, std::span(tr.records).first(n), variant);
    if (!ds.labels.empty() && fv.values.size() != ds.dim) {
      throw DataError("tuple " + t.request_id + ": feature dimension " + std::to_string(fv.values.size()) +
                      " != " + std::to_string(ds.dim));
    }
    ds.append(fv.values, t.label);
  }
  return ds;
}

}  // namespace mind::datagen
