#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

// Article ingestion, sentence segmentation and entity location.
//
// All offsets are UTF-8 byte offsets into Article::text.
namespace mind::corpus {

struct Span {
  std::size_t start = 0;
  std::size_t end = 0;  // exclusive

  std::size_t size() const { return end - start; }
  friend bool operator==(const Span&, const Span&) = default;
};

struct Article {
  std::string id;
  std::string title;
  std::string text;
  std::vector<Span> sentence_spans;

  std::string_view sentence(std::size_t index) const {
    const Span& s = sentence_spans.at(index);
    return std::string_view(text).substr(s.start, s.size());
  }
};

struct EntityOccurrence {
  std::string article_id;
  std::string surface;
  Span char_span;
  std::size_t sentence_index = 0;
  bool sentence_initial = false;

  friend bool operator==(const EntityOccurrence&, const EntityOccurrence&) = default;
};

struct EntityAnnotation {
  std::string surface;
  std::size_t start = 0;
  std::size_t end = 0;
  std::string entity_type;
};

struct EntityAnnotationFile {
  std::string article_id;
  std::vector<EntityAnnotation> entities;
};

enum class CorpusFormat { kJsonl, kWikiText };

std::optional<CorpusFormat> parse_corpus_format(std::string_view name);

struct LoadResult {
  std::vector<Article> articles;
  std::size_t malformed = 0;  // records skipped with a warning
  std::size_t records = 0;    // total records seen, malformed included
  std::vector<std::string> warnings;
};

// Records above this malformed fraction fail the whole load.
inline constexpr double kMaxMalformedFraction = 0.5;

// JSONL: one {"id","title","text"} object per line; blank lines ignored.
// WikiText: articles introduced by "= Title =" lines; "= = Section = =" lines
// are dropped from the body.
LoadResult load_corpus(const std::filesystem::path& path, CorpusFormat format);
LoadResult parse_corpus(std::string_view contents, CorpusFormat format);

// Builds an Article with sentence spans; throws DataError on empty text.
Article make_article(std::string id, std::string title, std::string text);

// Versioned abbreviation list consulted by split_sentences.
std::span<const std::string> abbreviations();
int abbreviations_version();

// Boundary after '.', '!' or '?' (plus any closing quotes/brackets) followed
// by whitespace and an uppercase letter, unless the word ending in '.' is a
// listed abbreviation. Spans are trimmed of surrounding whitespace.
std::vector<Span> split_sentences(std::string_view text);

// Index of the sentence containing byte `pos`, if any.
std::optional<std::size_t> sentence_of(std::span<const Span> spans, std::size_t pos);

// One EntityAnnotationFile per JSONL line:
// {"article_id": ..., "entities": [{"surface","start","end","type"}, ...]}
std::map<std::string, EntityAnnotationFile> load_annotations(const std::filesystem::path& path);
std::map<std::string, EntityAnnotationFile> parse_annotations(std::string_view contents);

// With annotations: validated conversion (throws DataError on bad offsets or
// surface mismatch). Without: capitalized-span heuristic.
std::vector<EntityOccurrence> detect_entities(const Article& article,
                                              const EntityAnnotationFile* annotations);

bool is_eligible(const EntityOccurrence& entity);

// Seeded uniform choice among entities after the first sentence that are not
// sentence-initial.
std::optional<EntityOccurrence> select_truncation_entity(const Article& article,
                                                         std::span<const EntityOccurrence> entities,
                                                         std::uint64_t seed);

}  // namespace mind::corpus
