#include "mind/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mind/error.hpp"
#include "mind/io.hpp"
#include "mind/random.hpp"
#include "text_util.hpp"

namespace mind::corpus {
namespace {

#include "abbreviations_data.inc"

struct AbbreviationTable {
  int version = 0;
  std::vector<std::string> words;
};

const AbbreviationTable& abbreviation_table() {
  static const AbbreviationTable table = [] {
    AbbreviationTable t;
    for (std::string_view line : io::split_lines(std::string_view(kAbbreviationData))) {
      line = text::trim(line);
      if (line.empty() || line.front() == '#') continue;
      if (line.starts_with("version ")) {
        const auto num = line.substr(8);
        std::from_chars(num.data(), num.data() + num.size(), t.version);
        continue;
      }
      t.words.emplace_back(line);
    }
    std::sort(t.words.begin(), t.words.end());
    return t;
  }();
  return table;
}

bool is_abbreviation(std::string_view word) {
  const auto& words = abbreviation_table().words;
  return std::binary_search(words.begin(), words.end(), word,
                            [](std::string_view a, std::string_view b) { return a < b; });
}

bool is_terminator(char c) { return c == '.' || c == '!' || c == '?'; }

// Closing quote/bracket at `pos`; returns its byte length or 0.
std::size_t closing_at(std::string_view s, std::size_t pos) {
  const char c = s[pos];
  if (c == '"' || c == '\'' || c == ')' || c == ']') return 1;
  std::size_t len = 0;
  const char32_t cp = text::decode(s, pos, len);
  if (cp == U'”' || cp == U'’' || cp == U'»') return len;
  return 0;
}

std::size_t opening_at(std::string_view s, std::size_t pos) {
  const char c = s[pos];
  if (c == '"' || c == '\'' || c == '(' || c == '[') return 1;
  std::size_t len = 0;
  const char32_t cp = text::decode(s, pos, len);
  if (cp == U'“' || cp == U'‘' || cp == U'«') return len;
  return 0;
}

bool is_ascii_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return u < 0x80 && std::ispunct(u);
}

std::size_t codepoint_count(std::string_view s) {
  return static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [](char c) { return !text::is_continuation_byte(c); }));
}

std::string_view string_field(const nlohmann::json& obj, const char* key) {
  const auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) return {};
  return it->get_ref<const std::string&>();
}

void finish_wikitext_article(LoadResult& result, std::string& title, std::string& body,
                             bool& open) {
  if (!open) return;
  open = false;
  ++result.records;
  if (text::trim(body).empty() || title.empty()) {
    ++result.malformed;
    result.warnings.push_back("article '" + title + "': empty body");
  } else {
    result.articles.push_back(make_article(title, title, std::string(text::trim(body))));
  }
  title.clear();
  body.clear();
}

}  // namespace

std::optional<CorpusFormat> parse_corpus_format(std::string_view name) {
  if (name == "jsonl") return CorpusFormat::kJsonl;
  if (name == "wikitext") return CorpusFormat::kWikiText;
  return std::nullopt;
}

std::span<const std::string> abbreviations() { return abbreviation_table().words; }

int abbreviations_version() { return abbreviation_table().version; }

std::vector<Span> split_sentences(std::string_view s) {
  std::vector<Span> spans;
  const std::size_t n = s.size();
  std::size_t start = 0;
  while (start < n && text::is_space(s[start])) ++start;
  if (start == n) return spans;

  std::size_t i = start;
  while (i < n) {
    if (!is_terminator(s[i])) {
      ++i;
      continue;
    }
    std::size_t j = i;
    bool only_periods = true;
    while (j < n && is_terminator(s[j])) {
      only_periods = only_periods && s[j] == '.';
      ++j;
    }
    const std::size_t run_end = j;
    while (j < n) {
      const std::size_t len = closing_at(s, j);
      if (len == 0) break;
      j += len;
    }
    const std::size_t sentence_end = j;
    if (j < n && text::is_space(s[j])) {
      std::size_t k = j;
      while (k < n && text::is_space(s[k])) ++k;
      if (k < n && text::upper_at(s, k)) {
        bool abbreviated = false;
        if (only_periods) {
          std::size_t w = run_end;
          while (w > start && !text::is_space(s[w - 1])) --w;
          while (w < run_end) {
            const std::size_t len = opening_at(s, w);
            if (len == 0) break;
            w += len;
          }
          abbreviated = is_abbreviation(s.substr(w, run_end - w));
        }
        if (!abbreviated) {
          spans.push_back({start, sentence_end});
          start = k;
          i = k;
          continue;
        }
      }
    }
    i = std::max(sentence_end, i + 1);
  }
  std::size_t end = n;
  while (end > start && text::is_space(s[end - 1])) --end;
  spans.push_back({start, end});
  return spans;
}

std::optional<std::size_t> sentence_of(std::span<const Span> spans, std::size_t pos) {
  auto it = std::upper_bound(spans.begin(), spans.end(), pos,
                             [](std::size_t p, const Span& sp) { return p < sp.start; });
  if (it == spans.begin()) return std::nullopt;
  --it;
  if (pos >= it->end) return std::nullopt;
  return static_cast<std::size_t>(it - spans.begin());
}

Article make_article(std::string id, std::string title, std::string text) {
  if (text::trim(text).empty()) throw DataError("article '" + id + "': empty text");
  Article a{std::move(id), std::move(title), std::move(text), {}};
  a.sentence_spans = split_sentences(a.text);
  return a;
}

LoadResult parse_corpus(std::string_view contents, CorpusFormat format) {
  LoadResult result;
  const auto lines = io::split_lines(contents);
  if (format == CorpusFormat::kJsonl) {
    for (std::size_t ln = 0; ln < lines.size(); ++ln) {
      if (text::trim(lines[ln]).empty()) continue;
      ++result.records;
      const auto warn = [&](const std::string& why) {
        ++result.malformed;
        result.warnings.push_back("line " + std::to_string(ln + 1) + ": " + why);
      };
      const auto obj = nlohmann::json::parse(lines[ln], nullptr, false);
      if (obj.is_discarded() || !obj.is_object()) {
        warn("unparseable record");
        continue;
      }
      const auto id = string_field(obj, "id");
      const auto title = string_field(obj, "title");
      const auto body = string_field(obj, "text");
      if (id.empty() || text::trim(body).empty()) {
        warn("missing id or text");
        continue;
      }
      result.articles.push_back(make_article(std::string(id), std::string(title), std::string(body)));
    }
  } else {
    std::string title, body;
    bool open = false;
    for (std::string_view raw : lines) {
      const auto line = text::trim(raw);
      const bool heading = line.size() >= 3 && line.front() == '=' && line.back() == '=';
      if (heading && !line.starts_with("= =")) {
        finish_wikitext_article(result, title, body, open);
        title = std::string(text::trim(line.substr(1, line.size() - 2)));
        open = true;
        continue;
      }
      if (heading || line.empty()) continue;
      if (!open) {
        ++result.records;
        ++result.malformed;
        result.warnings.push_back("text outside any article");
        continue;
      }
      if (!body.empty()) body += '\n';
      body += line;
    }
    finish_wikitext_article(result, title, body, open);
  }
  if (result.records > 0 &&
      static_cast<double>(result.malformed) > kMaxMalformedFraction * static_cast<double>(result.records)) {
    throw DataError("corpus: " + std::to_string(result.malformed) + " of " +
                    std::to_string(result.records) + " records malformed");
  }
  return result;
}

LoadResult load_corpus(const std::filesystem::path& path, CorpusFormat format) {
  return parse_corpus(io::read_file(path), format);
}

std::map<std::string, EntityAnnotationFile> parse_annotations(std::string_view contents) {
  std::map<std::string, EntityAnnotationFile> files;
  const auto lines = io::split_lines(contents);
  for (std::size_t ln = 0; ln < lines.size(); ++ln) {
    if (text::trim(lines[ln]).empty()) continue;
    const auto where = "annotations line " + std::to_string(ln + 1);
    const auto obj = nlohmann::json::parse(lines[ln], nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) throw DataError(where + ": unparseable");
    EntityAnnotationFile file;
    file.article_id = std::string(string_field(obj, "article_id"));
    if (file.article_id.empty()) throw DataError(where + ": missing article_id");
    const auto ents = obj.find("entities");
    if (ents == obj.end() || !ents->is_array()) throw DataError(where + ": missing entities");
    for (const auto& e : *ents) {
      if (!e.is_object() || !e.contains("start") || !e.contains("end") ||
          !e["start"].is_number_unsigned() || !e["end"].is_number_unsigned()) {
        throw DataError(where + ": entity needs unsigned start/end");
      }
      file.entities.push_back({std::string(string_field(e, "surface")), e["start"].get<std::size_t>(),
                               e["end"].get<std::size_t>(), std::string(string_field(e, "type"))});
    }
    if (!files.emplace(file.article_id, file).second) {
      throw DataError(where + ": duplicate article_id " + file.article_id);
    }
  }
  return files;
}

std::map<std::string, EntityAnnotationFile> load_annotations(const std::filesystem::path& path) {
  return parse_annotations(io::read_file(path));
}

std::vector<EntityOccurrence> detect_entities(const Article& article,
                                              const EntityAnnotationFile* annotations) {
  std::vector<EntityOccurrence> out;
  const std::string_view text = article.text;

  if (annotations != nullptr) {
    if (annotations->article_id != article.id) {
      throw DataError("annotations for '" + annotations->article_id + "' applied to article '" +
                      article.id + "'");
    }
    for (const auto& a : annotations->entities) {
      const auto where = "article '" + article.id + "' entity '" + a.surface + "'";
      if (a.start >= a.end || a.end > text.size()) {
        throw DataError(where + ": offsets [" + std::to_string(a.start) + ", " +
                        std::to_string(a.end) + ") out of bounds");
      }
      if (text.substr(a.start, a.end - a.start) != a.surface) {
        throw DataError(where + ": surface does not match text at offsets");
      }
      const auto idx = sentence_of(article.sentence_spans, a.start);
      if (!idx) throw DataError(where + ": starts outside any sentence");
      out.push_back({article.id, a.surface, {a.start, a.end}, *idx,
                     a.start == article.sentence_spans[*idx].start});
    }
    std::stable_sort(out.begin(), out.end(), [](const auto& x, const auto& y) {
      return x.char_span.start < y.char_span.start;
    });
    return out;
  }

  for (std::size_t si = 0; si < article.sentence_spans.size(); ++si) {
    const Span sent = article.sentence_spans[si];
    std::optional<Span> run;
    bool run_initial = false;
    const auto flush = [&] {
      if (run && !run_initial && codepoint_count(text.substr(run->start, run->size())) >= 3) {
        out.push_back({article.id, std::string(text.substr(run->start, run->size())), *run, si, false});
      }
      run.reset();
      run_initial = false;
    };

    std::size_t p = sent.start;
    while (p < sent.end) {
      while (p < sent.end && text::is_space(text[p])) ++p;
      if (p >= sent.end) break;
      std::size_t w_end = p;
      while (w_end < sent.end && !text::is_space(text[w_end])) ++w_end;

      std::size_t core_start = p;
      while (core_start < w_end) {
        std::size_t len = opening_at(text, core_start);
        if (len == 0 && is_ascii_punct(text[core_start])) len = 1;
        if (len == 0) break;
        core_start += len;
      }
      std::size_t core_end = w_end;
      while (core_end > core_start) {
        std::size_t back = core_end - 1;
        while (back > core_start && text::is_continuation_byte(text[back])) --back;
        if (is_ascii_punct(text[core_end - 1]) || closing_at(text, back) == core_end - back) {
          core_end = back;
        } else {
          break;
        }
      }

      const bool capitalized = core_end > core_start && text::upper_at(text, core_start);
      if (!capitalized || core_start != p) flush();
      if (capitalized) {
        if (!run) {
          run = Span{core_start, core_end};
          run_initial = core_start == sent.start || p == sent.start;
        } else {
          run->end = core_end;
        }
        if (core_end != w_end) flush();
      }
      p = w_end;
    }
    flush();
  }
  return out;
}

bool is_eligible(const EntityOccurrence& entity) {
  return entity.sentence_index >= 1 && !entity.sentence_initial;
}

std::optional<EntityOccurrence> select_truncation_entity(const Article& article,
                                                         std::span<const EntityOccurrence> entities,
                                                         std::uint64_t seed) {
  std::vector<const EntityOccurrence*> eligible;
  for (const auto& e : entities) {
    if (e.article_id == article.id && is_eligible(e) && e.char_span.end <= article.text.size()) {
      eligible.push_back(&e);
    }
  }
  if (eligible.empty()) return std::nullopt;
  Rng rng(splitmix64(seed));
  return *eligible[uniform_index(rng, eligible.size())];
}

}  // namespace mind::corpus
