#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

// Per-token inference traces: the MNDT wire/file format and the feature
// extraction schemes that reduce a trace to one d-dimensional vector.
//
// Layer indices are 1-based (1 = first transformer layer, N = last).
namespace mind::trace {

inline constexpr char kMagic[4] = {'M', 'N', 'D', 'T'};
inline constexpr std::uint16_t kVersion = 1;
// A record whose token_id is this value ends a stream; nothing follows it.
inline constexpr std::uint32_t kEndOfStream = 0xFFFFFFFFu;
inline constexpr std::uint32_t kMaxHeaderBytes = 1u << 20;

struct TraceHeader {
  std::string model_id;
  std::uint32_t num_layers = 0;
  std::uint32_t hidden_dim = 0;
  std::vector<std::uint32_t> stored_layers;
  bool has_entropy = true;
  bool has_logprob = true;

  // Throws DataError on a violated invariant.
  void validate() const;
  // Position of `layer` within stored_layers.
  std::optional<std::size_t> slot_of(std::uint32_t layer) const;
  std::size_t floats_per_record() const { return stored_layers.size() * hidden_dim; }

  friend bool operator==(const TraceHeader&, const TraceHeader&) = default;
};

struct TokenRecord {
  std::uint32_t token_id = 0;
  std::string token_text;
  float chosen_logprob = 0.0f;  // log p of the emitted token, <= 0
  float entropy = 0.0f;         // entropy of the full next-token distribution, >= 0
  // stored_layers.size() blocks of hidden_dim floats, in header layer order.
  std::vector<float> hidden;

  std::span<const float> slot(std::size_t slot_index, std::size_t hidden_dim) const {
    return std::span<const float>(hidden).subspan(slot_index * hidden_dim, hidden_dim);
  }

  friend bool operator==(const TokenRecord&, const TokenRecord&) = default;
};

void validate_record(const TraceHeader& header, const TokenRecord& record, std::size_t index);

struct Trace {
  TraceHeader header;
  std::vector<TokenRecord> records;

  std::string text() const;
};

// Incremental encoder; used for files and for the streaming channel.
class TraceWriter {
 public:
  TraceWriter(std::ostream& out, TraceHeader header);

  void write(const TokenRecord& record);
  // Emits the end-of-stream marker.
  void finish();
  void flush();

  std::size_t bytes_written() const { return bytes_; }
  std::size_t records_written() const { return count_; }

 private:
  void emit(std::string_view bytes);

  std::ostream& out_;
  TraceHeader header_;
  std::string scratch_;
  std::size_t bytes_ = 0;
  std::size_t count_ = 0;
};

// Incremental decoder. Reads exactly one record per call so a pipe or socket
// is consumed no faster than the scorer runs.
class TraceReader {
 public:
  // Reads and validates the preamble; throws DataError("bad magic") etc.
  explicit TraceReader(std::istream& in);

  const TraceHeader& header() const { return header_; }

  // False at end of stream (clean EOF on a record boundary, or the end
  // marker). Throws DataError naming the token index on a partial record.
  bool next(TokenRecord& out);

  std::size_t tokens_read() const { return count_; }
  bool saw_end_marker() const { return ended_; }

 private:
  std::istream& in_;
  TraceHeader header_;
  std::string buf_;
  std::size_t count_ = 0;
  bool ended_ = false;
  bool done_ = false;
};

std::string encode_trace(const TraceHeader& header, std::span<const TokenRecord> records,
                         bool end_marker = false);
Trace decode_trace(std::string_view bytes);

std::size_t write_trace(const std::filesystem::path& path, const TraceHeader& header,
                        std::span<const TokenRecord> records);
Trace read_trace(const std::filesystem::path& path);

std::string header_to_json(const TraceHeader& header);
TraceHeader header_from_json(std::string_view json);

// ---------------------------------------------------------------------------
// Features

enum class FeatureVariant {
  kAllLayersAllTokens,   // mean over layers of token-mean
  kFirstLastAllTokens,   // 1/2 (sum_i H_1^i + sum_i H_N^i), token sums, not means
  kLastAllTokens,        // token-mean of layer N
  kFirstAllTokens,       // token-mean of layer 1
  kLastLastToken,        // H_N^n
  kAllLayersLastToken,   // layer-mean of H_j^n
  kLastAllAndLast,       // 1/2 (token-mean of layer N + H_N^n)
};

inline constexpr FeatureVariant kAllVariants[] = {
    FeatureVariant::kAllLayersAllTokens, FeatureVariant::kFirstLastAllTokens,
    FeatureVariant::kLastAllTokens,      FeatureVariant::kFirstAllTokens,
    FeatureVariant::kLastLastToken,      FeatureVariant::kAllLayersLastToken,
    FeatureVariant::kLastAllAndLast,
};

// The scheme the deployed classifier uses.
inline constexpr FeatureVariant kDefaultVariant = FeatureVariant::kLastLastToken;

std::string_view variant_name(FeatureVariant v);
std::optional<FeatureVariant> parse_variant(std::string_view name);

// Sorted, de-duplicated layers a variant reads.
std::vector<std::uint32_t> required_layers(FeatureVariant v, std::uint32_t num_layers);

struct FeatureVector {
  std::vector<float> values;
  FeatureVariant variant = kDefaultVariant;
  std::size_t token_count = 0;
};

FeatureVector extract_features(const TraceHeader& header, std::span<const TokenRecord> records,
                               FeatureVariant variant);

// Running form of extract_features: O(d) state per required layer,
// independent of how many tokens were pushed. Single owner.
class FeatureAccumulator {
 public:
  FeatureAccumulator(const TraceHeader& header, FeatureVariant variant);

  void push(const TokenRecord& record);
  // Equals extract_features over every record pushed since the last reset.
  FeatureVector snapshot() const;
  void reset();

  std::size_t count() const { return count_; }
  FeatureVariant variant() const { return variant_; }

 private:
  FeatureVariant variant_;
  std::size_t dim_;
  std::size_t floats_;
  std::uint32_t num_layers_;
  std::vector<std::uint32_t> layers_;
  std::vector<std::size_t> slots_;
  bool needs_sums_;
  bool needs_last_;
  std::vector<double> sums_;  // layers_.size() x dim_
  std::vector<float> last_;   // layers_.size() x dim_
  std::size_t count_ = 0;
};

}  // namespace mind::trace
