#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mind/binary_io.hpp"
#include "mind/error.hpp"
#include "mind/io.hpp"
#include "mind/trace.hpp"

namespace mind::trace {
namespace {

std::string token_error(std::string_view what, std::size_t index) {
  return "trace: " + std::string(what) + " at token " + std::to_string(index);
}

}  // namespace

void TraceHeader::validate() const {
  if (num_layers < 1) throw DataError("trace header: num_layers must be >= 1");
  if (hidden_dim < 1) throw DataError("trace header: hidden_dim must be >= 1");
  if (stored_layers.empty()) throw DataError("trace header: stored_layers is empty");
  for (std::size_t i = 0; i < stored_layers.size(); ++i) {
    const auto layer = stored_layers[i];
    if (layer < 1 || layer > num_layers) {
      throw DataError("trace header: stored layer " + std::to_string(layer) + " outside [1, " +
                      std::to_string(num_layers) + "]");
    }
    if (i > 0 && stored_layers[i - 1] >= layer) {
      throw DataError("trace header: stored_layers must be strictly increasing");
    }
  }
}

std::optional<std::size_t> TraceHeader::slot_of(std::uint32_t layer) const {
  for (std::size_t i = 0; i < stored_layers.size(); ++i) {
    if (stored_layers[i] == layer) return i;
  }
  return std::nullopt;
}

void validate_record(const TraceHeader& header, const TokenRecord& record, std::size_t index) {
  if (record.token_id == kEndOfStream) throw DataError(token_error("reserved token id", index));
  if (record.hidden.size() != header.floats_per_record()) {
    throw DataError(token_error("dimension mismatch (" + std::to_string(record.hidden.size()) +
                                    " floats, expected " +
                                    std::to_string(header.floats_per_record()) + ")",
                                index));
  }
  if (!(record.entropy >= 0.0f) || !std::isfinite(record.entropy)) {
    throw DataError(token_error("entropy must be finite and >= 0", index));
  }
  if (!(record.chosen_logprob <= 0.0f) || !std::isfinite(record.chosen_logprob)) {
    throw DataError(token_error("chosen_logprob must be finite and <= 0", index));
  }
  if (record.token_text.size() > 0xFFFF) throw DataError(token_error("token text too long", index));
}

std::string Trace::text() const {
  std::string out;
  for (const auto& r : records) out += r.token_text;
  return out;
}

std::string header_to_json(const TraceHeader& h) {
  nlohmann::ordered_json j;
  j["model_id"] = h.model_id;
  j["num_layers"] = h.num_layers;
  j["hidden_dim"] = h.hidden_dim;
  j["stored_layers"] = h.stored_layers;
  j["has_entropy"] = h.has_entropy;
  j["has_logprob"] = h.has_logprob;
  j["scalar"] = "f32le";
  return j.dump();
}

TraceHeader header_from_json(std::string_view json) {
  const auto j = nlohmann::json::parse(json, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw DataError("trace header: invalid JSON");
  TraceHeader h;
  try {
    h.model_id = j.value("model_id", std::string());
    h.num_layers = j.at("num_layers").get<std::uint32_t>();
    h.hidden_dim = j.at("hidden_dim").get<std::uint32_t>();
    h.stored_layers = j.at("stored_layers").get<std::vector<std::uint32_t>>();
    h.has_entropy = j.value("has_entropy", true);
    h.has_logprob = j.value("has_logprob", true);
    if (j.value("scalar", std::string("f32le")) != "f32le") {
      throw DataError("trace header: unsupported scalar encoding");
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("trace header: ") + e.what());
  }
  h.validate();
  return h;
}

// --- writer -----------------------------------------------------------------

TraceWriter::TraceWriter(std::ostream& out, TraceHeader header)
    : out_(out), header_(std::move(header)) {
  header_.validate();
  const auto json = header_to_json(header_);
  binary::ByteWriter w;
  w.bytes(std::string_view(kMagic, 4));
  w.u16(kVersion);
  w.u32(static_cast<std::uint32_t>(json.size()));
  w.bytes(json);
  emit(w.data());
}

void TraceWriter::emit(std::string_view bytes) {
  out_.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out_) throw DataError("trace: write failed");
  bytes_ += bytes.size();
}

void TraceWriter::write(const TokenRecord& record) {
  validate_record(header_, record, count_);
  binary::ByteWriter w;
  w.u32(record.token_id);
  w.u16(static_cast<std::uint16_t>(record.token_text.size()));
  w.bytes(record.token_text);
  w.f32(record.chosen_logprob);
  w.f32(record.entropy);
  w.f32s(record.hidden);
  emit(w.data());
  ++count_;
}

void TraceWriter::finish() {
  binary::ByteWriter w;
  w.u32(kEndOfStream);
  emit(w.data());
  flush();
}

void TraceWriter::flush() { out_.flush(); }

// --- reader -----------------------------------------------------------------

TraceReader::TraceReader(std::istream& in) : in_(in) {
  unsigned char pre[10];
  in_.read(reinterpret_cast<char*>(pre), sizeof pre);
  if (in_.gcount() < 4 || std::memcmp(pre, kMagic, 4) != 0) throw DataError("trace: bad magic");
  if (in_.gcount() < static_cast<std::streamsize>(sizeof pre)) {
    throw DataError("trace: truncated preamble");
  }
  const auto version = binary::load_u16(pre + 4);
  if (version != kVersion) {
    throw DataError("trace: version mismatch (file " + std::to_string(version) + ", reader " +
                    std::to_string(kVersion) + ")");
  }
  const auto json_len = binary::load_u32(pre + 6);
  if (json_len > kMaxHeaderBytes) throw DataError("trace: header length implausible");
  std::string json(json_len, '\0');
  in_.read(json.data(), json_len);
  if (in_.gcount() != static_cast<std::streamsize>(json_len)) {
    throw DataError("trace: truncated header");
  }
  header_ = header_from_json(json);
}

bool TraceReader::next(TokenRecord& out) {
  if (done_) return false;
  const auto read_exact = [&](char* dst, std::size_t n, std::string_view what) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (in_.gcount() != static_cast<std::streamsize>(n)) {
      done_ = true;
      throw DataError(token_error("truncated record (" + std::string(what) + ")", count_));
    }
  };

  unsigned char head[4];
  in_.read(reinterpret_cast<char*>(head), 4);
  if (in_.gcount() == 0 && in_.eof()) {
    done_ = true;
    return false;
  }
  if (in_.gcount() != 4) {
    done_ = true;
    throw DataError(token_error("truncated record (token id)", count_));
  }
  const auto token_id = binary::load_u32(head);
  if (token_id == kEndOfStream) {
    ended_ = done_ = true;
    return false;
  }
  out.token_id = token_id;

  unsigned char len_bytes[2];
  read_exact(reinterpret_cast<char*>(len_bytes), 2, "text length");
  out.token_text.resize(binary::load_u16(len_bytes));
  read_exact(out.token_text.data(), out.token_text.size(), "text");

  unsigned char scalars[8];
  read_exact(reinterpret_cast<char*>(scalars), 8, "scalars");
  out.chosen_logprob = std::bit_cast<float>(binary::load_u32(scalars));
  out.entropy = std::bit_cast<float>(binary::load_u32(scalars + 4));

  out.hidden.resize(header_.floats_per_record());
  const std::size_t nbytes = out.hidden.size() * sizeof(float);
  if constexpr (std::endian::native == std::endian::little) {
    read_exact(reinterpret_cast<char*>(out.hidden.data()), nbytes, "hidden state");
  } else {
    buf_.resize(nbytes);
    read_exact(buf_.data(), nbytes, "hidden state");
    binary::load_f32s(reinterpret_cast<const unsigned char*>(buf_.data()), out.hidden);
  }
  validate_record(header_, out, count_);
  ++count_;
  return true;
}

std::string encode_trace(const TraceHeader& header, std::span<const TokenRecord> records,
                         bool end_marker) {
  std::ostringstream ss(std::ios::binary);
  TraceWriter w(ss, header);
  for (const auto& r : records) w.write(r);
  if (end_marker) w.finish();
  return std::move(ss).str();
}

Trace decode_trace(std::string_view bytes) {
  std::istringstream ss(std::string(bytes), std::ios::binary);
  TraceReader reader(ss);
  Trace t{reader.header(), {}};
  TokenRecord r;
  while (reader.next(r)) t.records.push_back(r);
  return t;
}

std::size_t write_trace(const std::filesystem::path& path, const TraceHeader& header,
                        std::span<const TokenRecord> records) {
  const auto bytes = encode_trace(header, records);
  io::write_file(path, bytes);
  return bytes.size();
}

Trace read_trace(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  TraceReader reader(in);
  Trace t{reader.header(), {}};
  TokenRecord r;
  while (reader.next(r)) t.records.push_back(r);
  return t;
}

}  // namespace mind::trace
