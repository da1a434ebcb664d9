#include <algorithm>
#include <cmath>

#include "mind/error.hpp"
#include "mind/trace.hpp"

namespace mind::trace {
namespace {

struct VariantInfo {
  FeatureVariant variant;
  std::string_view name;
  bool sums;
  bool last;
};

constexpr VariantInfo kInfo[] = {
    {FeatureVariant::kAllLayersAllTokens, "all-all", true, false},
    {FeatureVariant::kFirstLastAllTokens, "firstlast-all", true, false},
    {FeatureVariant::kLastAllTokens, "last-all", true, false},
    {FeatureVariant::kFirstAllTokens, "first-all", true, false},
    {FeatureVariant::kLastLastToken, "last-last", false, true},
    {FeatureVariant::kAllLayersLastToken, "all-last", false, true},
    {FeatureVariant::kLastAllAndLast, "last-allandlast", true, true},
};

const VariantInfo& info(FeatureVariant v) {
  return *std::find_if(std::begin(kInfo), std::end(kInfo),
                       [v](const VariantInfo& i) { return i.variant == v; });
}

// Final combination shared by the batch and streaming paths. `sums` and
// `last` hold one dim-sized block per entry of `layers` (either may be empty
// when the variant does not need it).
std::vector<float> combine(FeatureVariant v, std::span<const std::uint32_t> layers,
                           std::uint32_t num_layers, std::size_t dim, std::span<const double> sums,
                           std::span<const float> last, std::size_t n) {
  const auto block = [&](std::uint32_t layer) {
    const auto pos = static_cast<std::size_t>(
        std::find(layers.begin(), layers.end(), layer) - layers.begin());
    return pos * dim;
  };
  const double inv_n = 1.0 / static_cast<double>(n);
  std::vector<float> out(dim);
  switch (v) {
    case FeatureVariant::kAllLayersAllTokens:
      for (std::size_t k = 0; k < dim; ++k) {
        double acc = 0.0;
        for (std::size_t j = 0; j < layers.size(); ++j) acc += sums[j * dim + k] * inv_n;
        out[k] = static_cast<float>(acc / static_cast<double>(num_layers));
      }
      break;
    case FeatureVariant::kFirstLastAllTokens: {
      const auto first = block(1), lastb = block(num_layers);
      for (std::size_t k = 0; k < dim; ++k) {
        out[k] = static_cast<float>(0.5 * (sums[first + k] + sums[lastb + k]));
      }
      break;
    }
    case FeatureVariant::kLastAllTokens:
    case FeatureVariant::kFirstAllTokens: {
      const auto b = block(v == FeatureVariant::kLastAllTokens ? num_layers : 1);
      for (std::size_t k = 0; k < dim; ++k) out[k] = static_cast<float>(sums[b + k] * inv_n);
      break;
    }
    case FeatureVariant::kLastLastToken: {
      const auto b = block(num_layers);
      std::copy_n(last.begin() + static_cast<std::ptrdiff_t>(b), dim, out.begin());
      break;
    }
    case FeatureVariant::kAllLayersLastToken:
      for (std::size_t k = 0; k < dim; ++k) {
        double acc = 0.0;
        for (std::size_t j = 0; j < layers.size(); ++j) acc += last[j * dim + k];
        out[k] = static_cast<float>(acc / static_cast<double>(num_layers));
      }
      break;
    case FeatureVariant::kLastAllAndLast: {
      const auto b = block(num_layers);
      for (std::size_t k = 0; k < dim; ++k) {
        out[k] = static_cast<float>(0.5 * (sums[b + k] * inv_n + static_cast<double>(last[b + k])));
      }
      break;
    }
  }
  return out;
}

std::vector<std::size_t> resolve_slots(const TraceHeader& header,
                                       std::span<const std::uint32_t> layers, FeatureVariant v) {
  std::vector<std::size_t> slots;
  for (auto layer : layers) {
    const auto slot = header.slot_of(layer);
    if (!slot) {
      throw DataError("features: variant " + std::string(variant_name(v)) + " needs layer " +
                      std::to_string(layer) + ", not stored in trace");
    }
    slots.push_back(*slot);
  }
  return slots;
}

}  // namespace

std::string_view variant_name(FeatureVariant v) { return info(v).name; }

std::optional<FeatureVariant> parse_variant(std::string_view name) {
  for (const auto& i : kInfo) {
    if (i.name == name) return i.variant;
  }
  return std::nullopt;
}

std::vector<std::uint32_t> required_layers(FeatureVariant v, std::uint32_t num_layers) {
  std::vector<std::uint32_t> layers;
  switch (v) {
    case FeatureVariant::kAllLayersAllTokens:
    case FeatureVariant::kAllLayersLastToken:
      for (std::uint32_t j = 1; j <= num_layers; ++j) layers.push_back(j);
      break;
    case FeatureVariant::kFirstLastAllTokens:
      layers = {1, num_layers};
      break;
    case FeatureVariant::kFirstAllTokens:
      layers = {1};
      break;
    case FeatureVariant::kLastAllTokens:
    case FeatureVariant::kLastLastToken:
    case FeatureVariant::kLastAllAndLast:
      layers = {num_layers};
      break;
  }
  layers.erase(std::unique(layers.begin(), layers.end()), layers.end());
  return layers;
}

FeatureVector extract_features(const TraceHeader& header, std::span<const TokenRecord> records,
                               FeatureVariant variant) {
  if (records.empty()) throw DataError("features: empty trace");
  const auto layers = required_layers(variant, header.num_layers);
  const auto slots = resolve_slots(header, layers, variant);
  const std::size_t dim = header.hidden_dim;
  const auto& vi = info(variant);
  for (const auto& r : records) {
    if (r.hidden.size() != header.floats_per_record()) {
      throw DataError("features: record dimension mismatch");
    }
  }

  std::vector<double> sums;
  if (vi.sums) {
    sums.assign(layers.size() * dim, 0.0);
    for (std::size_t j = 0; j < layers.size(); ++j) {
      double* acc = sums.data() + j * dim;
      for (const auto& r : records) {
        const auto h = r.slot(slots[j], dim);
        for (std::size_t k = 0; k < dim; ++k) acc[k] += h[k];
      }
    }
  }
  std::vector<float> last;
  if (vi.last) {
    last.reserve(layers.size() * dim);
    for (std::size_t j = 0; j < layers.size(); ++j) {
      const auto h = records.back().slot(slots[j], dim);
      last.insert(last.end(), h.begin(), h.end());
    }
  }
  return {combine(variant, layers, header.num_layers, dim, sums, last, records.size()), variant,
          records.size()};
}

FeatureAccumulator::FeatureAccumulator(const TraceHeader& header, FeatureVariant variant)
    : variant_(variant),
      dim_(header.hidden_dim),
      floats_(header.floats_per_record()),
      num_layers_(header.num_layers),
      layers_(required_layers(variant, header.num_layers)),
      slots_(resolve_slots(header, layers_, variant)),
      needs_sums_(info(variant).sums),
      needs_last_(info(variant).last) {
  reset();
}

void FeatureAccumulator::reset() {
  count_ = 0;
  if (needs_sums_) sums_.assign(layers_.size() * dim_, 0.0);
  if (needs_last_) last_.assign(layers_.size() * dim_, 0.0f);
}

void FeatureAccumulator::push(const TokenRecord& record) {
  if (record.hidden.size() != floats_) throw DataError("features: record dimension mismatch");
  for (std::size_t j = 0; j < layers_.size(); ++j) {
    const auto h = record.slot(slots_[j], dim_);
    if (needs_sums_) {
      double* acc = sums_.data() + j * dim_;
      for (std::size_t k = 0; k < dim_; ++k) acc[k] += h[k];
    }
    if (needs_last_) std::copy(h.begin(), h.end(), last_.begin() + static_cast<std::ptrdiff_t>(j * dim_));
  }
  ++count_;
}

FeatureVector FeatureAccumulator::snapshot() const {
  if (count_ == 0) throw DataError("features: snapshot of empty accumulator");
  return {combine(variant_, layers_, num_layers_, dim_, sums_, last_, count_), variant_, count_};
}

}  // namespace mind::trace
