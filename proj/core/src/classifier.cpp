#include "mind/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>

#include "mind/binary_io.hpp"
#include "mind/error.hpp"
#include "mind/io.hpp"

namespace mind::classifier {
namespace {

// Four independent partial sums so the loop vectorizes without -ffast-math.
template <typename T>
T dot(const T* a, const T* b, std::size_t n) {
  T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    s0 += a[k] * b[k];
    s1 += a[k + 1] * b[k + 1];
    s2 += a[k + 2] * b[k + 2];
    s3 += a[k + 3] * b[k + 3];
  }
  for (; k < n; ++k) s0 += a[k] * b[k];
  return (s0 + s1) + (s2 + s3);
}

template <typename T>
void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t k = 0; k < n; ++k) y[k] += alpha * x[k];
}

void check_dataset(const datagen::LabeledDataset& ds, std::size_t dim, const char* name) {
  if (ds.size() == 0) throw DataError(std::string(name) + " set is empty");
  if (ds.dim != dim) {
    throw DataError(std::string(name) + " set dimension " + std::to_string(ds.dim) +
                    " does not match model input " + std::to_string(dim));
  }
}

}  // namespace

void MlpConfig::validate() const {
  if (input_dim < 1) throw DataError("mlp: input_dim must be >= 1");
  if (std::any_of(hidden_dims.begin(), hidden_dims.end(), [](auto d) { return d < 1; })) {
    throw DataError("mlp: hidden dims must be >= 1");
  }
  if (output_dim != 2) throw DataError("mlp: output_dim must be 2");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) throw DataError("mlp: dropout_rate must be in [0, 1)");
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !(weight_decay >= 0.0) || batch_size < 1 || max_epochs < 1 ||
      patience < 1 || !(epsilon > 0.0) || !(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw DataError("train: invalid configuration");
  }
}

double bce_loss(int y, double p) {
  if (y != 0 && y != 1) throw DataError("bce: label must be 0 or 1");
  if (std::isnan(p)) throw NumericError("bce: probability is NaN");
  p = std::clamp(p, kProbabilityEpsilon, 1.0 - kProbabilityEpsilon);
  return -(y * std::log(p) + (1 - y) * std::log(1.0 - p));
}

// --- Mlp -------------------------------------------------------------------

template <typename T>
Mlp<T>::Mlp(const MlpConfig& config) {
  config.validate();
  Rng rng(splitmix64(config.seed));
  std::vector<std::size_t> dims{config.input_dim};
  dims.insert(dims.end(), config.hidden_dims.begin(), config.hidden_dims.end());
  dims.push_back(config.output_dim);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    Dense<T> layer{dims[i], dims[i + 1], std::vector<T>(dims[i] * dims[i + 1]), std::vector<T>(dims[i + 1], T(0))};
    const double bound = 1.0 / std::sqrt(static_cast<double>(layer.in));
    for (auto& w : layer.weight) w = static_cast<T>(uniform(rng, -bound, bound));
    layers_.push_back(std::move(layer));
  }
}

template <typename T>
template <typename U>
Mlp<T> Mlp<T>::from(const Mlp<U>& other) {
  Mlp<T> out;
  for (const auto& l : other.layers()) {
    out.layers_.push_back({l.in, l.out, std::vector<T>(l.weight.begin(), l.weight.end()),
                           std::vector<T>(l.bias.begin(), l.bias.end())});
  }
  return out;
}

template <typename T>
std::size_t Mlp<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.weight.size() + l.bias.size();
  return n;
}

template <typename T>
std::vector<Dense<T>> Mlp<T>::zero_gradients() const {
  std::vector<Dense<T>> g;
  for (const auto& l : layers_) {
    g.push_back({l.in, l.out, std::vector<T>(l.weight.size(), T(0)), std::vector<T>(l.bias.size(), T(0))});
  }
  return g;
}

template <typename T>
void Mlp<T>::forward(std::span<const T> x, Workspace<T>& ws, Rng* dropout, double dropout_rate) const {
  const std::size_t n_layers = layers_.size();
  ws.activations.resize(n_layers + 1);
  ws.pre.resize(n_layers);
  ws.activations[0].assign(x.begin(), x.end());
  ws.dropout_scale.clear();
  for (std::size_t i = 0; i < n_layers; ++i) {
    const auto& layer = layers_[i];
    auto& z = ws.pre[i];
    z.resize(layer.out);
    const T* a = ws.activations[i].data();
    for (std::size_t o = 0; o < layer.out; ++o) {
      z[o] = dot(layer.weight.data() + o * layer.in, a, layer.in) + layer.bias[o];
    }
    auto& next = ws.activations[i + 1];
    next.resize(layer.out);
    if (i + 1 == n_layers) {
      std::copy(z.begin(), z.end(), next.begin());
      continue;
    }
    for (std::size_t o = 0; o < layer.out; ++o) next[o] = z[o] > T(0) ? z[o] : T(0);
    if (i == 0 && dropout != nullptr && dropout_rate > 0.0) {
      ws.dropout_scale.resize(layer.out);
      const T keep_scale = static_cast<T>(1.0 / (1.0 - dropout_rate));
      for (std::size_t o = 0; o < layer.out; ++o) {
        ws.dropout_scale[o] = uniform01(*dropout) < dropout_rate ? T(0) : keep_scale;
        next[o] *= ws.dropout_scale[o];
      }
    }
  }
}

template <typename T>
T Mlp<T>::loss_from_logits(std::span<const T> logits, int label) {
  const T m = std::max(logits[0], logits[1]);
  const T lse = m + std::log(std::exp(logits[0] - m) + std::exp(logits[1] - m));
  return lse - logits[label != 0 ? 1 : 0];
}

template <typename T>
T Mlp<T>::positive_probability(std::span<const T> logits) {
  return T(1) / (T(1) + std::exp(logits[0] - logits[1]));
}

template <typename T>
T Mlp<T>::backward(Workspace<T>& ws, int label, std::vector<Dense<T>>& grads) const {
  const std::size_t n_layers = layers_.size();
  const auto& logits = ws.activations.back();
  const T loss = loss_from_logits(logits, label);
  const T p1 = positive_probability(logits);
  ws.delta.assign({(T(1) - p1) - T(label == 0 ? 1 : 0), p1 - T(label != 0 ? 1 : 0)});

  for (std::size_t i = n_layers; i-- > 0;) {
    const auto& layer = layers_[i];
    auto& g = grads[i];
    const T* a = ws.activations[i].data();
    for (std::size_t o = 0; o < layer.out; ++o) {
      g.bias[o] += ws.delta[o];
      axpy(ws.delta[o], a, g.weight.data() + o * layer.in, layer.in);
    }
    if (i == 0) break;
    ws.delta_prev.assign(layer.in, T(0));
    for (std::size_t o = 0; o < layer.out; ++o) {
      axpy(ws.delta[o], layer.weight.data() + o * layer.in, ws.delta_prev.data(), layer.in);
    }
    const auto& z_prev = ws.pre[i - 1];
    const bool dropped = (i - 1 == 0) && !ws.dropout_scale.empty();
    for (std::size_t k = 0; k < layer.in; ++k) {
      if (!(z_prev[k] > T(0))) {
        ws.delta_prev[k] = T(0);
      } else if (dropped) {
        ws.delta_prev[k] *= ws.dropout_scale[k];
      }
    }
    std::swap(ws.delta, ws.delta_prev);
  }
  return loss;
}

template class Mlp<float>;
template class Mlp<double>;
template Mlp<double> Mlp<double>::from(const Mlp<float>&);
template Mlp<float> Mlp<float>::from(const Mlp<double>&);

// --- optimizer -------------------------------------------------------------

AdamW::AdamW(const std::vector<Dense<float>>& shapes, const TrainConfig& cfg) : cfg_(cfg) {
  cfg_.validate();
  for (const auto& l : shapes) {
    m_.push_back({l.in, l.out, std::vector<float>(l.weight.size()), std::vector<float>(l.bias.size())});
  }
  v_ = m_;
}

void AdamW::step(std::vector<Dense<float>>& params, const std::vector<Dense<float>>& grads) {
  ++t_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  const auto b1 = static_cast<float>(cfg_.beta1), b2 = static_cast<float>(cfg_.beta2);
  const auto decay = static_cast<float>(1.0 - cfg_.learning_rate * cfg_.weight_decay);
  const auto step_size = static_cast<float>(cfg_.learning_rate / bc1);
  const auto inv_sqrt_bc2 = static_cast<float>(1.0 / std::sqrt(bc2));
  const auto eps = static_cast<float>(cfg_.epsilon);

  const auto update = [&](std::vector<float>& p, const std::vector<float>& g, std::vector<float>& m,
                          std::vector<float>& v) {
    for (std::size_t k = 0; k < p.size(); ++k) {
      p[k] *= decay;
      m[k] = b1 * m[k] + (1.0f - b1) * g[k];
      v[k] = b2 * v[k] + (1.0f - b2) * g[k] * g[k];
      p[k] -= step_size * m[k] / (std::sqrt(v[k]) * inv_sqrt_bc2 + eps);
    }
  };
  for (std::size_t i = 0; i < params.size(); ++i) {
    update(params[i].weight, grads[i].weight, m_[i].weight, v_[i].weight);
    update(params[i].bias, grads[i].bias, m_[i].bias, v_[i].bias);
  }
}

// --- model -----------------------------------------------------------------

MlpModel init_model(const MlpConfig& config) { return {config, Mlp<float>(config), {}}; }

double forward(const MlpModel& model, std::span<const float> features, bool train_mode,
               std::uint64_t dropout_seed) {
  if (features.size() != model.net.input_dim()) {
    throw DataError("classifier: feature length " + std::to_string(features.size()) +
                    " != model input " + std::to_string(model.net.input_dim()));
  }
  if (!std::all_of(features.begin(), features.end(), [](float v) { return std::isfinite(v); })) {
    throw NumericError("classifier: non-finite feature value");
  }
  Workspace<float> ws;
  Rng rng(splitmix64(dropout_seed));
  model.net.forward(features, ws, train_mode ? &rng : nullptr, model.config.dropout_rate);
  const auto& z = ws.activations.back();
  return 1.0 / (1.0 + std::exp(static_cast<double>(z[0]) - static_cast<double>(z[1])));
}

double predict(const MlpModel& model, std::span<const float> features) {
  return forward(model, features, false);
}

std::vector<double> predict_all(const MlpModel& model, const datagen::LabeledDataset& ds) {
  std::vector<double> out;
  out.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) out.push_back(predict(model, ds.row(i)));
  return out;
}

double accuracy(const MlpModel& model, const datagen::LabeledDataset& ds) {
  if (ds.size() == 0) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const int predicted = predict(model, ds.row(i)) >= 0.5 ? 1 : 0;
    correct += predicted == ds.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(ds.size());
}

TrainResult train(const MlpModel& initial, const datagen::LabeledDataset& train_set,
                  const datagen::LabeledDataset& dev_set, const TrainConfig& cfg) {
  cfg.validate();
  const std::size_t dim = initial.net.input_dim();
  check_dataset(train_set, dim, "training");
  check_dataset(dev_set, dim, "dev");
  const auto [neg, pos] = train_set.class_counts();
  if (neg == 0 || pos == 0) throw DataError("training set contains a single class");

  MlpModel model = initial;
  AdamW optimizer(model.net.layers(), cfg);
  Rng order_rng(splitmix64(cfg.seed));
  Rng dropout_rng(splitmix64(cfg.seed ^ 0xd1b54a32d192ed03ULL));

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  TrainResult result{model, {}};
  double best_accuracy = -1.0;
  std::size_t since_best = 0;
  Workspace<float> ws;
  auto grads = model.net.zero_gradients();

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    shuffle(std::span(order), order_rng);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      for (auto& g : grads) {
        std::fill(g.weight.begin(), g.weight.end(), 0.0f);
        std::fill(g.bias.begin(), g.bias.end(), 0.0f);
      }
      double batch_loss = 0.0;
      for (std::size_t b = start; b < end; ++b) {
        const auto idx = order[b];
        model.net.forward(train_set.row(idx), ws, &dropout_rng, model.config.dropout_rate);
        batch_loss += model.net.backward(ws, train_set.labels[idx], grads);
      }
      if (!std::isfinite(batch_loss)) {
        throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) + ", batch starting at " +
                           std::to_string(start) + " (lr " + std::to_string(cfg.learning_rate) + ")");
      }
      const float inv = 1.0f / static_cast<float>(end - start);
      for (auto& g : grads) {
        for (auto& v : g.weight) v *= inv;
        for (auto& v : g.bias) v *= inv;
      }
      optimizer.step(model.net.layers(), grads);
      loss_sum += batch_loss;
    }

    const double dev_accuracy = accuracy(model, dev_set);
    result.history.push_back({epoch, loss_sum / static_cast<double>(order.size()), dev_accuracy});
    if (dev_accuracy > best_accuracy) {
      best_accuracy = dev_accuracy;
      result.model = model;
      result.model.metadata.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  result.model.metadata.epochs_run = result.history.size();
  result.model.metadata.best_dev_accuracy = best_accuracy;
  result.model.metadata.feature_variant = std::string(trace::variant_name(train_set.variant));
  result.model.metadata.train_config = cfg;
  return result;
}

// --- codec -----------------------------------------------------------------

std::string encode_model(const MlpModel& model) {
  nlohmann::ordered_json meta;
  meta["config"] = {
      {"input_dim", model.config.input_dim},   {"hidden_dims", model.config.hidden_dims},
      {"output_dim", model.config.output_dim}, {"dropout_rate", model.config.dropout_rate},
      {"activation", "relu"},                  {"seed", model.config.seed},
  };
  nlohmann::ordered_json md = {
      {"epochs_run", model.metadata.epochs_run},
      {"best_epoch", model.metadata.best_epoch},
      {"best_dev_accuracy", model.metadata.best_dev_accuracy},
      {"feature_variant", model.metadata.feature_variant},
  };
  if (const auto& tc = model.metadata.train_config) {
    md["optimizer"] = {
        {"name", "adamw"},      {"learning_rate", tc->learning_rate}, {"weight_decay", tc->weight_decay},
        {"beta1", tc->beta1},   {"beta2", tc->beta2},                 {"epsilon", tc->epsilon},
        {"batch_size", tc->batch_size}, {"max_epochs", tc->max_epochs}, {"patience", tc->patience},
        {"seed", tc->seed},
    };
  }
  meta["metadata"] = md;
  const auto json_text = meta.dump();

  binary::ByteWriter w;
  w.bytes(std::string_view(kModelMagic, 4));
  w.u16(kModelVersion);
  w.u32(static_cast<std::uint32_t>(json_text.size()));
  w.bytes(json_text);
  for (const auto& l : model.net.layers()) {
    w.f32s(l.weight);
    w.f32s(l.bias);
  }
  return w.take();
}

MlpModel decode_model(std::string_view bytes, std::optional<std::size_t> expected_input_dim) {
  binary::ByteReader r(bytes, "model");
  if (r.remaining() < 4 || r.bytes(4) != std::string_view(kModelMagic, 4)) throw DataError("model: bad magic");
  if (const auto v = r.u16(); v != kModelVersion) {
    throw DataError("model: version mismatch (" + std::to_string(v) + ")");
  }
  const auto meta = nlohmann::json::parse(r.bytes(r.u32()), nullptr, false);
  if (meta.is_discarded() || !meta.is_object()) throw DataError("model: invalid header");

  MlpModel model;
  try {
    const auto& c = meta.at("config");
    model.config.input_dim = c.at("input_dim").get<std::size_t>();
    model.config.hidden_dims = c.at("hidden_dims").get<std::vector<std::size_t>>();
    model.config.output_dim = c.at("output_dim").get<std::size_t>();
    model.config.dropout_rate = c.at("dropout_rate").get<double>();
    model.config.seed = c.at("seed").get<std::uint64_t>();
    const auto& md = meta.at("metadata");
    model.metadata.epochs_run = md.at("epochs_run").get<std::size_t>();
    model.metadata.best_epoch = md.at("best_epoch").get<std::size_t>();
    model.metadata.best_dev_accuracy = md.at("best_dev_accuracy").get<double>();
    model.metadata.feature_variant = md.at("feature_variant").get<std::string>();
    if (md.contains("optimizer")) {
      const auto& o = md["optimizer"];
      TrainConfig tc;
      tc.learning_rate = o.at("learning_rate").get<double>();
      tc.weight_decay = o.at("weight_decay").get<double>();
      tc.beta1 = o.at("beta1").get<double>();
      tc.beta2 = o.at("beta2").get<double>();
      tc.epsilon = o.at("epsilon").get<double>();
      tc.batch_size = o.at("batch_size").get<std::size_t>();
      tc.max_epochs = o.at("max_epochs").get<std::size_t>();
      tc.patience = o.at("patience").get<std::size_t>();
      tc.seed = o.at("seed").get<std::uint64_t>();
      model.metadata.train_config = tc;
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("model: ") + e.what());
  }
  model.config.validate();
  if (expected_input_dim && *expected_input_dim != model.config.input_dim) {
    throw DataError("model: shape mismatch (input_dim " + std::to_string(model.config.input_dim) +
                    ", expected " + std::to_string(*expected_input_dim) + ")");
  }

  // Shapes come from the config; the blob must match them exactly.
  MlpConfig shape = model.config;
  model.net = Mlp<float>(shape);
  std::size_t expected = 0;
  for (const auto& l : model.net.layers()) expected += (l.weight.size() + l.bias.size()) * 4;
  if (r.remaining() != expected) {
    throw DataError("model: parameter payload is " + std::to_string(r.remaining()) + " bytes, shape needs " +
                    std::to_string(expected));
  }
  for (auto& l : model.net.layers()) {
    r.f32s(l.weight);
    r.f32s(l.bias);
  }
  for (const auto& l : model.net.layers()) {
    const auto finite = [](float v) { return std::isfinite(v); };
    if (!std::all_of(l.weight.begin(), l.weight.end(), finite) || !std::all_of(l.bias.begin(), l.bias.end(), finite)) {
      throw DataError("model: non-finite parameter");
    }
  }
  return model;
}

void save_model(const MlpModel& model, const std::filesystem::path& path) {
  io::write_file(path, encode_model(model));
}

MlpModel load_model(const std::filesystem::path& path, std::optional<std::size_t> expected_input_dim) {
  return decode_model(io::read_file(path), expected_input_dim);
}

}  // namespace mind::classifier
