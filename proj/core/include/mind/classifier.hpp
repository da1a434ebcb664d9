#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mind/datagen.hpp"
#include "mind/random.hpp"

// The hallucination classifier: a ReLU MLP ending in two logits, trained with
// binary cross-entropy on the positive-class softmax probability.
namespace mind::classifier {

struct MlpConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_dims{256, 128, 64};
  std::size_t output_dim = 2;
  double dropout_rate = 0.2;  // on the first hidden layer's activations
  std::uint64_t seed = 0;

  void validate() const;
  friend bool operator==(const MlpConfig&, const MlpConfig&) = default;
};

struct TrainConfig {
  double learning_rate = 5e-4;
  double weight_decay = 1e-5;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;  // epochs without dev-accuracy improvement
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;

  void validate() const;
};

inline constexpr double kProbabilityEpsilon = 1e-7;

// -[y log p + (1-y) log(1-p)] with p clamped to [eps, 1-eps].
double bce_loss(int y, double p);

// Fully connected layer; weight is out x in, row-major.
template <typename T>
struct Dense {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<T> weight;
  std::vector<T> bias;
};

template <typename T>
struct Workspace {
  std::vector<std::vector<T>> activations;  // [0] = input, [i+1] = output of layer i
  std::vector<std::vector<T>> pre;          // pre-activation of each layer
  std::vector<T> dropout_scale;             // per unit of layer 0; empty = no dropout
  std::vector<T> delta;
  std::vector<T> delta_prev;
};

template <typename T>
class Mlp {
 public:
  Mlp() = default;
  // Fan-in scaled uniform weights in [-1/sqrt(in), 1/sqrt(in)], zero biases.
  explicit Mlp(const MlpConfig& config);

  template <typename U>
  static Mlp from(const Mlp<U>& other);

  std::size_t input_dim() const { return layers_.front().in; }
  std::vector<Dense<T>>& layers() { return layers_; }
  const std::vector<Dense<T>>& layers() const { return layers_; }
  std::size_t parameter_count() const;

  // Leaves the two logits in ws.activations.back(). With `dropout` set, a
  // fresh inverted-dropout mask is drawn for the first hidden layer.
  void forward(std::span<const T> x, Workspace<T>& ws, Rng* dropout, double dropout_rate) const;

  // Cross-entropy of the two logits against `label`, computed stably.
  static T loss_from_logits(std::span<const T> logits, int label);
  static T positive_probability(std::span<const T> logits);

  // Adds d(loss)/d(params) for the last forward() into `grads` and returns
  // the loss.
  T backward(Workspace<T>& ws, int label, std::vector<Dense<T>>& grads) const;

  std::vector<Dense<T>> zero_gradients() const;

 private:
  std::vector<Dense<T>> layers_;
};

// Adaptive-moment optimizer with decoupled weight decay.
class AdamW {
 public:
  AdamW(const std::vector<Dense<float>>& shapes, const TrainConfig& cfg);
  // `grads` are already averaged over the batch.
  void step(std::vector<Dense<float>>& params, const std::vector<Dense<float>>& grads);

 private:
  TrainConfig cfg_;
  std::vector<Dense<float>> m_;
  std::vector<Dense<float>> v_;
  std::size_t t_ = 0;
};

struct TrainingMetadata {
  std::size_t epochs_run = 0;
  std::size_t best_epoch = 0;
  double best_dev_accuracy = 0.0;
  std::string feature_variant = "last-last";
  std::optional<TrainConfig> train_config;
};

struct MlpModel {
  MlpConfig config;
  Mlp<float> net;
  TrainingMetadata metadata;
};

MlpModel init_model(const MlpConfig& config);

// Positive-class (hallucination) probability. Throws DataError on a length
// mismatch and NumericError on non-finite input.
double forward(const MlpModel& model, std::span<const float> features, bool train_mode,
               std::uint64_t dropout_seed = 0);
double predict(const MlpModel& model, std::span<const float> features);
std::vector<double> predict_all(const MlpModel& model, const datagen::LabeledDataset& ds);
double accuracy(const MlpModel& model, const datagen::LabeledDataset& ds);

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double dev_accuracy = 0.0;
};

struct TrainResult {
  MlpModel model;  // best-dev-accuracy snapshot
  std::vector<EpochStats> history;
};

TrainResult train(const MlpModel& initial, const datagen::LabeledDataset& train_set,
                  const datagen::LabeledDataset& dev_set, const TrainConfig& cfg);

inline constexpr char kModelMagic[4] = {'M', 'N', 'D', 'M'};
inline constexpr std::uint16_t kModelVersion = 1;

std::string encode_model(const MlpModel& model);
// `expected_input_dim`, when given, must match the stored config.
MlpModel decode_model(std::string_view bytes, std::optional<std::size_t> expected_input_dim = std::nullopt);
void save_model(const MlpModel& model, const std::filesystem::path& path);
MlpModel load_model(const std::filesystem::path& path,
                    std::optional<std::size_t> expected_input_dim = std::nullopt);

}  // namespace mind::classifier
