#include <gtest/gtest.h>

#include <cmath>

#include "mind/classifier.hpp"
#include "mind/error.hpp"
#include "mind/eval.hpp"
#include "oracles.hpp"
#include "synthetic.hpp"

namespace mind::classifier {
namespace {

MlpConfig config(std::size_t in, std::uint64_t seed = 0) {
  MlpConfig c;
  c.input_dim = in;
  c.seed = seed;
  return c;
}

double l2(const Mlp<float>& net) {
  double s = 0;
  for (const auto& l : net.layers()) {
    for (float w : l.weight) s += double(w) * w;
    for (float b : l.bias) s += double(b) * b;
  }
  return std::sqrt(s);
}

TEST(Mlp, ShapeChain) {
  const auto m = init_model(config(4));
  const auto& ls = m.net.layers();
  ASSERT_EQ(ls.size(), 4u);
  const std::pair<std::size_t, std::size_t> shapes[] = {{4, 256}, {256, 128}, {128, 64}, {64, 2}};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(ls[i].in, shapes[i].first);
    EXPECT_EQ(ls[i].out, shapes[i].second);
    EXPECT_EQ(ls[i].weight.size(), shapes[i].first * shapes[i].second);
  }
}

TEST(Mlp, InitIsSeededFanInUniform) {
  const auto a = init_model(config(10, 1));
  const auto b = init_model(config(10, 1));
  const auto c = init_model(config(10, 2));
  EXPECT_EQ(encode_model(a), encode_model(b));
  EXPECT_NE(encode_model(a), encode_model(c));
  for (const auto& l : a.net.layers()) {
    const double bound = 1.0 / std::sqrt(double(l.in));
    for (float w : l.weight) EXPECT_LE(std::abs(w), bound);
    for (float v : l.bias) EXPECT_EQ(v, 0.0f);
  }
}

TEST(Mlp, ConfigValidation) {
  EXPECT_THROW(init_model(config(0)), DataError);
  auto c = config(3);
  c.dropout_rate = 1.0;
  EXPECT_THROW(init_model(c), DataError);
  c = config(3);
  c.output_dim = 3;
  EXPECT_THROW(init_model(c), DataError);
}

TEST(Mlp, ZeroModelGivesHalf) {
  auto m = init_model(config(6));
  for (auto& l : m.net.layers()) {
    std::fill(l.weight.begin(), l.weight.end(), 0.0f);
    std::fill(l.bias.begin(), l.bias.end(), 0.0f);
  }
  const std::vector<float> x{1, 2, 3, 4, 5, 6};
  EXPECT_EQ(predict(m, x), 0.5);
}

TEST(Mlp, EvalModeIsDeterministicAndInUnitInterval) {
  const auto m = init_model(config(8, 3));
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    std::vector<float> x(8);
    for (auto& v : x) v = float(normal(rng, 0, 3));
    const double p = forward(m, x, false);
    EXPECT_EQ(p, forward(m, x, false));
    EXPECT_GT(p, 0.0);
    EXPECT_LT(p, 1.0);
  }
}

TEST(Mlp, DropoutOnlyInTrainMode) {
  const auto m = init_model(config(8, 3));
  const std::vector<float> x(8, 1.0f);
  bool differs = false;
  for (std::uint64_t s = 0; s < 10; ++s) differs = differs || forward(m, x, true, s) != forward(m, x, false);
  EXPECT_TRUE(differs);
  EXPECT_EQ(forward(m, x, true, 4), forward(m, x, true, 4));
}

TEST(Mlp, InputErrors) {
  const auto m = init_model(config(3));
  EXPECT_THROW(predict(m, std::vector<float>{1, 2}), DataError);
  EXPECT_THROW(predict(m, std::vector<float>{1, NAN, 2}), NumericError);
  EXPECT_THROW(predict(m, std::vector<float>{1, INFINITY, 2}), NumericError);
}

TEST(Softmax, PairSumsToOne) {
  Rng rng(2);
  for (int i = 0; i < 1000; ++i) {
    const std::vector<double> logits{normal(rng, 0, 20), normal(rng, 0, 20)};
    const double p1 = Mlp<double>::positive_probability(logits);
    const std::vector<double> swapped{logits[1], logits[0]};
    EXPECT_NEAR(p1 + Mlp<double>::positive_probability(swapped), 1.0, 1e-12);
    EXPECT_TRUE(std::isfinite(Mlp<double>::loss_from_logits(logits, 1)));
  }
  const std::vector<double> extreme{-1000.0, 1000.0};
  EXPECT_EQ(Mlp<double>::loss_from_logits(extreme, 1), 0.0);
  EXPECT_NEAR(Mlp<double>::loss_from_logits(extreme, 0), 2000.0, 1e-9);
}

TEST(Loss, BceExamples) {
  EXPECT_NEAR(bce_loss(1, 1.0 - kProbabilityEpsilon), 0.0, 1e-6);
  EXPECT_NEAR(bce_loss(1, 0.5), std::log(2.0), 1e-12);
  EXPECT_NEAR(bce_loss(0, 0.2), -std::log(0.8), 1e-12);
  EXPECT_TRUE(std::isfinite(bce_loss(1, 0.0)));
  EXPECT_TRUE(std::isfinite(bce_loss(0, 1.0)));
  EXPECT_THROW(bce_loss(2, 0.5), DataError);
}

TEST(Loss, BceIsNonNegative) {
  for (int y = 0; y <= 1; ++y) {
    for (double p = 0.0; p <= 1.0; p += 0.01) EXPECT_GE(bce_loss(y, p), 0.0);
  }
}

TEST(Gradient, MatchesFiniteDifferencesSmallNet) {
  MlpConfig c;
  c.input_dim = 5;
  c.hidden_dims = {7, 6, 4};
  const auto r = testing::gradient_check(c, 50, 1e-6, 3);
  EXPECT_EQ(r.cases, 50u);
  EXPECT_LE(r.max_relative_error, 1e-5);
}

TEST(Gradient, MatchesFiniteDifferencesDefaultArchitecture) {
  const auto r = testing::gradient_check(config(8), 100, 1e-5, 11, 1e-4, 400);
  EXPECT_LE(r.max_relative_error, 1e-4);
}

TEST(Training, SeparableGaussians) {
  const auto ds = testing::gaussian_dataset(16, 1200, 0.5, 1);
  const auto [tr, dv] = datagen::split_dataset(ds, 0.8, 1);
  const auto res = train(init_model(config(16, 1)), tr, dv, TrainConfig{});
  EXPECT_GE(accuracy(res.model, dv), 0.99);
  EXPECT_GE(eval::roc_auc(predict_all(res.model, dv), dv.labels), 0.999);
  EXPECT_LE(res.model.metadata.epochs_run, 50u);
  EXPECT_EQ(res.history.size(), res.model.metadata.epochs_run);
  EXPECT_EQ(res.model.metadata.feature_variant, "last-last");
  ASSERT_TRUE(res.model.metadata.train_config.has_value());
}

TEST(Training, EarlyStopsAfterPatience) {
  const auto ds = testing::gaussian_dataset(4, 400, 0.3, 2);
  const auto [tr, dv] = datagen::split_dataset(ds, 0.8, 2);
  TrainConfig tc;
  tc.patience = 2;
  const auto res = train(init_model(config(4)), tr, dv, tc);
  EXPECT_EQ(res.model.metadata.epochs_run, res.model.metadata.best_epoch + 2);
  double best = 0;
  for (const auto& e : res.history) best = std::max(best, e.dev_accuracy);
  EXPECT_EQ(res.model.metadata.best_dev_accuracy, best);
  EXPECT_EQ(accuracy(res.model, dv), best);
}

TEST(Training, Deterministic) {
  const auto ds = testing::gaussian_dataset(6, 300, 1.0, 4);
  const auto [tr, dv] = datagen::split_dataset(ds, 0.8, 4);
  TrainConfig tc;
  tc.max_epochs = 3;
  EXPECT_EQ(encode_model(train(init_model(config(6)), tr, dv, tc).model),
            encode_model(train(init_model(config(6)), tr, dv, tc).model));
}

TEST(Training, WeightDecayShrinksNormWithoutSignal) {
  const auto ds = testing::gaussian_dataset(6, 200, 1.0, 5);
  auto zero_grad = ds;
  // All-zero features: only biases receive gradient, so weights just decay.
  std::fill(zero_grad.features.begin(), zero_grad.features.end(), 0.0f);
  auto m = init_model(config(6));
  TrainConfig tc;
  tc.weight_decay = 0.5;
  tc.learning_rate = 0.01;
  tc.max_epochs = 5;
  tc.patience = 5;
  const auto res = train(m, zero_grad, zero_grad, tc);
  double w_before = 0, w_after = 0;
  for (std::size_t i = 0; i < m.net.layers().size(); ++i) {
    for (float w : m.net.layers()[i].weight) w_before += double(w) * w;
    for (float w : res.model.net.layers()[i].weight) w_after += double(w) * w;
  }
  EXPECT_LT(w_after, w_before);
  EXPECT_GT(l2(m.net), 0.0);
}

TEST(Training, ShuffledLabelsStayNearChance) {
  const auto ds = testing::gaussian_dataset(16, 2000, 0.5, 6);
  const auto [tr, dv] = datagen::split_dataset(testing::shuffle_labels(ds, 1), 0.8, 6);
  const auto res = train(init_model(config(16)), tr, dv, TrainConfig{});
  EXPECT_GE(res.model.metadata.best_dev_accuracy, 0.40);
  EXPECT_LE(res.model.metadata.best_dev_accuracy, 0.60);
}

TEST(Training, InputErrors) {
  const auto ds = testing::gaussian_dataset(4, 20, 1.0, 1);
  EXPECT_THROW(train(init_model(config(5)), ds, ds, TrainConfig{}), DataError);
  EXPECT_THROW(train(init_model(config(4)), datagen::LabeledDataset{4, {}, {}, {}}, ds, TrainConfig{}), DataError);
  TrainConfig bad;
  bad.batch_size = 0;
  EXPECT_THROW(train(init_model(config(4)), ds, ds, bad), DataError);
}

TEST(ModelCodec, RoundTripAndErrors) {
  auto m = init_model(config(9, 5));
  m.metadata.best_dev_accuracy = 0.8125;
  m.metadata.train_config = TrainConfig{};
  const auto bytes = encode_model(m);
  const auto back = decode_model(bytes);
  EXPECT_EQ(back.config, m.config);
  EXPECT_EQ(encode_model(back), bytes);
  EXPECT_EQ(back.metadata.best_dev_accuracy, 0.8125);

  EXPECT_THROW(decode_model(bytes.substr(0, bytes.size() - 1)), DataError);
  EXPECT_THROW(decode_model(bytes + "x"), DataError);
  auto bad = bytes;
  bad[2] = '?';
  EXPECT_THROW(decode_model(bad), DataError);
  EXPECT_THROW(decode_model(bytes, 10), DataError);
  EXPECT_NO_THROW(decode_model(bytes, 9));
}

}  // namespace
}  // namespace mind::classifier
