#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "noisegate/classifier.h"
#include "noisegate/errors.h"
#include "test_util.h"

namespace noisegate {
namespace {

using testing::random_clip;

FeatureConfig small_config() {
  FeatureConfig f;
  f.num_coeffs = 3;
  return f;
}

FeatureMatrix random_features(int rows, int cols, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.5);
  FeatureMatrix f{rows, cols, std::vector<double>(static_cast<size_t>(rows) * cols)};
  for (auto& v : f.values) v = n(rng);
  return f;
}

Model random_small_model(uint64_t seed, int classes, std::vector<int> hidden, int rows) {
  const auto cfg = small_config();
  std::vector<int> dims{rows * cfg.num_coeffs};
  dims.insert(dims.end(), hidden.begin(), hidden.end());
  dims.push_back(classes);
  std::vector<std::string> labels;
  for (int c = 0; c < classes; ++c) labels.push_back("c" + std::to_string(c));
  Model m = Model::create(dims, labels, cfg, seed);
  std::mt19937_64 rng(seed + 1);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto& l : m.layers) {
    for (auto& b : l.bias) b = u(rng);
  }
  for (int c = 0; c < cfg.num_coeffs; ++c) {
    m.feature_mean[c] = u(rng);
    m.feature_scale[c] = 0.5 + std::fabs(u(rng));
  }
  return m;
}

double relative_error(double a, double b) {
  const double scale = std::max(std::fabs(a), std::fabs(b));
  if (scale < 1e-8) return std::fabs(a - b);
  return std::fabs(a - b) / scale;
}

TEST(Softmax, NormalizedForExtremeLogits) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(-800, 800);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> z(7);
    for (auto& v : z) v = u(rng);
    const auto p = softmax(z);
    double s = 0;
    for (double v : p) {
      ASSERT_TRUE(std::isfinite(v));
      s += v;
    }
    ASSERT_NEAR(s, 1.0, 1e-9);
  }
}

TEST(Forward, ZeroWeightsGiveUniform) {
  Model m = random_small_model(2, 5, {4}, 6);
  for (auto& l : m.layers) {
    std::fill(l.weights.begin(), l.weights.end(), 0.0);
    std::fill(l.bias.begin(), l.bias.end(), 0.0);
  }
  std::mt19937_64 rng(3);
  const auto p = forward(m, random_features(6, 3, rng));
  for (double v : p) EXPECT_NEAR(v, 0.2, 1e-12);
  EXPECT_NEAR(loss_and_gradient(m, random_features(6, 3, rng), 3).loss, std::log(5.0), 1e-9);
}

TEST(Forward, ShapeMismatch) {
  const Model m = random_small_model(2, 3, {4}, 6);
  std::mt19937_64 rng(3);
  EXPECT_THROW(forward(m, random_features(5, 3, rng)), ShapeMismatch);
  EXPECT_THROW(forward(m, random_features(9, 2, rng)), ShapeMismatch);
}

TEST(LossAndGradient, UnknownLabel) {
  const Model m = random_small_model(2, 3, {4}, 6);
  std::mt19937_64 rng(3);
  EXPECT_THROW(loss_and_gradient(m, random_features(6, 3, rng), "nope"), UnknownLabel);
  EXPECT_THROW(loss_and_gradient(m, random_features(6, 3, rng), 3), UnknownLabel);
}

TEST(LossAndGradient, MatchesCentralDifferences) {
  const double eps = 1e-4;
  for (uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed * 7 + 5);
    const int rows = 2 + static_cast<int>(seed % 4);
    const int classes = 2 + static_cast<int>(seed % 5);
    Model m = random_small_model(seed, classes, {5 + static_cast<int>(seed % 3), 4}, rows);
    const auto f = random_features(rows, 3, rng);
    const int label = static_cast<int>(seed % classes);
    const auto g = loss_and_gradient(m, f, label);
    auto loss_at = [&](const Model& mm, const FeatureMatrix& ff) {
      return loss_and_gradient(mm, ff, label).loss;
    };
    for (size_t l = 0; l < m.layers.size(); ++l) {
      for (auto* pair : {&m.layers[l].weights, &m.layers[l].bias}) {
        const bool is_w = pair == &m.layers[l].weights;
        for (size_t k = 0; k < pair->size(); ++k) {
          const double orig = (*pair)[k];
          (*pair)[k] = orig + eps;
          const double up = loss_at(m, f);
          (*pair)[k] = orig - eps;
          const double down = loss_at(m, f);
          (*pair)[k] = orig;
          const double fd = (up - down) / (2 * eps);
          const double an = is_w ? g.layers[l].weights[k] : g.layers[l].bias[k];
          ASSERT_LT(relative_error(an, fd), 1e-4)
              << "seed " << seed << " layer " << l << (is_w ? " w" : " b") << k;
        }
      }
    }
    for (size_t k = 0; k < f.values.size(); ++k) {
      auto up = f, down = f;
      up.values[k] += eps;
      down.values[k] -= eps;
      const double fd = (loss_at(m, up) - loss_at(m, down)) / (2 * eps);
      ASSERT_LT(relative_error(g.input.values[k], fd), 1e-4) << "seed " << seed << " input " << k;
    }
  }
}

TEST(Predict, UntrainedSymmetricModelPicksIndexZero) {
  Model m = Model::create({98 * 13, 8, 4}, {"a", "b", "c", "d"}, FeatureConfig{}, 1);
  for (auto& l : m.layers) std::fill(l.weights.begin(), l.weights.end(), 0.0);
  const auto p = predict(m, random_clip(1));
  EXPECT_EQ(p.index, 0);
  EXPECT_EQ(p.label, "a");
  EXPECT_NEAR(p.score, 0.25, 1e-12);
}

TEST(Predict, PadsAndTruncates) {
  const Model m = Model::create({98 * 13, 8, 3}, {"a", "b", "c"}, FeatureConfig{}, 4);
  const auto clip = random_clip(2, 12000);
  std::vector<int16_t> padded(clip.samples().begin(), clip.samples().end());
  padded.resize(16000, 0);
  EXPECT_EQ(predict(m, clip).probabilities, predict(m, AudioClip(padded)).probabilities);
  auto longer = padded;
  longer.resize(20000, 1234);
  EXPECT_EQ(predict(m, AudioClip(longer)).probabilities,
            predict(m, AudioClip(padded)).probabilities);
  EXPECT_THROW(predict(m, AudioClip(padded, 8000)), InvalidArgument);
}

TEST(Model, ValidateRejectsBadModels) {
  EXPECT_THROW(Model::create({12, 4, 2}, {"a", "a"}, small_config(), 1), InvalidArgument);
  EXPECT_THROW(Model::create({12, 4, 2}, {"a", "b c"}, small_config(), 1), InvalidArgument);
  EXPECT_THROW(Model::create({12, 4, 3}, {"a", "b"}, small_config(), 1), InvalidArgument);
  EXPECT_THROW(Model::create({13, 4, 2}, {"a", "b"}, small_config(), 1), InvalidArgument);
  Model m = Model::create({12, 4, 2}, {"a", "b"}, small_config(), 1);
  m.layers[0].weights[0] = std::nan("");
  EXPECT_THROW(m.validate(), InvalidArgument);
}

TEST(SgdStep, OverfitsOneExample) {
  Model m = random_small_model(9, 4, {8, 6}, 4);
  std::mt19937_64 rng(10);
  const std::vector<FeatureMatrix> x{random_features(4, 3, rng)};
  const std::vector<int> y{2};
  std::vector<DenseLayer> vel;
  for (int i = 0; i < 3000; ++i) sgd_step(m, vel, x, y, 0.05, 0.9);
  EXPECT_LE(loss_and_gradient(m, x[0], 2).loss, 1e-6);
}

TEST(SgdStep, SmallLearningRateNeverIncreasesLoss) {
  Model m = random_small_model(11, 3, {8, 6}, 4);
  std::mt19937_64 rng(12);
  std::vector<FeatureMatrix> x;
  std::vector<int> y;
  for (int i = 0; i < 16; ++i) {
    x.push_back(random_features(4, 3, rng));
    y.push_back(i % 3);
  }
  std::vector<DenseLayer> vel;
  double last = sgd_step(m, vel, x, y, 1e-4, 0.0);
  for (int i = 0; i < 50; ++i) {
    const double loss = sgd_step(m, vel, x, y, 1e-4, 0.0);
    ASSERT_LE(loss, last + 1e-12);
    last = loss;
  }
}

std::vector<LabeledClip> tiny_corpus() {
  std::vector<LabeledClip> data;
  const char* labels[] = {"yes", "no", "up", "down", "left"};
  for (int i = 0; i < 10; ++i) {
    data.push_back({testing::tone(300 + 150 * (i % 5) + 7 * i, 3000 + 500 * i), labels[i % 5]});
  }
  return data;
}

TEST(Train, MemorizesTenExamples) {
  TrainConfig cfg;
  cfg.epochs = 150;
  cfg.batch_size = 5;
  cfg.validation_fraction = 0.0;
  cfg.learning_rate = 0.01;
  const auto data = tiny_corpus();
  const auto result = train(data, cfg);
  EXPECT_EQ(result.history.size(), 150u);
  EXPECT_DOUBLE_EQ(result.history.back().train_accuracy, 1.0);
  EXPECT_TRUE(std::isnan(result.history.back().validation_accuracy));
  for (const auto& item : data) EXPECT_EQ(predict(result.model, item.clip).label, item.label);
  EXPECT_EQ(result.model.class_labels,
            (std::vector<std::string>{"yes", "no", "up", "down", "left"}));
}

TEST(Train, BitIdenticalForFixedSeed) {
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.validation_fraction = 0.0;
  const auto data = tiny_corpus();
  EXPECT_EQ(train(data, cfg).model, train(data, cfg).model);
  auto other = cfg;
  other.seed = 2;
  EXPECT_NE(train(data, cfg).model, train(data, other).model);
}

TEST(Train, RejectsBadInput) {
  TrainConfig cfg;
  auto data = tiny_corpus();
  data.erase(data.begin() + 2, data.end());
  data[1].label = data[0].label;
  EXPECT_THROW(train(data, cfg), InvalidArgument);
  cfg.validation_fraction = 1.0;
  EXPECT_THROW(train(tiny_corpus(), cfg), InvalidArgument);
  cfg.validation_fraction = 0.1;
  cfg.learning_rate = 0.0;
  EXPECT_THROW(train(tiny_corpus(), cfg), InvalidArgument);
}

TEST(Serialization, RoundTripIsExact) {
  testing::TempDir dir("model");
  Model m = Model::create({98 * 13, 16, 8, 3}, {"zeta", "alpha", "mid"}, FeatureConfig{}, 7);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0, 1);
  for (int c = 0; c < 13; ++c) {
    m.feature_mean[c] = n(rng) * 1e3;
    m.feature_scale[c] = std::fabs(n(rng)) + 1e-3;
  }
  save_model(m, dir / "m.txt");
  const Model back = load_model(dir / "m.txt");
  EXPECT_EQ(back, m);
  EXPECT_EQ(back.class_labels, m.class_labels);
  for (uint64_t s = 0; s < 100; ++s) {
    const auto clip = random_clip(s, 16000, 1 + static_cast<int>(s * 300));
    ASSERT_EQ(predict(back, clip).probabilities, predict(m, clip).probabilities);
  }
}

TEST(Serialization, Errors) {
  testing::TempDir dir("model");
  const Model m = Model::create({12, 4, 2}, {"a", "b"}, small_config(), 3);
  const std::string text = serialize_model(m);
  EXPECT_EQ(text.rfind("MODELv1", 0), 0u);
  EXPECT_EQ(parse_model(text), m);

  std::string v2 = text;
  v2.replace(0, 7, "MODELv2");
  EXPECT_THROW(parse_model(v2), VersionMismatch);
  EXPECT_THROW(parse_model("garbage"), CorruptModel);
  for (size_t cut : {text.size() / 4, text.size() / 2, text.size() - 5}) {
    EXPECT_THROW(parse_model(text.substr(0, cut)), CorruptModel) << cut;
  }
  EXPECT_THROW(load_model(dir / "none.txt"), FileNotFound);
}

}  // namespace
}  // namespace noisegate
