#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "noisegate/audio.h"
#include "noisegate/features.h"

namespace noisegate {

struct DenseLayer {
  int inputs = 0;
  int outputs = 0;
  std::vector<double> weights;  // outputs x inputs, row-major
  std::vector<double> bias;

  bool operator==(const DenseLayer&) const = default;
};

// Feed-forward keyword classifier over flattened, per-coefficient
// standardized MFCCs: dense+ReLU hidden layers, softmax output.
struct Model {
  std::vector<DenseLayer> layers;
  std::vector<std::string> class_labels;
  FeatureConfig feature_config;
  int sample_rate_hz = kCanonicalRate;
  int clip_samples = kCanonicalRate;  // clips are padded/truncated to this
  std::vector<double> feature_mean;   // per MFCC coefficient
  std::vector<double> feature_scale;  // per MFCC coefficient, > 0

  // Glorot-uniform initialization drawn from `seed`.
  static Model create(const std::vector<int>& layer_dims,
                      std::vector<std::string> class_labels,
                      const FeatureConfig& feature_config, uint64_t seed);

  std::vector<int> layer_dims() const;
  int input_dim() const { return layers.empty() ? 0 : layers.front().inputs; }
  int num_classes() const { return static_cast<int>(class_labels.size()); }
  int frames() const;

  // Index of `label`; throws UnknownLabel.
  int label_index(std::string_view label) const;

  // Throws InvalidArgument when the dimension chain, labels, normalization or
  // parameters are inconsistent or non-finite.
  void validate() const;

  bool operator==(const Model&) const = default;
};

std::vector<double> softmax(std::span<const double> logits);

std::vector<double> forward(const Model& model, const FeatureMatrix& features);

struct Gradients {
  double loss = 0.0;
  std::vector<DenseLayer> layers;  // same shapes as the model, d loss / d param
  FeatureMatrix input;             // d loss / d (raw, unstandardized) feature
};

Gradients loss_and_gradient(const Model& model, const FeatureMatrix& features,
                            std::string_view label);
Gradients loss_and_gradient(const Model& model, const FeatureMatrix& features,
                            int label_index);

// Zero-pads or truncates to `samples`.
AudioClip fit_to_length(const AudioClip& clip, size_t samples);

// MFCCs of `clip` as the model consumes them (after fit_to_length).
FeatureMatrix model_features(const Model& model, const AudioClip& clip);

struct Prediction {
  std::string label;
  int index = 0;
  double score = 0.0;
  std::vector<double> probabilities;
};

// Argmax with ties broken by the lowest class index.
int argmax(std::span<const double> values);

Prediction predict(const Model& model, const AudioClip& clip);

struct LabeledClip {
  AudioClip clip;
  std::string label;
};

struct TrainConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  int epochs = 30;
  int batch_size = 32;
  uint64_t seed = 1;
  double validation_fraction = 0.1;
  std::vector<int> hidden = {128, 64};
  FeatureConfig feature_config;
};

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double validation_accuracy = 0.0;  // NaN when there is no validation split
};

struct TrainResult {
  Model model;
  std::vector<EpochStats> history;
  std::vector<size_t> validation_indices;  // into the training data
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Minibatch SGD with momentum on cross-entropy. The validation split is
// stratified per class; shuffling and initialization derive from cfg.seed so
// the result is bit-identical across runs.
TrainResult train(const std::vector<LabeledClip>& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {});

// One SGD-with-momentum step over a fixed set of feature matrices; exposed for
// optimizer sanity tests. Returns the mean loss before the update.
double sgd_step(Model& model, std::vector<DenseLayer>& velocity,
                const std::vector<FeatureMatrix>& features,
                const std::vector<int>& labels, double learning_rate, double momentum);

void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);
std::string serialize_model(const Model& model);
Model parse_model(std::string_view text);

}  // namespace noisegate
