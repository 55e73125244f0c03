#include "noisegate/classifier.h"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "noisegate/errors.h"
#include "noisegate/seed.h"

namespace noisegate {

namespace {

constexpr std::string_view kMagic = "MODELv1";

struct Activations {
  std::vector<std::vector<double>> inputs;  // input to each layer
  std::vector<std::vector<double>> pre;     // pre-activation of each layer
};

std::vector<double> standardize(const Model& model, const FeatureMatrix& f) {
  if (static_cast<int>(f.values.size()) != model.input_dim() ||
      f.cols != model.feature_config.num_coeffs) {
    throw ShapeMismatch("feature matrix " + std::to_string(f.rows) + "x" +
                        std::to_string(f.cols) + " does not match model input " +
                        std::to_string(model.input_dim()));
  }
  std::vector<double> x(f.values.size());
  for (int r = 0; r < f.rows; ++r) {
    for (int c = 0; c < f.cols; ++c) {
      x[static_cast<size_t>(r) * f.cols + c] =
          (f.at(r, c) - model.feature_mean[c]) / model.feature_scale[c];
    }
  }
  return x;
}

std::vector<double> logits_of(const Model& model, std::vector<double> h,
                              Activations* acts) {
  for (size_t l = 0; l < model.layers.size(); ++l) {
    const DenseLayer& layer = model.layers[l];
    std::vector<double> z(layer.bias);
    for (int o = 0; o < layer.outputs; ++o) {
      const double* w = &layer.weights[static_cast<size_t>(o) * layer.inputs];
      double acc = 0.0;
      for (int i = 0; i < layer.inputs; ++i) acc += w[i] * h[i];
      z[o] += acc;
    }
    if (acts) {
      acts->inputs.push_back(h);
      acts->pre.push_back(z);
    }
    if (l + 1 < model.layers.size()) {
      for (double& v : z) v = std::max(v, 0.0);
    }
    h = std::move(z);
  }
  return h;
}

std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

Model Model::create(const std::vector<int>& dims, std::vector<std::string> labels,
                    const FeatureConfig& feature_config, uint64_t seed) {
  if (dims.size() < 2) throw InvalidArgument("a model needs at least two dimensions");
  Model m;
  m.class_labels = std::move(labels);
  m.feature_config = feature_config;
  m.feature_mean.assign(feature_config.num_coeffs, 0.0);
  m.feature_scale.assign(feature_config.num_coeffs, 1.0);
  Rng rng(seed);
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    DenseLayer layer;
    layer.inputs = dims[l];
    layer.outputs = dims[l + 1];
    const double r = std::sqrt(6.0 / (layer.inputs + layer.outputs));
    std::uniform_real_distribution<double> draw(-r, r);
    layer.weights.resize(static_cast<size_t>(layer.inputs) * layer.outputs);
    for (double& w : layer.weights) w = draw(rng);
    layer.bias.assign(layer.outputs, 0.0);
    m.layers.push_back(std::move(layer));
  }
  m.validate();
  return m;
}

std::vector<int> Model::layer_dims() const {
  std::vector<int> dims;
  if (layers.empty()) return dims;
  dims.push_back(layers.front().inputs);
  for (const auto& l : layers) dims.push_back(l.outputs);
  return dims;
}

int Model::frames() const {
  const auto& x = extractor_for(feature_config, sample_rate_hz);
  return frame_count(clip_samples, x.frame_length(), x.hop_length());
}

int Model::label_index(std::string_view label) const {
  for (size_t i = 0; i < class_labels.size(); ++i) {
    if (class_labels[i] == label) return static_cast<int>(i);
  }
  throw UnknownLabel("label '" + std::string(label) + "' is not in the model vocabulary");
}

void Model::validate() const {
  if (layers.empty()) throw InvalidArgument("model has no layers");
  if (class_labels.empty()) throw InvalidArgument("model has no class labels");
  std::set<std::string> seen(class_labels.begin(), class_labels.end());
  if (seen.size() != class_labels.size()) throw InvalidArgument("class labels must be distinct");
  for (const auto& label : class_labels) {
    if (label.empty()) throw InvalidArgument("class labels must be non-empty");
    if (label.find_first_of(" \t\r\n") != std::string::npos) {
      throw InvalidArgument("class labels must not contain whitespace");
    }
  }
  for (size_t l = 0; l < layers.size(); ++l) {
    const auto& layer = layers[l];
    if (layer.inputs < 1 || layer.outputs < 1 ||
        layer.weights.size() != static_cast<size_t>(layer.inputs) * layer.outputs ||
        layer.bias.size() != static_cast<size_t>(layer.outputs)) {
      throw InvalidArgument("layer " + std::to_string(l) + " has inconsistent shape");
    }
    if (l > 0 && layers[l - 1].outputs != layer.inputs) {
      throw InvalidArgument("dimension chain broken at layer " + std::to_string(l));
    }
    auto finite = [](double v) { return std::isfinite(v); };
    if (!std::all_of(layer.weights.begin(), layer.weights.end(), finite) ||
        !std::all_of(layer.bias.begin(), layer.bias.end(), finite)) {
      throw InvalidArgument("layer " + std::to_string(l) + " has non-finite parameters");
    }
  }
  if (layers.back().outputs != num_classes()) {
    throw InvalidArgument("output width does not match the label count");
  }
  if (static_cast<int>(feature_mean.size()) != feature_config.num_coeffs ||
      static_cast<int>(feature_scale.size()) != feature_config.num_coeffs) {
    throw InvalidArgument("normalization vectors must have num_coeffs entries");
  }
  for (double s : feature_scale) {
    if (!(s > 0.0) || !std::isfinite(s)) throw InvalidArgument("feature scales must be positive");
  }
  if (input_dim() % feature_config.num_coeffs != 0) {
    throw InvalidArgument("input dimension is not a whole number of frames");
  }
}

std::vector<double> softmax(std::span<const double> logits) {
  const double hi = *std::max_element(logits.begin(), logits.end());
  std::vector<double> p(logits.size());
  double sum = 0.0;
  for (size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - hi);
    sum += p[i];
  }
  for (double& v : p) v /= sum;
  return p;
}

std::vector<double> forward(const Model& model, const FeatureMatrix& features) {
  return softmax(logits_of(model, standardize(model, features), nullptr));
}

Gradients loss_and_gradient(const Model& model, const FeatureMatrix& features,
                            std::string_view label) {
  return loss_and_gradient(model, features, model.label_index(label));
}

namespace {

std::vector<DenseLayer> zeros_like(const Model& model) {
  std::vector<DenseLayer> out;
  for (const auto& l : model.layers) {
    out.push_back(DenseLayer{l.inputs, l.outputs, std::vector<double>(l.weights.size(), 0.0),
                             std::vector<double>(l.bias.size(), 0.0)});
  }
  return out;
}

// Adds d loss / d params into `acc` and returns the loss. The gradient w.r.t.
// the standardized input is left in `input_grad` when requested.
double accumulate_gradient(const Model& model, const FeatureMatrix& features, int label,
                           std::vector<DenseLayer>& acc, std::vector<double>* input_grad) {
  if (label < 0 || label >= model.num_classes()) {
    throw UnknownLabel("label index " + std::to_string(label) + " out of range");
  }
  Activations acts;
  const auto logits = logits_of(model, standardize(model, features), &acts);
  const double hi = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - hi);
  const double log_z = hi + std::log(sum);

  std::vector<double> delta(logits.size());
  for (size_t i = 0; i < delta.size(); ++i) delta[i] = std::exp(logits[i] - log_z);
  delta[label] -= 1.0;

  for (size_t li = model.layers.size(); li-- > 0;) {
    const DenseLayer& layer = model.layers[li];
    const auto& in = acts.inputs[li];
    DenseLayer& gl = acc[li];
    const bool need_back = li > 0 || input_grad != nullptr;
    std::vector<double> back(need_back ? layer.inputs : 0, 0.0);
    for (int o = 0; o < layer.outputs; ++o) {
      const double d = delta[o];
      gl.bias[o] += d;
      if (d == 0.0) continue;
      double* gw = &gl.weights[static_cast<size_t>(o) * layer.inputs];
      const double* w = &layer.weights[static_cast<size_t>(o) * layer.inputs];
      for (int i = 0; i < layer.inputs; ++i) gw[i] += d * in[i];
      if (need_back) {
        for (int i = 0; i < layer.inputs; ++i) back[i] += d * w[i];
      }
    }
    if (li > 0) {
      const auto& pre = acts.pre[li - 1];
      for (int i = 0; i < layer.inputs; ++i) {
        if (pre[i] <= 0.0) back[i] = 0.0;
      }
    }
    delta = std::move(back);
  }
  if (input_grad) *input_grad = std::move(delta);
  return log_z - logits[label];
}

}  // namespace

Gradients loss_and_gradient(const Model& model, const FeatureMatrix& features,
                            int label) {
  Gradients g;
  g.layers = zeros_like(model);
  std::vector<double> input;
  g.loss = accumulate_gradient(model, features, label, g.layers, &input);
  g.input = FeatureMatrix{features.rows, features.cols, std::move(input)};
  for (int r = 0; r < features.rows; ++r) {
    for (int c = 0; c < features.cols; ++c) g.input.at(r, c) /= model.feature_scale[c];
  }
  return g;
}

AudioClip fit_to_length(const AudioClip& clip, size_t samples) {
  std::vector<int16_t> out(samples, 0);
  const size_t n = std::min(samples, clip.size());
  std::copy_n(clip.samples().begin(), n, out.begin());
  return AudioClip(std::move(out), clip.sample_rate_hz());
}

FeatureMatrix model_features(const Model& model, const AudioClip& clip) {
  if (clip.sample_rate_hz() != model.sample_rate_hz) {
    throw InvalidArgument("clip sample rate " + std::to_string(clip.sample_rate_hz()) +
                          " differs from the model's " +
                          std::to_string(model.sample_rate_hz));
  }
  const AudioClip fitted = fit_to_length(clip, static_cast<size_t>(model.clip_samples));
  return extractor_for(model.feature_config, model.sample_rate_hz)
      .mfcc(to_unit_scale(fitted));
}

int argmax(std::span<const double> values) {
  int best = 0;
  for (size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[best]) best = static_cast<int>(i);
  }
  return best;
}

Prediction predict(const Model& model, const AudioClip& clip) {
  Prediction p;
  p.probabilities = forward(model, model_features(model, clip));
  p.index = argmax(p.probabilities);
  p.label = model.class_labels[p.index];
  p.score = p.probabilities[p.index];
  return p;
}

double sgd_step(Model& model, std::vector<DenseLayer>& velocity,
                const std::vector<FeatureMatrix>& features,
                const std::vector<int>& labels, double learning_rate, double momentum) {
  if (features.empty() || features.size() != labels.size()) {
    throw InvalidArgument("sgd_step needs matching non-empty batches");
  }
  if (velocity.empty()) velocity = zeros_like(model);
  std::vector<DenseLayer> sum = zeros_like(model);
  double loss = 0.0;
  for (size_t i = 0; i < features.size(); ++i) {
    loss += accumulate_gradient(model, features[i], labels[i], sum, nullptr);
  }
  const double inv = 1.0 / static_cast<double>(features.size());
  for (size_t l = 0; l < sum.size(); ++l) {
    auto update = [&](std::vector<double>& param, std::vector<double>& vel,
                      const std::vector<double>& grad) {
      for (size_t k = 0; k < param.size(); ++k) {
        vel[k] = momentum * vel[k] - learning_rate * grad[k] * inv;
        param[k] += vel[k];
      }
    };
    update(model.layers[l].weights, velocity[l].weights, sum[l].weights);
    update(model.layers[l].bias, velocity[l].bias, sum[l].bias);
  }
  return loss * inv;
}

TrainResult train(const std::vector<LabeledClip>& data, const TrainConfig& cfg,
                  const EpochCallback& on_epoch) {
  if (!(cfg.learning_rate > 0.0)) throw InvalidArgument("learning rate must be positive");
  if (cfg.validation_fraction < 0.0 || cfg.validation_fraction >= 1.0) {
    throw InvalidArgument("validation fraction must lie in [0, 1)");
  }
  if (cfg.epochs < 0 || cfg.batch_size < 1) throw InvalidArgument("bad epochs/batch size");

  // Labels in order of first appearance.
  std::vector<std::string> labels;
  std::map<std::string, int> index_of;
  std::vector<int> y;
  for (const auto& item : data) {
    auto [it, inserted] = index_of.emplace(item.label, static_cast<int>(labels.size()));
    if (inserted) labels.push_back(item.label);
    y.push_back(it->second);
  }
  if (labels.size() < 2) throw InvalidArgument("training needs at least two classes");

  Model probe;
  probe.feature_config = cfg.feature_config;
  const int frames = probe.frames();
  if (frames == 0) throw InvalidArgument("clip length shorter than one analysis frame");
  const int input_dim = frames * cfg.feature_config.num_coeffs;

  std::vector<int> dims{input_dim};
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(static_cast<int>(labels.size()));

  TrainResult result{Model::create(dims, labels, cfg.feature_config,
                                   derive_seed(cfg.seed, "train/init")),
                     {},
                     {}};
  Model& model = result.model;

  std::vector<FeatureMatrix> features;
  features.reserve(data.size());
  for (const auto& item : data) features.push_back(model_features(model, item.clip));

  // Stratified split.
  Rng split_rng(derive_seed(cfg.seed, "train/split"));
  std::vector<size_t> train_idx;
  for (int c = 0; c < static_cast<int>(labels.size()); ++c) {
    std::vector<size_t> members;
    for (size_t i = 0; i < y.size(); ++i) {
      if (y[i] == c) members.push_back(i);
    }
    std::shuffle(members.begin(), members.end(), split_rng);
    const size_t n_val = static_cast<size_t>(std::floor(cfg.validation_fraction * members.size()));
    result.validation_indices.insert(result.validation_indices.end(), members.begin(),
                                     members.begin() + n_val);
    train_idx.insert(train_idx.end(), members.begin() + n_val, members.end());
  }
  std::sort(train_idx.begin(), train_idx.end());
  std::sort(result.validation_indices.begin(), result.validation_indices.end());

  // Per-coefficient standardization over the training split.
  const int coeffs = cfg.feature_config.num_coeffs;
  std::vector<double> sum(coeffs, 0.0), sum_sq(coeffs, 0.0);
  double count = 0.0;
  for (size_t i : train_idx) {
    const auto& f = features[i];
    for (int r = 0; r < f.rows; ++r) {
      for (int c = 0; c < coeffs; ++c) {
        sum[c] += f.at(r, c);
        sum_sq[c] += f.at(r, c) * f.at(r, c);
      }
    }
    count += f.rows;
  }
  for (int c = 0; c < coeffs; ++c) {
    const double mean = sum[c] / count;
    const double var = std::max(sum_sq[c] / count - mean * mean, 0.0);
    model.feature_mean[c] = mean;
    model.feature_scale[c] = std::sqrt(var) > 1e-8 ? std::sqrt(var) : 1.0;
  }

  auto accuracy = [&](const std::vector<size_t>& idx) {
    if (idx.empty()) return std::numeric_limits<double>::quiet_NaN();
    size_t correct = 0;
    for (size_t i : idx) correct += argmax(forward(model, features[i])) == y[i];
    return static_cast<double>(correct) / static_cast<double>(idx.size());
  };

  Rng shuffle_rng(derive_seed(cfg.seed, "train/shuffle"));
  std::vector<DenseLayer> velocity;
  std::vector<FeatureMatrix> batch_x;
  std::vector<int> batch_y;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<size_t> order = train_idx;
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    double loss_sum = 0.0;
    for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const size_t end = std::min(order.size(), start + cfg.batch_size);
      batch_x.clear();
      batch_y.clear();
      for (size_t k = start; k < end; ++k) {
        batch_x.push_back(features[order[k]]);
        batch_y.push_back(y[order[k]]);
      }
      loss_sum += sgd_step(model, velocity, batch_x, batch_y, cfg.learning_rate,
                           cfg.momentum) *
                  static_cast<double>(end - start);
    }
    EpochStats stats{epoch, loss_sum / static_cast<double>(std::max<size_t>(1, order.size())),
                     accuracy(train_idx), accuracy(result.validation_indices)};
    result.history.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  model.validate();
  return result;
}

std::string serialize_model(const Model& model) {
  model.validate();
  std::ostringstream os;
  os << kMagic << '\n';
  os << "dims";
  for (int d : model.layer_dims()) os << ' ' << d;
  os << '\n';
  os << "labels " << model.class_labels.size();
  for (const auto& l : model.class_labels) os << ' ' << l;
  os << '\n';
  const auto& f = model.feature_config;
  os << "features " << f.frame_ms << ' ' << f.hop_ms << ' ' << f.fft_size << ' '
     << f.mel_filters << ' ' << f.num_coeffs << ' ' << format_double(f.log_floor) << ' '
     << format_double(f.pre_emphasis) << '\n';
  os << "audio " << model.sample_rate_hz << ' ' << model.clip_samples << '\n';
  os << "mean";
  for (double v : model.feature_mean) os << ' ' << format_double(v);
  os << "\nscale";
  for (double v : model.feature_scale) os << ' ' << format_double(v);
  os << "\nparams\n";
  for (const auto& layer : model.layers) {
    for (int o = 0; o < layer.outputs; ++o) {
      for (int i = 0; i < layer.inputs; ++i) {
        os << format_double(layer.weights[static_cast<size_t>(o) * layer.inputs + i])
           << (i + 1 < layer.inputs ? ' ' : '\n');
      }
    }
    for (int o = 0; o < layer.outputs; ++o) {
      os << format_double(layer.bias[o]) << (o + 1 < layer.outputs ? ' ' : '\n');
    }
  }
  os << "end\n";
  return os.str();
}

namespace {

class Tokens {
 public:
  explicit Tokens(std::string_view text) : text_(text) {}

  std::string_view next() {
    while (pos_ < text_.size() && std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    if (pos_ >= text_.size()) throw CorruptModel("model file ends unexpectedly");
    const size_t start = pos_;
    while (pos_ < text_.size() && !std::isspace(static_cast<unsigned char>(text_[pos_]))) ++pos_;
    return text_.substr(start, pos_ - start);
  }

  void expect(std::string_view word) {
    const auto got = next();
    if (got != word) {
      throw CorruptModel("expected '" + std::string(word) + "' but found '" +
                         std::string(got) + "'");
    }
  }

  template <class T>
  T number() {
    const auto tok = next();
    T v{};
    const auto res = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (res.ec != std::errc() || res.ptr != tok.data() + tok.size()) {
      throw CorruptModel("malformed number '" + std::string(tok) + "'");
    }
    return v;
  }

 private:
  std::string_view text_;
  size_t pos_ = 0;
};

}  // namespace

Model parse_model(std::string_view text) {
  Tokens tok(text);
  const auto magic = tok.next();
  if (magic != kMagic) {
    if (magic.starts_with("MODELv")) {
      throw VersionMismatch("unsupported model version '" + std::string(magic) + "'");
    }
    throw CorruptModel("not a model file");
  }
  tok.expect("dims");
  // The dims line is terminated by the "labels" keyword.
  std::vector<int> dims;
  while (true) {
    const auto t = tok.next();
    if (t == "labels") break;
    int v = 0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (res.ec != std::errc() || v < 1) throw CorruptModel("bad dimension '" + std::string(t) + "'");
    dims.push_back(v);
  }
  if (dims.size() < 2) throw CorruptModel("model needs at least two dimensions");
  Model m;
  const int n_labels = tok.number<int>();
  if (n_labels < 1) throw CorruptModel("bad label count");
  for (int i = 0; i < n_labels; ++i) m.class_labels.emplace_back(tok.next());
  tok.expect("features");
  auto& f = m.feature_config;
  f.frame_ms = tok.number<int>();
  f.hop_ms = tok.number<int>();
  f.fft_size = tok.number<int>();
  f.mel_filters = tok.number<int>();
  f.num_coeffs = tok.number<int>();
  f.log_floor = tok.number<double>();
  f.pre_emphasis = tok.number<double>();
  tok.expect("audio");
  m.sample_rate_hz = tok.number<int>();
  m.clip_samples = tok.number<int>();
  if (f.num_coeffs < 1 || f.num_coeffs > 4096) throw CorruptModel("bad coefficient count");
  tok.expect("mean");
  for (int c = 0; c < f.num_coeffs; ++c) m.feature_mean.push_back(tok.number<double>());
  tok.expect("scale");
  for (int c = 0; c < f.num_coeffs; ++c) m.feature_scale.push_back(tok.number<double>());
  tok.expect("params");
  for (size_t l = 0; l + 1 < dims.size(); ++l) {
    DenseLayer layer;
    layer.inputs = dims[l];
    layer.outputs = dims[l + 1];
    layer.weights.resize(static_cast<size_t>(layer.inputs) * layer.outputs);
    for (double& w : layer.weights) w = tok.number<double>();
    layer.bias.resize(layer.outputs);
    for (double& b : layer.bias) b = tok.number<double>();
    m.layers.push_back(std::move(layer));
  }
  tok.expect("end");
  try {
    m.validate();
  } catch (const InvalidArgument& e) {
    throw CorruptModel(std::string("inconsistent model: ") + e.what());
  }
  return m;
}

void save_model(const Model& model, const std::filesystem::path& path) {
  const std::string text = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileNotFound("cannot open model " + path.string());
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return parse_model(text);
}

}  // namespace noisegate
