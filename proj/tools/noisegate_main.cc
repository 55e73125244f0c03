// noisegate: command-line front end for the attack / defense / detection
// toolkit. Every subcommand accepts --config <json>; explicit flags override
// values from the file.

#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "noisegate/audio.h"
#include "noisegate/classifier.h"
#include "noisegate/detection.h"
#include "noisegate/errors.h"
#include "noisegate/features.h"
#include "noisegate/harness.h"
#include "noisegate/metrics.h"
#include "noisegate/recognition.h"
#include "noisegate/seed.h"
#include "noisegate/transforms.h"

namespace ng = noisegate;
using nlohmann::json;

namespace {

// Binds CLI options to config-file keys. A value from the file is applied only
// when the flag was not given on the command line.
class Binder {
 public:
  template <typename T>
  CLI::Option* add(CLI::App* app, const std::string& flag, const std::string& key, T& value,
                   const std::string& help) {
    CLI::Option* opt = app->add_option(flag, value, help)->capture_default_str();
    merges_[app].push_back([opt, key, &value](const json& section) {
      if (opt->count() == 0 && section.contains(key)) value = section.at(key).get<T>();
    });
    return opt;
  }

  CLI::Option* flag(CLI::App* app, const std::string& flag, const std::string& key, bool& value,
                    const std::string& help) {
    CLI::Option* opt = app->add_flag(flag, value, help);
    merges_[app].push_back([opt, key, &value](const json& section) {
      if (opt->count() == 0 && section.contains(key)) value = section.at(key).get<bool>();
    });
    return opt;
  }

  // Applies top-level keys first, then the subcommand's own section.
  void apply(CLI::App* app, const json& root, const std::vector<std::string>& sections) const {
    const auto it = merges_.find(app);
    if (it == merges_.end()) return;
    json merged = json::object();
    for (const auto& [k, v] : root.items()) {
      if (!v.is_object()) merged[k] = v;
    }
    for (const auto& s : sections) {
      if (root.contains(s) && root.at(s).is_object()) {
        for (const auto& [k, v] : root.at(s).items()) merged[k] = v;
      }
    }
    for (const auto& m : it->second) m(merged);
  }

 private:
  std::map<CLI::App*, std::vector<std::function<void(const json&)>>> merges_;
};

json load_config(const std::string& path) {
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw ng::FileNotFound("cannot open config " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ng::InvalidArgument("config " + path + " is not valid JSON: " + e.what());
  }
  if (!j.is_object()) throw ng::InvalidArgument("config " + path + " must be a JSON object");
  return j;
}

ng::CrMode parse_cr_mode(const std::string& s) {
  if (s == "edit") return ng::CrMode::kEditDistance;
  if (s == "flip") return ng::CrMode::kLabelFlip;
  throw ng::InvalidArgument("unknown CR mode '" + s + "' (expected edit or flip)");
}

std::vector<ng::NoiseKind> parse_kinds(const std::vector<std::string>& names) {
  std::vector<ng::NoiseKind> out;
  for (const auto& n : names) out.push_back(ng::parse_noise_kind(n));
  return out;
}

std::unique_ptr<ng::Recognizer> make_recognizer(const std::string& model,
                                                const std::string& recognizer, double timeout) {
  if (!model.empty() && !recognizer.empty()) {
    throw ng::InvalidArgument("give either --model or --recognizer, not both");
  }
  if (!model.empty()) return std::make_unique<ng::Recognizer>(ng::recognizer::Builtin{model});
  if (recognizer.empty()) throw ng::InvalidArgument("--model or --recognizer is required");
  return std::make_unique<ng::Recognizer>(ng::parse_recognizer(recognizer, timeout));
}

void require(const std::string& value, const char* flag) {
  if (value.empty()) throw ng::InvalidArgument(std::string(flag) + " is required");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"noisegate: noise-based defense and detection for audio adversarial examples"};
  app.require_subcommand(1);
  Binder bind;

  std::string config_path;
  uint64_t seed = 0;
  unsigned workers = 1;
  app.add_option("--config", config_path, "JSON config file");
  CLI::Option* seed_opt =
      app.add_option("--seed", seed, "master seed (NOISEGATE_SEED overrides the config file)");
  app.add_option("--workers", workers, "worker threads for per-clip work (0 = all cores)");

  // synth
  auto* synth = app.add_subcommand("synth", "generate the synthetic keyword corpus");
  int classes = 10, per_class = 100;
  std::string synth_out;
  bind.add(synth, "--classes", "classes", classes, "number of classes");
  bind.add(synth, "--per-class", "per_class", per_class, "clips per class");
  bind.add(synth, "--out", "out", synth_out, "output directory");

  // train
  auto* train = app.add_subcommand("train", "train the builtin keyword classifier");
  ng::TrainConfig tcfg;
  std::string train_manifest, train_out;
  bind.add(train, "--manifest", "manifest", train_manifest, "training manifest CSV");
  bind.add(train, "--out", "out", train_out, "model output path");
  bind.add(train, "--epochs", "epochs", tcfg.epochs, "training epochs");
  bind.add(train, "--lr", "learning_rate", tcfg.learning_rate, "learning rate");
  bind.add(train, "--momentum", "momentum", tcfg.momentum, "SGD momentum");
  bind.add(train, "--batch-size", "batch_size", tcfg.batch_size, "minibatch size");
  bind.add(train, "--val-fraction", "validation_fraction", tcfg.validation_fraction,
           "held-out fraction per class");
  bind.add(train, "--hidden", "hidden", tcfg.hidden, "hidden layer widths");

  // attack ga|pgd
  auto* attack = app.add_subcommand("attack", "craft targeted adversarial examples");
  attack->require_subcommand(1);
  std::string attack_model, attack_manifest, attack_out;
  size_t attack_count = 20;
  ng::GaConfig ga;
  ng::PgdConfig pgd;
  auto* ga_cmd = attack->add_subcommand("ga", "genetic-algorithm black-box attack");
  auto* pgd_cmd = attack->add_subcommand("pgd", "projected-gradient white-box attack");
  for (auto* cmd : {ga_cmd, pgd_cmd}) {
    bind.add(cmd, "--model", "model", attack_model, "model file");
    bind.add(cmd, "--manifest", "manifest", attack_manifest, "clean manifest to attack");
    bind.add(cmd, "--out", "out", attack_out, "output directory");
    bind.add(cmd, "--count", "count", attack_count, "number of (clip, target) pairs");
  }
  bind.add(ga_cmd, "--population", "population_size", ga.population_size, "population size");
  bind.add(ga_cmd, "--generations", "k_max", ga.k_max, "maximum generations");
  bind.add(ga_cmd, "--temperature", "temperature", ga.temperature, "selection temperature");
  bind.add(ga_cmd, "--mutation-prob", "mutation_probability", ga.mutation_probability,
           "per-sample mutation probability");
  bind.add(ga_cmd, "--mutation-range", "mutation_range", ga.mutation_range,
           "mutation amplitude");
  bind.add(ga_cmd, "--init-bits", "init_noise_bits", ga.init_noise_bits,
           "low bits randomized at initialization");
  bool no_elitism = false;
  bind.flag(ga_cmd, "--no-elitism", "no_elitism", no_elitism, "let the best candidate mutate");
  bind.add(pgd_cmd, "--tau", "tau_db", pgd.tau_db, "distortion bound in dB");
  bind.add(pgd_cmd, "--steps", "steps", pgd.steps, "iterations");
  bind.add(pgd_cmd, "--step-size", "step_size", pgd.step_size, "amplitude per step");
  bind.flag(pgd_cmd, "--random-start", "random_start", pgd.random_start,
            "start from a random point in the bound");

  // defend
  auto* defend = app.add_subcommand("defend", "apply an input transformation");
  std::string transform_text, defend_in, defend_out, defend_manifest, defend_out_dir;
  bind.add(defend, "--transform", "transform", transform_text,
           "e.g. gaussian:200, uniform:50, requant8, lowpass:4000:101, median:3, quant:256");
  bind.add(defend, "--in", "in", defend_in, "input WAV");
  bind.add(defend, "--out", "out", defend_out, "output WAV");
  bind.add(defend, "--manifest", "manifest", defend_manifest, "transform every clip of a manifest");
  bind.add(defend, "--out-dir", "out_dir", defend_out_dir, "output directory for --manifest");

  // Shared recognizer / experiment options.
  std::string model_path, recognizer_text, clean_path, adv_path, out_dir = ".";
  double timeout = 60.0;
  int concurrency = 4;
  std::vector<int> grid = ng::ExperimentConfig{}.grid;
  std::vector<std::string> kinds = {"uniform", "gaussian"};
  std::vector<std::string> transforms = ng::ExperimentConfig{}.transforms;
  bool include_zero = false;
  std::string cr_mode = "edit";

  auto add_recognizer = [&](CLI::App* cmd) {
    bind.add(cmd, "--model", "model", model_path, "builtin classifier model file");
    bind.add(cmd, "--recognizer", "recognizer", recognizer_text,
             "builtin:<model> | external:<command with {}> | cache:<jsonl>");
    bind.add(cmd, "--timeout", "timeout_seconds", timeout, "external recognizer timeout (s)");
    bind.add(cmd, "--concurrency", "concurrency", concurrency, "concurrent external processes");
  };
  auto add_experiment = [&](CLI::App* cmd) {
    add_recognizer(cmd);
    bind.add(cmd, "--clean", "clean", clean_path, "clean manifest");
    bind.add(cmd, "--adv", "adversarial", adv_path, "adversarial manifest");
    bind.add(cmd, "--out-dir", "out_dir", out_dir, "report directory");
  };

  // detect
  auto* detect = app.add_subcommand("detect", "flag adversarial clips by their change rate");
  add_recognizer(detect);
  std::string detect_manifest, detect_report = "detect_report.csv", detect_kind = "gaussian";
  ng::DetectionConfig dcfg;
  dcfg.noise.intensity = 200;
  bind.add(detect, "--manifest", "manifest", detect_manifest, "clips to check");
  bind.add(detect, "--report", "report", detect_report, "per-clip CSV report");
  bind.add(detect, "--kind", "kind", detect_kind, "noise kind (uniform|gaussian)");
  bind.add(detect, "--intensity", "intensity", dcfg.noise.intensity, "noise intensity");
  bind.add(detect, "--threshold", "threshold", dcfg.threshold, "change-rate threshold K");
  bind.add(detect, "--votes", "votes", dcfg.votes, "odd number of noise draws (median CR)");
  bind.add(detect, "--mode", "cr_mode", cr_mode, "edit | flip");

  // sweep / compare / roc
  auto* sweep = app.add_subcommand("sweep", "ASR/ACC or similarity over the noise grid");
  add_experiment(sweep);
  auto* compare = app.add_subcommand("compare", "compare input-transformation defenses");
  add_experiment(compare);
  auto* roc_cmd = app.add_subcommand("roc", "detection ROC/AUC for every noise setting");
  add_experiment(roc_cmd);
  for (auto* cmd : {sweep, roc_cmd}) {
    bind.add(cmd, "--grid", "grid", grid, "noise intensities (strictly increasing)")->delimiter(',');
    bind.add(cmd, "--kinds", "noise_kinds", kinds, "noise kinds")->delimiter(',');
    bind.flag(cmd, "--include-zero", "include_zero", include_zero, "prepend intensity 0");
  }
  bind.add(compare, "--transforms", "transforms", transforms, "transform list")->delimiter(',');
  bind.add(roc_cmd, "--mode", "cr_mode", cr_mode, "edit | flip");

  // spectrogram
  auto* spectro = app.add_subcommand("spectrogram", "render a WAV as a PGM spectrogram");
  std::string spec_in, spec_out;
  int spec_fft = 512, spec_hop = 128;
  bind.add(spectro, "--in", "in", spec_in, "input WAV");
  bind.add(spectro, "--out", "out", spec_out, "output PGM");
  bind.add(spectro, "--fft", "fft_size", spec_fft, "FFT size");
  bind.add(spectro, "--hop", "hop", spec_hop, "hop in samples");

  CLI11_PARSE(app, argc, argv);

  try {
    const json config = load_config(config_path);
    if (seed_opt->count() == 0) {
      if (config.contains("seed")) seed = config.at("seed").get<uint64_t>();
      seed = ng::master_seed_from_env(seed);
    }

    CLI::App* cmd = app.get_subcommands().front();
    std::vector<std::string> sections = {cmd->get_name()};
    if (cmd == attack) {
      cmd = attack->get_subcommands().front();
      sections.push_back(cmd->get_name());
    }
    bind.apply(cmd, config, sections);
    ng::Recognizer::set_external_concurrency(concurrency);

    if (cmd == synth) {
      require(synth_out, "--out");
      const auto m = ng::synth_dataset(classes, per_class, seed, synth_out);
      std::printf("wrote %zu clips to %s\n", m.size(), synth_out.c_str());
    } else if (cmd == train) {
      require(train_manifest, "--manifest");
      require(train_out, "--out");
      tcfg.seed = seed;
      const auto data = ng::load_clips(ng::read_manifest(train_manifest));
      const auto result = ng::train(data, tcfg, [](const ng::EpochStats& s) {
        std::fprintf(stderr, "epoch %d loss %.4f train %.2f%% val %.2f%%\n", s.epoch,
                     s.train_loss, 100.0 * s.train_accuracy, 100.0 * s.validation_accuracy);
      });
      ng::save_model(result.model, train_out);
      if (!result.history.empty()) {
        std::printf("validation accuracy %.2f%%\n",
                    100.0 * result.history.back().validation_accuracy);
      }
    } else if (cmd == ga_cmd || cmd == pgd_cmd) {
      require(attack_model, "--model");
      require(attack_manifest, "--manifest");
      require(attack_out, "--out");
      const auto model = ng::load_model(attack_model);
      const auto clean = ng::read_manifest(attack_manifest);
      const auto plan = ng::plan_attacks(clean, model, attack_count, seed);
      ng::AttackMethod method;
      if (cmd == ga_cmd) {
        ga.elitism = !no_elitism;
        ga.workers = workers;
        method = ga;
      } else {
        method = pgd;
      }
      std::visit([](const auto& c) { c.validate(); }, method);
      const auto run = ng::run_attacks(model, clean, plan, method, seed, attack_out);
      std::printf("%zu/%zu attacks succeeded; records in %s\n", run.adversarial.size(),
                  plan.size(), (std::filesystem::path(attack_out) / "attacks.jsonl").c_str());
    } else if (cmd == defend) {
      require(transform_text, "--transform");
      const auto spec = ng::parse_transform(transform_text);
      if (!defend_manifest.empty()) {
        require(defend_out_dir, "--out-dir");
        const auto m = ng::read_manifest(defend_manifest);
        std::filesystem::create_directories(defend_out_dir);
        ng::Manifest out = m;
        for (size_t i = 0; i < m.size(); ++i) {
          const auto seeded = ng::with_seed(spec, ng::derive_seed(seed, "defend", i));
          const auto path = std::filesystem::path(defend_out_dir) / m.rows[i].path.filename();
          ng::write_wav(ng::apply(seeded, ng::read_wav(m.rows[i].path)), path);
          out.rows[i].path = path;
        }
        ng::write_manifest(out, std::filesystem::path(defend_out_dir) / "manifest.csv");
      } else {
        require(defend_in, "--in");
        require(defend_out, "--out");
        const auto seeded = ng::with_seed(spec, ng::derive_seed(seed, "defend", 0));
        ng::write_wav(ng::apply(seeded, ng::read_wav(defend_in)), defend_out);
      }
    } else if (cmd == detect) {
      require(detect_manifest, "--manifest");
      dcfg.noise.kind = ng::parse_noise_kind(detect_kind);
      dcfg.mode = parse_cr_mode(cr_mode);
      const auto rec = make_recognizer(model_path, recognizer_text, timeout);
      const auto outcomes = ng::run_detection(dcfg, *rec, ng::read_manifest(detect_manifest),
                                              seed, detect_report, workers);
      size_t flagged = 0;
      for (const auto& o : outcomes) flagged += o.verdict == ng::Verdict::kAdversarial;
      std::printf("%zu/%zu flagged adversarial; report %s\n", flagged, outcomes.size(),
                  detect_report.c_str());
    } else if (cmd == sweep || cmd == compare || cmd == roc_cmd) {
      require(clean_path, "--clean");
      require(adv_path, "--adv");
      ng::ExperimentConfig ecfg;
      ecfg.master_seed = seed;
      ecfg.grid = grid;
      ecfg.include_zero = include_zero;
      ecfg.noise_kinds = parse_kinds(kinds);
      ecfg.transforms = transforms;
      ecfg.output_dir = out_dir;
      ecfg.cr_mode = parse_cr_mode(cr_mode);
      ecfg.workers = workers;
      // Check both manifests before any work starts.
      const auto clean = ng::read_manifest(clean_path);
      const auto adv = ng::read_manifest(adv_path);
      ng::MetricsReport report;
      if (cmd == roc_cmd) {
        const auto rec = make_recognizer(model_path, recognizer_text, timeout);
        report = ng::run_detection_eval(ecfg, *rec, clean, adv).auc_matrix;
      } else if (!model_path.empty() && recognizer_text.empty()) {
        const auto model = ng::load_model(model_path);
        report = cmd == sweep ? ng::run_intensity_sweep(ecfg, model, clean, adv)
                              : ng::run_transform_comparison(ecfg, model, clean, adv);
      } else {
        const auto rec = make_recognizer(model_path, recognizer_text, timeout);
        report = cmd == sweep ? ng::run_intensity_sweep(ecfg, *rec, clean, adv)
                              : ng::run_transform_comparison(ecfg, *rec, clean, adv);
      }
      std::cout << ng::render_csv(report);
    } else if (cmd == spectro) {
      require(spec_in, "--in");
      require(spec_out, "--out");
      ng::write_pgm(ng::spectrogram_image(ng::read_wav(spec_in), spec_fft, spec_hop), spec_out);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "noisegate: %s\n", e.what());
    return 1;
  }
  return 0;
}
