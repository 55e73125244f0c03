#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "noisegate/attacks.h"
#include "noisegate/classifier.h"
#include "noisegate/detection.h"
#include "noisegate/metrics.h"
#include "noisegate/recognition.h"
#include "noisegate/transforms.h"

namespace noisegate {

struct ManifestRow {
  std::filesystem::path path;
  std::string label;                  // true label (or reference text)
  std::optional<std::string> target;  // adversarial rows only
  std::optional<std::filesystem::path> source;
};

// CSV `path,label[,target,source]` with a header line. Relative paths are
// resolved against the manifest's directory.
struct Manifest {
  std::vector<ManifestRow> rows;

  bool adversarial() const { return !rows.empty() && rows.front().target.has_value(); }
  size_t size() const { return rows.size(); }
};

// Fails fast (FileNotFound naming the path) when `check_files` is set and any
// referenced WAV is missing.
Manifest read_manifest(const std::filesystem::path& path, bool check_files = true);
// Paths below the manifest's directory are written relative to it.
void write_manifest(const Manifest& manifest, const std::filesystem::path& path);
std::vector<LabeledClip> load_clips(const Manifest& manifest);

// Label vocabulary for synthetic corpora: ten command words, then classNN.
std::vector<std::string> synth_labels(int classes);

// One synthetic 1 s, 16 kHz utterance of class `class_index`: two chirped
// tones anchored at 300 + 120*c Hz with class-dependent amplitude
// modulation, a random onset/duration, random peak amplitude in [0.3, 0.9]
// of full scale, and additive uniform noise of intensity 200.
AudioClip synth_clip(int class_index, uint64_t seed);

// Writes classes*per_class WAVs under out_dir/clips and out_dir/manifest.csv.
Manifest synth_dataset(int classes, int per_class, uint64_t seed,
                       const std::filesystem::path& out_dir);

// Overrides `fallback` with NOISEGATE_SEED when that variable is set.
uint64_t master_seed_from_env(uint64_t fallback);

struct ExperimentConfig {
  uint64_t master_seed = 0;
  std::vector<int> grid = {10, 30, 50, 70, 100, 200, 500};
  bool include_zero = false;  // prepend intensity 0 (identity) to the grid
  std::vector<NoiseKind> noise_kinds = {NoiseKind::kUniform, NoiseKind::kGaussian};
  std::vector<std::string> transforms = {"uniform:200", "gaussian:200",    "requant8",
                                         "lowpass:4000:101", "silence:328", "downup:2",
                                         "median:3",     "quant:256",       "quant:512"};
  std::filesystem::path output_dir = ".";
  CrMode cr_mode = CrMode::kEditDistance;
  unsigned workers = 1;

  // Throws InvalidArgument for an empty or non-increasing grid.
  void validate() const;
  std::vector<int> effective_grid() const;
};

// Command mode (builtin classifier): ASR_avg over the adversarial manifest
// and ACC over the clean one for every (kind, intensity). Emits
// sweep_command.csv.
MetricsReport run_intensity_sweep(const ExperimentConfig& cfg, const Model& model,
                                  const Manifest& clean, const Manifest& adversarial);

// Text mode (any recognizer): mean SR_benign / SR_adv plus the distance-ratio
// diagnostics. Emits sweep_similarity.csv.
MetricsReport run_intensity_sweep(const ExperimentConfig& cfg, const Recognizer& recognizer,
                                  const Manifest& clean, const Manifest& adversarial);

// Every transform in cfg.transforms plus a leading "none" row. Emits
// compare_command.csv.
MetricsReport run_transform_comparison(const ExperimentConfig& cfg, const Model& model,
                                       const Manifest& clean, const Manifest& adversarial);

// Text-mode comparison. Emits compare_transforms.csv.
MetricsReport run_transform_comparison(const ExperimentConfig& cfg,
                                       const Recognizer& recognizer, const Manifest& clean,
                                       const Manifest& adversarial);

struct DetectionCell {
  NoiseKind kind = NoiseKind::kGaussian;
  int intensity = 0;
  std::vector<double> clean_cr;
  std::vector<double> adversarial_cr;
  std::optional<RocResult> roc;  // nullopt when every score is identical
};

struct DetectionEval {
  MetricsReport auc_matrix;  // kind,intensity,status | auc,youden_threshold,tpr,fpr
  std::vector<DetectionCell> cells;
};

// CR for every clip under each (kind, intensity); ROC per cell. Emits
// auc_matrix.csv and roc_<kind>_<intensity>.csv.
DetectionEval run_detection_eval(const ExperimentConfig& cfg, const Recognizer& recognizer,
                                 const Manifest& clean, const Manifest& adversarial);

// Per-clip detection report: path,cr,verdict,transcript_before,transcript_after.
std::vector<DetectionOutcome> run_detection(const DetectionConfig& dcfg,
                                            const Recognizer& recognizer,
                                            const Manifest& manifest, uint64_t master_seed,
                                            const std::filesystem::path& report_path,
                                            unsigned workers = 1);

void write_roc_csv(const RocResult& roc, const std::filesystem::path& path);

struct AttackPlanItem {
  size_t row = 0;  // index into the clean manifest
  std::string target;
};

// `count` distinct clean rows (or all, if fewer) drawn with the seed, each
// paired with a random target label different from its true label.
std::vector<AttackPlanItem> plan_attacks(const Manifest& clean, const Model& model, size_t count,
                                         uint64_t seed);

using AttackMethod = std::variant<GaConfig, PgdConfig>;

struct AttackRun {
  std::vector<AttackResult> results;  // parallel to the plan
  Manifest adversarial;               // successful attacks only
};

// Runs every planned attack (seeds derived per item from `master_seed`),
// writes out_dir/adv_NNNN.wav for each success, out_dir/attacks.jsonl for every
// attempt and out_dir/manifest.csv for the successes.
AttackRun run_attacks(const Model& model, const Manifest& clean,
                      const std::vector<AttackPlanItem>& plan, const AttackMethod& method,
                      uint64_t master_seed, const std::filesystem::path& out_dir);

}  // namespace noisegate
