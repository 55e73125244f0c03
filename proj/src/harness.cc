#include "noisegate/harness.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "noisegate/errors.h"
#include "noisegate/parallel.h"
#include "noisegate/seed.h"

namespace noisegate {

namespace fs = std::filesystem;

namespace {

std::vector<std::string> parse_csv_line(const std::string& line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          fields.back() += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else if (c != '\r') {
      fields.back() += c;
    }
  }
  return fields;
}

std::string relative_if_below(const fs::path& p, const fs::path& base) {
  const auto abs_p = fs::absolute(p).lexically_normal();
  const auto abs_base = fs::absolute(base).lexically_normal();
  const auto rel = abs_p.lexically_relative(abs_base);
  if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
  return p.generic_string();
}

std::string cell_name(NoiseKind kind, int intensity) {
  return std::string(to_string(kind)) + ":" + std::to_string(intensity);
}

TransformSpec noise_transform(NoiseKind kind, int intensity) {
  if (kind == NoiseKind::kUniform) return transform::UniformNoise{intensity, 0};
  return transform::GaussianNoise{intensity, 0};
}

struct LoadedSet {
  std::vector<AudioClip> clips;
  const Manifest* manifest = nullptr;
};

LoadedSet load_set(const Manifest& m) {
  LoadedSet s;
  s.manifest = &m;
  s.clips.reserve(m.size());
  for (const auto& row : m.rows) s.clips.push_back(read_wav(row.path));
  return s;
}

std::vector<EvalRecord> eval_records(const Manifest& m) {
  std::vector<EvalRecord> out;
  for (const auto& row : m.rows) {
    out.push_back({row.path.generic_string(), row.label, row.target, "", ""});
  }
  return out;
}

// Transcripts of T(x_i) for every clip, with a per-clip seed derived from
// (master, stream, i).
std::vector<std::string> transformed_transcripts(const ExperimentConfig& cfg,
                                                 const Recognizer& rec, const LoadedSet& set,
                                                 const TransformSpec& spec,
                                                 const std::string& stream) {
  std::vector<std::string> out(set.clips.size());
  parallel_for(set.clips.size(), cfg.workers, [&](size_t i) {
    const auto seeded = with_seed(spec, derive_seed(cfg.master_seed, stream, i));
    out[i] = rec.transcribe(apply(seeded, set.clips[i])).text;
  });
  return out;
}

std::vector<std::string> plain_transcripts(const ExperimentConfig& cfg, const Recognizer& rec,
                                           const LoadedSet& set) {
  std::vector<std::string> out(set.clips.size());
  parallel_for(set.clips.size(), cfg.workers,
               [&](size_t i) { out[i] = rec.transcribe(set.clips[i]).text; });
  return out;
}

void require_nonempty(const Manifest& clean, const Manifest& adversarial) {
  if (clean.rows.empty()) throw EmptyInput("clean manifest is empty");
  if (adversarial.rows.empty()) throw EmptyInput("adversarial manifest is empty");
  for (const auto& row : adversarial.rows) {
    if (!row.target) throw InvalidArgument("adversarial manifest row without a target: " +
                                           row.path.string());
  }
}

struct CommandScores {
  double asr = 0.0;
  double acc = 0.0;
};

CommandScores command_scores(const ExperimentConfig& cfg, const Recognizer& rec,
                             const LoadedSet& clean, const LoadedSet& adv,
                             const std::optional<TransformSpec>& spec, const std::string& stream) {
  std::vector<std::string> clean_pred, adv_pred;
  if (spec) {
    clean_pred = transformed_transcripts(cfg, rec, clean, *spec, stream + "/clean");
    adv_pred = transformed_transcripts(cfg, rec, adv, *spec, stream + "/adv");
  } else {
    clean_pred = plain_transcripts(cfg, rec, clean);
    adv_pred = plain_transcripts(cfg, rec, adv);
  }
  const auto clean_rec = eval_records(*clean.manifest);
  const auto adv_rec = eval_records(*adv.manifest);
  return {asr_avg(adv_rec, adv_pred), acc(clean_rec, clean_pred)};
}

struct TextScores {
  double sr_benign = 0.0;
  double sr_adv = 0.0;
  std::optional<double> ratio_benign;
  std::optional<double> ratio_adv;
};

// Mean similarity and mean distance ratio (over defined items).
std::pair<double, std::optional<double>> text_scores_for(const std::vector<EvalRecord>& records,
                                                         const std::vector<std::string>& plain,
                                                         const std::vector<std::string>& after) {
  double sr = 0.0;
  double ratio_sum = 0.0;
  size_t ratio_n = 0;
  for (size_t i = 0; i < plain.size(); ++i) {
    if (plain[i].empty()) {
      throw UndefinedChangeRate("empty transcript for " + records[i].path);
    }
    sr += similarity(plain[i], after[i]);
    if (const auto r = edit_distance_ratio(normalize_transcript(records[i].truth), after[i],
                                           plain[i])) {
      ratio_sum += *r;
      ++ratio_n;
    }
  }
  std::optional<double> ratio;
  if (ratio_n > 0) ratio = ratio_sum / static_cast<double>(ratio_n);
  return {sr / static_cast<double>(plain.size()), ratio};
}

TextScores text_scores(const ExperimentConfig& cfg, const Recognizer& rec, const LoadedSet& clean,
                       const LoadedSet& adv, const std::vector<std::string>& clean_plain,
                       const std::vector<std::string>& adv_plain, const TransformSpec& spec,
                       const std::string& stream) {
  const auto clean_after = transformed_transcripts(cfg, rec, clean, spec, stream + "/clean");
  const auto adv_after = transformed_transcripts(cfg, rec, adv, spec, stream + "/adv");
  TextScores s;
  std::tie(s.sr_benign, s.ratio_benign) =
      text_scores_for(eval_records(*clean.manifest), clean_plain, clean_after);
  std::tie(s.sr_adv, s.ratio_adv) =
      text_scores_for(eval_records(*adv.manifest), adv_plain, adv_after);
  return s;
}

std::string format_threshold(double v) {
  if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

Manifest read_manifest(const fs::path& path, bool check_files) {
  std::ifstream in(path);
  if (!in) throw FileNotFound("cannot open manifest " + path.string());
  const fs::path base = path.parent_path();
  std::string line;
  if (!std::getline(in, line)) throw InvalidArgument("manifest " + path.string() + " is empty");
  const auto header = parse_csv_line(line);
  if (header.size() < 2 || header[0] != "path" || header[1] != "label") {
    throw InvalidArgument("manifest " + path.string() + " must start with a path,label header");
  }
  const bool adversarial = header.size() >= 4 && header[2] == "target" && header[3] == "source";
  Manifest m;
  size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto f = parse_csv_line(line);
    if (f.size() < (adversarial ? 4u : 2u)) {
      throw InvalidArgument(path.string() + ":" + std::to_string(line_no) +
                            ": too few fields");
    }
    ManifestRow row;
    row.path = fs::path(f[0]).is_absolute() ? fs::path(f[0]) : base / f[0];
    row.label = f[1];
    if (adversarial) {
      row.target = f[2];
      row.source = fs::path(f[3]).is_absolute() || f[3].empty() ? fs::path(f[3]) : base / f[3];
    }
    if (check_files && !fs::exists(row.path)) {
      throw FileNotFound("manifest " + path.string() + " references missing file " +
                         row.path.string());
    }
    m.rows.push_back(std::move(row));
  }
  return m;
}

void write_manifest(const Manifest& manifest, const fs::path& path) {
  const fs::path base = path.parent_path().empty() ? fs::path(".") : path.parent_path();
  const bool adversarial = manifest.adversarial();
  std::string out = adversarial ? "path,label,target,source\n" : "path,label\n";
  for (const auto& row : manifest.rows) {
    out += csv_escape(relative_if_below(row.path, base)) + ',' + csv_escape(row.label);
    if (adversarial) {
      out += ',' + csv_escape(row.target.value_or("")) + ',' +
             csv_escape(row.source ? relative_if_below(*row.source, base) : "");
    }
    out += '\n';
  }
  write_text_file(path, out);
}

std::vector<LabeledClip> load_clips(const Manifest& manifest) {
  std::vector<LabeledClip> out;
  out.reserve(manifest.size());
  for (const auto& row : manifest.rows) out.push_back({read_wav(row.path), row.label});
  return out;
}

std::vector<std::string> synth_labels(int classes) {
  static const char* kWords[] = {"yes", "no", "up", "down", "left",
                                 "right", "on", "off", "stop", "go"};
  std::vector<std::string> labels;
  for (int c = 0; c < classes; ++c) {
    if (c < 10) {
      labels.emplace_back(kWords[c]);
    } else {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "class%02d", c);
      labels.emplace_back(buf);
    }
  }
  return labels;
}

AudioClip synth_clip(int c, uint64_t seed) {
  constexpr int kRate = kCanonicalRate;
  constexpr int kSamples = kCanonicalRate;
  Rng rng(seed);
  auto uniform = [&](double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(rng);
  };
  const double base_hz = (300.0 + 120.0 * c) * uniform(0.98, 1.02);
  const double second_hz = 2.0 * base_hz + 50.0;
  const double chirp = 0.08;
  const double am_hz = 2.0 + c;
  const double duration = uniform(0.6, 0.8);
  const double onset = uniform(0.05, 0.95 - duration);
  const double peak = uniform(0.3, 0.9) * kSampleMax;
  double phase1 = uniform(0.0, 2.0 * std::numbers::pi);
  double phase2 = uniform(0.0, 2.0 * std::numbers::pi);
  const double ramp = 0.02;
  std::uniform_int_distribution<int> noise(-200, 200);

  std::vector<int16_t> samples(kSamples);
  for (int n = 0; n < kSamples; ++n) {
    const double t = static_cast<double>(n) / kRate;
    double s = 0.0;
    const double rel = t - onset;
    if (rel >= 0.0 && rel < duration) {
      const double progress = rel / duration;
      phase1 += 2.0 * std::numbers::pi * base_hz * (1.0 + chirp * progress) / kRate;
      phase2 += 2.0 * std::numbers::pi * second_hz * (1.0 - 0.5 * chirp * progress) / kRate;
      double env = 1.0;
      if (rel < ramp) env = 0.5 - 0.5 * std::cos(std::numbers::pi * rel / ramp);
      if (duration - rel < ramp) env = 0.5 - 0.5 * std::cos(std::numbers::pi * (duration - rel) / ramp);
      const double am = 1.0 - 0.3 * (0.5 + 0.5 * std::cos(2.0 * std::numbers::pi * am_hz * rel));
      s = peak * env * am * (0.6 * std::sin(phase1) + 0.4 * std::sin(phase2));
    }
    samples[n] = saturate(std::lround(s) + noise(rng));
  }
  return AudioClip(std::move(samples), kRate);
}

Manifest synth_dataset(int classes, int per_class, uint64_t seed, const fs::path& out_dir) {
  if (classes < 2) throw InvalidArgument("synthetic corpus needs at least two classes");
  if (per_class < 1) throw InvalidArgument("synthetic corpus needs at least one clip per class");
  std::error_code ec;
  fs::create_directories(out_dir / "clips", ec);
  if (ec) throw IoError("cannot create " + (out_dir / "clips").string() + ": " + ec.message());
  const auto labels = synth_labels(classes);
  Manifest m;
  for (int c = 0; c < classes; ++c) {
    for (int k = 0; k < per_class; ++k) {
      const uint64_t item = static_cast<uint64_t>(c) * per_class + k;
      char name[64];
      std::snprintf(name, sizeof(name), "%s_%04d.wav", labels[c].c_str(), k);
      const fs::path path = out_dir / "clips" / name;
      write_wav(synth_clip(c, derive_seed(seed, "synth", item)), path);
      m.rows.push_back({path, labels[c], std::nullopt, std::nullopt});
    }
  }
  write_manifest(m, out_dir / "manifest.csv");
  return m;
}

uint64_t master_seed_from_env(uint64_t fallback) {
  const char* env = std::getenv("NOISEGATE_SEED");
  if (!env || !*env) return fallback;
  try {
    size_t used = 0;
    const unsigned long long v = std::stoull(env, &used, 0);
    if (used != std::string(env).size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument(std::string("NOISEGATE_SEED is not an integer: ") + env);
  }
}

void ExperimentConfig::validate() const {
  if (grid.empty()) throw InvalidArgument("intensity grid must be non-empty");
  for (size_t i = 0; i < grid.size(); ++i) {
    if (grid[i] < 0 || grid[i] > kSampleMax) throw InvalidArgument("intensity out of range");
    if (i > 0 && grid[i] <= grid[i - 1]) {
      throw InvalidArgument("intensity grid must be strictly increasing");
    }
  }
  if (include_zero && grid.front() == 0) {
    throw InvalidArgument("grid already starts at 0; drop include_zero");
  }
  if (noise_kinds.empty()) throw InvalidArgument("at least one noise kind is required");
  for (const auto& t : transforms) parse_transform(t);
}

std::vector<int> ExperimentConfig::effective_grid() const {
  std::vector<int> g;
  if (include_zero) g.push_back(0);
  g.insert(g.end(), grid.begin(), grid.end());
  return g;
}

MetricsReport run_intensity_sweep(const ExperimentConfig& cfg, const Model& model,
                                  const Manifest& clean, const Manifest& adversarial) {
  cfg.validate();
  require_nonempty(clean, adversarial);
  const Recognizer rec(std::make_shared<const Model>(model));
  const auto clean_set = load_set(clean);
  const auto adv_set = load_set(adversarial);
  MetricsReport report{{"kind", "intensity"}, {"asr_avg", "acc"}, {}};
  for (NoiseKind kind : cfg.noise_kinds) {
    for (int intensity : cfg.effective_grid()) {
      const auto s = command_scores(cfg, rec, clean_set, adv_set, noise_transform(kind, intensity),
                                    "sweep/" + cell_name(kind, intensity));
      report.add({std::string(to_string(kind)), std::to_string(intensity)}, {s.asr, s.acc});
    }
  }
  fs::create_directories(cfg.output_dir);
  emit_report(report, cfg.output_dir / "sweep_command.csv");
  return report;
}

MetricsReport run_intensity_sweep(const ExperimentConfig& cfg, const Recognizer& recognizer,
                                  const Manifest& clean, const Manifest& adversarial) {
  cfg.validate();
  require_nonempty(clean, adversarial);
  const auto clean_set = load_set(clean);
  const auto adv_set = load_set(adversarial);
  const auto clean_plain = plain_transcripts(cfg, recognizer, clean_set);
  const auto adv_plain = plain_transcripts(cfg, recognizer, adv_set);
  MetricsReport report{{"kind", "intensity"},
                       {"sr_benign", "sr_adv", "dist_ratio_benign", "dist_ratio_adv"},
                       {}};
  for (NoiseKind kind : cfg.noise_kinds) {
    for (int intensity : cfg.effective_grid()) {
      const auto s = text_scores(cfg, recognizer, clean_set, adv_set, clean_plain, adv_plain,
                                 noise_transform(kind, intensity),
                                 "sweep/" + cell_name(kind, intensity));
      report.add({std::string(to_string(kind)), std::to_string(intensity)},
                 {s.sr_benign, s.sr_adv, s.ratio_benign, s.ratio_adv});
    }
  }
  fs::create_directories(cfg.output_dir);
  emit_report(report, cfg.output_dir / "sweep_similarity.csv");
  return report;
}

MetricsReport run_transform_comparison(const ExperimentConfig& cfg, const Model& model,
                                       const Manifest& clean, const Manifest& adversarial) {
  cfg.validate();
  require_nonempty(clean, adversarial);
  const Recognizer rec(std::make_shared<const Model>(model));
  const auto clean_set = load_set(clean);
  const auto adv_set = load_set(adversarial);
  MetricsReport report{{"method"}, {"asr_avg", "acc"}, {}};
  const auto none = command_scores(cfg, rec, clean_set, adv_set, std::nullopt, "compare/none");
  report.add({"none"}, {none.asr, none.acc});
  for (const auto& text : cfg.transforms) {
    const auto spec = parse_transform(text);
    const auto s = command_scores(cfg, rec, clean_set, adv_set, spec, "compare/" + text);
    report.add({to_string(spec)}, {s.asr, s.acc});
  }
  fs::create_directories(cfg.output_dir);
  emit_report(report, cfg.output_dir / "compare_command.csv");
  return report;
}

MetricsReport run_transform_comparison(const ExperimentConfig& cfg,
                                       const Recognizer& recognizer, const Manifest& clean,
                                       const Manifest& adversarial) {
  cfg.validate();
  require_nonempty(clean, adversarial);
  const auto clean_set = load_set(clean);
  const auto adv_set = load_set(adversarial);
  const auto clean_plain = plain_transcripts(cfg, recognizer, clean_set);
  const auto adv_plain = plain_transcripts(cfg, recognizer, adv_set);
  MetricsReport report{{"method"},
                       {"sr_benign", "sr_adv", "dist_ratio_benign", "dist_ratio_adv"},
                       {}};
  for (const auto& text : cfg.transforms) {
    const auto spec = parse_transform(text);
    const auto s = text_scores(cfg, recognizer, clean_set, adv_set, clean_plain, adv_plain, spec,
                               "compare/" + text);
    report.add({to_string(spec)}, {s.sr_benign, s.sr_adv, s.ratio_benign, s.ratio_adv});
  }
  fs::create_directories(cfg.output_dir);
  emit_report(report, cfg.output_dir / "compare_transforms.csv");
  return report;
}

void write_roc_csv(const RocResult& roc, const fs::path& path) {
  std::string out = "threshold,fpr,tpr\n";
  char buf[128];
  for (const auto& p : roc.points) {
    std::snprintf(buf, sizeof(buf), "%s,%.6f,%.6f\n", format_threshold(p.threshold).c_str(),
                  p.fpr, p.tpr);
    out += buf;
  }
  std::snprintf(buf, sizeof(buf), "# auc=%.6f youden_threshold=%s\n", roc.auc,
                format_threshold(roc.youden_threshold).c_str());
  out += buf;
  write_text_file(path, out);
}

DetectionEval run_detection_eval(const ExperimentConfig& cfg, const Recognizer& recognizer,
                                 const Manifest& clean, const Manifest& adversarial) {
  cfg.validate();
  if (clean.rows.empty()) throw EmptyInput("clean manifest is empty");
  if (adversarial.rows.empty()) throw EmptyInput("adversarial manifest is empty");
  const auto clean_set = load_set(clean);
  const auto adv_set = load_set(adversarial);
  const auto clean_plain = plain_transcripts(cfg, recognizer, clean_set);
  const auto adv_plain = plain_transcripts(cfg, recognizer, adv_set);

  fs::create_directories(cfg.output_dir);
  DetectionEval eval;
  eval.auc_matrix = MetricsReport{{"kind", "intensity", "status"},
                                  {"auc", "youden_threshold", "tpr", "fpr"},
                                  {}};
  for (NoiseKind kind : cfg.noise_kinds) {
    for (int intensity : cfg.effective_grid()) {
      DetectionCell cell;
      cell.kind = kind;
      cell.intensity = intensity;
      const std::string stream = "detect/" + cell_name(kind, intensity);
      const auto spec = noise_transform(kind, intensity);
      const auto clean_after = transformed_transcripts(cfg, recognizer, clean_set, spec,
                                                       stream + "/clean");
      const auto adv_after = transformed_transcripts(cfg, recognizer, adv_set, spec,
                                                     stream + "/adv");
      std::vector<ScoredExample> scored;
      for (size_t i = 0; i < clean_plain.size(); ++i) {
        cell.clean_cr.push_back(change_rate(clean_plain[i], clean_after[i], cfg.cr_mode));
        scored.push_back({cell.clean_cr.back(), false});
      }
      for (size_t i = 0; i < adv_plain.size(); ++i) {
        cell.adversarial_cr.push_back(change_rate(adv_plain[i], adv_after[i], cfg.cr_mode));
        scored.push_back({cell.adversarial_cr.back(), true});
      }
      const bool degenerate = std::all_of(scored.begin(), scored.end(), [&](const auto& s) {
        return s.score == scored.front().score;
      });
      const std::vector<std::string> keys{std::string(to_string(kind)), std::to_string(intensity),
                                          degenerate ? "degenerate" : "ok"};
      if (degenerate) {
        eval.auc_matrix.add(keys, {std::nullopt, std::nullopt, std::nullopt, std::nullopt});
      } else {
        cell.roc = roc(scored);
        eval.auc_matrix.add(keys, {cell.roc->auc, cell.roc->youden_threshold,
                                   cell.roc->youden_tpr * 100.0, cell.roc->youden_fpr * 100.0});
        write_roc_csv(*cell.roc, cfg.output_dir / ("roc_" + std::string(to_string(kind)) + "_" +
                                                   std::to_string(intensity) + ".csv"));
      }
      eval.cells.push_back(std::move(cell));
    }
  }
  emit_report(eval.auc_matrix, cfg.output_dir / "auc_matrix.csv");
  return eval;
}

std::vector<DetectionOutcome> run_detection(const DetectionConfig& dcfg,
                                            const Recognizer& recognizer,
                                            const Manifest& manifest, uint64_t master_seed,
                                            const fs::path& report_path, unsigned workers) {
  dcfg.validate();
  std::vector<DetectionOutcome> outcomes(manifest.size());
  parallel_for(manifest.size(), workers, [&](size_t i) {
    DetectionConfig c = dcfg;
    c.noise.seed = derive_seed(master_seed, "detect", i);
    outcomes[i] = detect(c, recognizer, read_wav(manifest.rows[i].path));
  });
  std::string out = "path,cr,verdict,transcript_before,transcript_after\n";
  char buf[32];
  for (size_t i = 0; i < outcomes.size(); ++i) {
    const auto& o = outcomes[i];
    std::snprintf(buf, sizeof(buf), "%.6f", o.cr);
    out += csv_escape(manifest.rows[i].path.generic_string()) + ',' + buf + ',' +
           to_string(o.verdict) + ',' + csv_escape(o.transcript_before) + ',' +
           csv_escape(o.transcript_after) + '\n';
  }
  write_text_file(report_path, out);
  return outcomes;
}

std::vector<AttackPlanItem> plan_attacks(const Manifest& clean, const Model& model, size_t count,
                                         uint64_t seed) {
  if (clean.rows.empty()) throw EmptyInput("clean manifest is empty");
  if (model.num_classes() < 2) throw InvalidArgument("targeted attacks need two classes");
  Rng rng(derive_seed(seed, "attack/plan"));
  std::vector<size_t> order(clean.size());
  std::iota(order.begin(), order.end(), size_t{0});
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(std::min(count, order.size()));
  std::vector<AttackPlanItem> plan;
  for (size_t row : order) {
    const std::string& truth = clean.rows[row].label;
    std::vector<std::string> candidates;
    for (const auto& l : model.class_labels) {
      if (l != truth) candidates.push_back(l);
    }
    std::uniform_int_distribution<size_t> pick(0, candidates.size() - 1);
    plan.push_back({row, candidates[pick(rng)]});
  }
  return plan;
}

AttackRun run_attacks(const Model& model, const Manifest& clean,
                      const std::vector<AttackPlanItem>& plan, const AttackMethod& method,
                      uint64_t master_seed, const fs::path& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError("cannot create " + out_dir.string() + ": " + ec.message());
  AttackRun run;
  std::string jsonl;
  for (size_t i = 0; i < plan.size(); ++i) {
    const auto& item = plan[i];
    const auto& row = clean.rows.at(item.row);
    const AudioClip original = read_wav(row.path);
    AttackResult result = std::visit(
        [&](const auto& cfg) {
          auto seeded = cfg;
          seeded.seed = derive_seed(master_seed, "attack", i);
          if constexpr (std::is_same_v<std::decay_t<decltype(cfg)>, GaConfig>) {
            return ga_attack(model, original, item.target, seeded);
          } else {
            return pgd_attack(model, original, item.target, seeded);
          }
        },
        method);
    char name[32];
    std::snprintf(name, sizeof(name), "adv_%04zu.wav", i);
    const fs::path adv_path = out_dir / name;
    if (result.success) {
      write_wav(result.adversarial, adv_path);
      run.adversarial.rows.push_back({adv_path, row.label, item.target, row.path});
    }
    nlohmann::ordered_json rec;
    rec["original"] = row.path.generic_string();
    rec["adversarial"] = result.success ? adv_path.generic_string() : "";
    rec["label"] = row.label;
    rec["target"] = item.target;
    rec["success"] = result.success;
    rec["iterations"] = result.iterations_used;
    if (result.distortion_db && std::isfinite(*result.distortion_db)) {
      rec["distortion_db"] = *result.distortion_db;
    } else {
      rec["distortion_db"] = nullptr;
    }
    rec["final_score"] = result.final_target_score;
    jsonl += rec.dump() + '\n';
    run.results.push_back(std::move(result));
  }
  write_text_file(out_dir / "attacks.jsonl", jsonl);
  write_manifest(run.adversarial, out_dir / "manifest.csv");
  return run;
}

}  // namespace noisegate
