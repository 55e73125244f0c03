#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "noisegate/errors.h"
#include "noisegate/harness.h"
#include "test_util.h"

namespace noisegate {
namespace {

namespace fs = std::filesystem;
using testing::TempDir;

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

fs::path golden(const std::string& name) {
  const char* dir = std::getenv("NOISEGATE_TEST_DATA");
  return fs::path(dir ? dir : "tests/data") / "golden" / name;
}

// Golden files hold the exact header plus the leading key fields of every
// row; values are free to move.
void expect_schema(const fs::path& produced, const std::string& golden_name) {
  const auto want = lines(slurp(golden(golden_name)));
  const auto got = lines(slurp(produced));
  ASSERT_FALSE(want.empty()) << golden_name;
  ASSERT_EQ(got.size(), want.size()) << produced;
  EXPECT_EQ(got[0], want[0]);
  for (size_t i = 1; i < want.size(); ++i) {
    EXPECT_EQ(got[i].substr(0, want[i].size() + 1), want[i] + ",") << "row " << i;
  }
}

// Small synthetic corpus and a model trained on it, shared by the pipeline
// tests. The "adversarial" manifest reuses the clean clips with the model's
// own prediction as target, so its undefended ASR is 100%.
struct Pipeline {
  TempDir dir{"pipeline"};
  Manifest clean;
  Manifest adversarial;
  Model model;

  Pipeline() {
    clean = synth_dataset(3, 4, 11, dir / "data");
    TrainConfig tc;
    tc.epochs = 20;
    tc.validation_fraction = 0.0;
    tc.hidden = {16};
    model = train(load_clips(clean), tc).model;
    for (const auto& row : clean.rows) {
      adversarial.rows.push_back(
          {row.path, row.label, predict(model, read_wav(row.path)).label, row.path});
    }
  }
};

Pipeline& pipeline() {
  static Pipeline p;
  return p;
}

ExperimentConfig small_config(const fs::path& out) {
  ExperimentConfig cfg;
  cfg.master_seed = 5;
  cfg.grid = {10, 200};
  cfg.include_zero = true;
  cfg.output_dir = out;
  return cfg;
}

TEST(Manifest, RoundTripWithRelativePathsAndQuotes) {
  TempDir dir("manifest");
  fs::create_directories(dir / "clips");
  write_wav(AudioClip({1, 2, 3}), dir / "clips" / "a.wav");
  write_wav(AudioClip({4, 5}), dir / "clips" / "b,c.wav");
  Manifest m;
  m.rows.push_back({dir / "clips" / "a.wav", "turn on, the light", std::nullopt, std::nullopt});
  m.rows.push_back({dir / "clips" / "b,c.wav", "say \"hi\"", std::nullopt, std::nullopt});
  write_manifest(m, dir / "manifest.csv");
  EXPECT_EQ(lines(slurp(dir / "manifest.csv"))[1], "clips/a.wav,\"turn on, the light\"");

  const auto back = read_manifest(dir / "manifest.csv");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_FALSE(back.adversarial());
  EXPECT_EQ(back.rows[1].label, "say \"hi\"");
  EXPECT_EQ(read_wav(back.rows[1].path), AudioClip({4, 5}));
  EXPECT_EQ(load_clips(back)[0].label, "turn on, the light");
}

TEST(Manifest, AdversarialColumns) {
  TempDir dir("manifest");
  write_wav(AudioClip({1}), dir / "x.wav");
  write_text_file(dir / "adv.csv", "path,label,target,source\nx.wav,yes,no,x.wav\n");
  const auto m = read_manifest(dir / "adv.csv");
  ASSERT_TRUE(m.adversarial());
  EXPECT_EQ(*m.rows[0].target, "no");
}

TEST(Manifest, MissingWavFailsFastNamingThePath) {
  TempDir dir("manifest");
  write_wav(AudioClip({1}), dir / "here.wav");
  write_text_file(dir / "m.csv", "path,label\nhere.wav,a\ngone.wav,b\n");
  try {
    read_manifest(dir / "m.csv");
    FAIL() << "expected FileNotFound";
  } catch (const FileNotFound& e) {
    EXPECT_NE(std::string(e.what()).find("gone.wav"), std::string::npos);
  }
  EXPECT_EQ(read_manifest(dir / "m.csv", false).size(), 2u);
  EXPECT_THROW(read_manifest(dir / "absent.csv"), FileNotFound);
  write_text_file(dir / "bad.csv", "file,name\nhere.wav,a\n");
  EXPECT_ANY_THROW(read_manifest(dir / "bad.csv"));
}

TEST(Synth, LabelsAndCounts) {
  EXPECT_EQ(synth_labels(3), (std::vector<std::string>{"yes", "no", "up"}));
  const auto many = synth_labels(12);
  EXPECT_EQ(many[9], "go");
  EXPECT_EQ(many[11], "class11");

  TempDir dir("synth");
  const auto m = synth_dataset(10, 50, 1, dir.path());
  EXPECT_EQ(m.size(), 500u);
  EXPECT_EQ(read_manifest(dir / "manifest.csv").size(), 500u);
  size_t wavs = 0;
  for (const auto& e : fs::directory_iterator(dir / "clips")) wavs += e.path().extension() == ".wav";
  EXPECT_EQ(wavs, 500u);
}

TEST(Synth, ByteIdenticalForSameSeed) {
  TempDir a("synth"), b("synth"), c("synth");
  const auto ma = synth_dataset(3, 5, 99, a.path());
  synth_dataset(3, 5, 99, b.path());
  synth_dataset(3, 5, 100, c.path());
  EXPECT_EQ(slurp(a / "manifest.csv"), slurp(b / "manifest.csv"));
  bool any_differs = false;
  for (const auto& row : ma.rows) {
    const auto rel = fs::relative(row.path, a.path());
    EXPECT_EQ(slurp(row.path), slurp(b.path() / rel)) << rel;
    any_differs |= slurp(row.path) != slurp(c.path() / rel);
  }
  EXPECT_TRUE(any_differs);
}

TEST(Synth, ClipShape) {
  for (int c = 0; c < 10; ++c) {
    const auto clip = synth_clip(c, 1000 + c);
    ASSERT_EQ(clip.size(), 16000u);
    EXPECT_EQ(clip.sample_rate_hz(), 16000);
    const auto peak = clip.peak();
    EXPECT_GT(peak, 0.15 * 32767);
    EXPECT_LE(peak, 0.9 * 32767 + 201);
    // Leading edge is noise only: onset is at least 50 ms in.
    EXPECT_LT(testing::rms(clip, 0, 700), 200.0);
  }
}

TEST(Seed, EnvironmentOverride) {
  unsetenv("NOISEGATE_SEED");
  EXPECT_EQ(master_seed_from_env(7), 7u);
  setenv("NOISEGATE_SEED", "123", 1);
  EXPECT_EQ(master_seed_from_env(7), 123u);
  setenv("NOISEGATE_SEED", "0x10", 1);
  EXPECT_EQ(master_seed_from_env(7), 16u);
  setenv("NOISEGATE_SEED", "abc", 1);
  EXPECT_THROW(master_seed_from_env(7), InvalidArgument);
  unsetenv("NOISEGATE_SEED");
}

TEST(ExperimentConfig, Validation) {
  ExperimentConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.grid = {};
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg.grid = {10, 10};
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg.grid = {30, 10};
  EXPECT_THROW(cfg.validate(), InvalidArgument);
  cfg.grid = {10, 30};
  cfg.include_zero = true;
  EXPECT_EQ(cfg.effective_grid(), (std::vector<int>{0, 10, 30}));
  cfg.transforms = {"blur:3"};
  EXPECT_ANY_THROW(cfg.validate());
}

TEST(Pipeline, SweepSchemaAndBaseline) {
  auto& p = pipeline();
  TempDir out("sweep");
  const auto cfg = small_config(out.path());
  const auto report = run_intensity_sweep(cfg, p.model, p.clean, p.adversarial);
  expect_schema(out / "sweep_command.csv", "sweep_command.csv");
  ASSERT_EQ(report.rows.size(), cfg.noise_kinds.size() * cfg.effective_grid().size());

  // Intensity 0 is the identity, so it reproduces the undefended numbers.
  const auto clips = load_clips(p.clean);
  size_t correct = 0;
  for (const auto& c : clips) correct += predict(p.model, c.clip).label == c.label;
  for (const char* kind : {"uniform", "gaussian"}) {
    const auto* row = report.find({kind, "0"});
    ASSERT_NE(row, nullptr);
    EXPECT_DOUBLE_EQ(*row->values[0], 100.0);
    EXPECT_DOUBLE_EQ(*row->values[1], 100.0 * correct / clips.size());
  }
}

TEST(Pipeline, SweepIndependentOfWorkerCount) {
  auto& p = pipeline();
  TempDir a("sweep"), b("sweep");
  auto cfg = small_config(a.path());
  run_intensity_sweep(cfg, p.model, p.clean, p.adversarial);
  cfg.output_dir = b.path();
  cfg.workers = 3;
  run_intensity_sweep(cfg, p.model, p.clean, p.adversarial);
  EXPECT_EQ(slurp(a / "sweep_command.csv"), slurp(b / "sweep_command.csv"));
}

TEST(Pipeline, TextSweepSchema) {
  auto& p = pipeline();
  TempDir out("sweep");
  const Recognizer rec(std::make_shared<const Model>(p.model));
  const auto report = run_intensity_sweep(small_config(out.path()), rec, p.clean, p.adversarial);
  expect_schema(out / "sweep_similarity.csv", "sweep_similarity.csv");
  const auto* zero = report.find({"gaussian", "0"});
  ASSERT_NE(zero, nullptr);
  EXPECT_DOUBLE_EQ(*zero->values[0], 100.0);
  EXPECT_DOUBLE_EQ(*zero->values[1], 100.0);
}

TEST(Pipeline, ComparisonHasNoneRowPlusOnePerTransform) {
  auto& p = pipeline();
  TempDir out("compare");
  const auto cfg = small_config(out.path());
  const auto report = run_transform_comparison(cfg, p.model, p.clean, p.adversarial);
  expect_schema(out / "compare_command.csv", "compare_command.csv");
  EXPECT_EQ(report.rows.size(), cfg.transforms.size() + 1);
  EXPECT_EQ(report.rows.front().keys[0], "none");
  EXPECT_DOUBLE_EQ(*report.rows.front().values[0], 100.0);
}

TEST(Pipeline, DetectionEvalMatrix) {
  auto& p = pipeline();
  TempDir out("roc");
  const auto cfg = small_config(out.path());
  const Recognizer rec(std::make_shared<const Model>(p.model));
  const auto eval = run_detection_eval(cfg, rec, p.clean, p.adversarial);
  expect_schema(out / "auc_matrix.csv", "auc_matrix.csv");
  ASSERT_EQ(eval.cells.size(), cfg.noise_kinds.size() * cfg.effective_grid().size());
  for (const auto& cell : eval.cells) {
    EXPECT_EQ(cell.clean_cr.size(), p.clean.size());
    EXPECT_EQ(cell.adversarial_cr.size(), p.adversarial.size());
    if (cell.intensity == 0) EXPECT_FALSE(cell.roc.has_value());
    if (cell.roc) {
      EXPECT_TRUE(fs::exists(out / ("roc_" + std::string(to_string(cell.kind)) + "_" +
                                    std::to_string(cell.intensity) + ".csv")));
    }
  }
}

TEST(Pipeline, DetectionReport) {
  auto& p = pipeline();
  TempDir out("detect");
  const Recognizer rec(std::make_shared<const Model>(p.model));
  DetectionConfig dcfg;
  const auto outcomes = run_detection(dcfg, rec, p.clean, 3, out / "report.csv");
  ASSERT_EQ(outcomes.size(), p.clean.size());
  const auto got = lines(slurp(out / "report.csv"));
  ASSERT_EQ(got.size(), p.clean.size() + 1);
  EXPECT_EQ(got[0], lines(slurp(golden("detect_report.csv")))[0]);
  run_detection(dcfg, rec, p.clean, 3, out / "again.csv", 2);
  EXPECT_EQ(slurp(out / "report.csv"), slurp(out / "again.csv"));
}

TEST(Attacks, PlanPicksWrongTargets) {
  auto& p = pipeline();
  const auto plan = plan_attacks(p.clean, p.model, 8, 4);
  ASSERT_EQ(plan.size(), 8u);
  std::set<size_t> rows;
  for (const auto& item : plan) {
    rows.insert(item.row);
    EXPECT_NE(item.target, p.clean.rows[item.row].label);
    EXPECT_GE(p.model.label_index(item.target), 0);
  }
  EXPECT_EQ(rows.size(), plan.size());
  const auto again = plan_attacks(p.clean, p.model, 8, 4);
  for (size_t i = 0; i < plan.size(); ++i) EXPECT_EQ(again[i].row, plan[i].row);
  EXPECT_EQ(plan_attacks(p.clean, p.model, 100, 4).size(), p.clean.size());
}

TEST(Attacks, RunWritesJsonlAndManifest) {
  auto& p = pipeline();
  TempDir out("attack");
  const auto plan = plan_attacks(p.clean, p.model, 3, 2);
  PgdConfig pgd;
  pgd.tau_db = -10.0;
  pgd.steps = 20;
  pgd.step_size = 200;
  const auto run = run_attacks(p.model, p.clean, plan, pgd, 9, out.path());
  ASSERT_EQ(run.results.size(), plan.size());
  EXPECT_EQ(lines(slurp(out / "attacks.jsonl")).size(), plan.size());
  const auto m = read_manifest(out / "manifest.csv");
  size_t successes = 0;
  for (const auto& r : run.results) successes += r.success;
  EXPECT_EQ(m.size(), successes);
  for (const auto& row : m.rows) {
    ASSERT_TRUE(row.target.has_value());
    EXPECT_EQ(predict(p.model, read_wav(row.path)).label, *row.target);
  }
}

}  // namespace
}  // namespace noisegate
