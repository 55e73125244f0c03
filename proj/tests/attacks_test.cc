#include <gtest/gtest.h>

#include <cmath>

#include "noisegate/attacks.h"
#include "noisegate/errors.h"
#include "test_util.h"

namespace noisegate {
namespace {

using testing::tone;

// A lightly trained three-class tone classifier shared by the tests below.
const Model& tone_model() {
  static const Model model = [] {
    std::vector<LabeledClip> data;
    const char* labels[] = {"low", "mid", "high"};
    for (int i = 0; i < 12; ++i) {
      data.push_back({tone(400.0 * (1 + i % 3) + 5 * i, 2000 + 300 * i), labels[i % 3]});
    }
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.learning_rate = 0.002;
    cfg.validation_fraction = 0.0;
    cfg.hidden = {16, 8};
    return train(data, cfg).model;
  }();
  return model;
}

std::string other_label(const Model& m, const AudioClip& clip) {
  const auto p = predict(m, clip);
  return m.class_labels[(p.index + 1) % m.num_classes()];
}

TEST(GaConfig, Validation) {
  GaConfig c;
  EXPECT_NO_THROW(c.validate());
  c.population_size = 1;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.k_max = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.temperature = 0.0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.mutation_probability = 1.5;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(GaAttack, AlreadyTargetSucceedsImmediately) {
  const auto clip = tone(800, 5000);
  const auto label = predict(tone_model(), clip).label;
  const auto r = ga_attack(tone_model(), clip, label, GaConfig{});
  EXPECT_TRUE(r.success);
  EXPECT_EQ(r.iterations_used, 0);
  EXPECT_EQ(r.adversarial, clip);
  EXPECT_FALSE(r.distortion_db.has_value());
  EXPECT_EQ(r.target, label);
}

TEST(GaAttack, UnknownTarget) {
  EXPECT_THROW(ga_attack(tone_model(), tone(800, 5000), "nope", GaConfig{}), UnknownLabel);
}

TEST(GaAttack, FailureIsAValueAndBestFitnessIsMonotone) {
  const auto clip = tone(400, 6000);
  GaConfig cfg;
  cfg.population_size = 8;
  cfg.k_max = 15;
  cfg.seed = 3;
  const auto r = ga_attack(tone_model(), clip, other_label(tone_model(), clip), cfg);
  ASSERT_FALSE(r.success);
  EXPECT_EQ(r.iterations_used, cfg.k_max);
  ASSERT_EQ(r.fitness_history.size(), static_cast<size_t>(cfg.k_max));
  for (size_t i = 1; i < r.fitness_history.size(); ++i) {
    EXPECT_GE(r.fitness_history[i], r.fitness_history[i - 1]);
  }
  EXPECT_EQ(r.adversarial.size(), clip.size());
  EXPECT_EQ(r.perturbation, Perturbation::between(clip, r.adversarial));
  // Init randomizes one LSB; mutations add at most k_max * range more.
  EXPECT_LE(r.perturbation.peak(), 1 + cfg.k_max * cfg.mutation_range);
}

TEST(GaAttack, DeterministicAndIndependentOfWorkerCount) {
  const auto clip = tone(1200, 4000);
  GaConfig cfg;
  cfg.population_size = 6;
  cfg.k_max = 5;
  cfg.seed = 42;
  const auto target = other_label(tone_model(), clip);
  const auto a = ga_attack(tone_model(), clip, target, cfg);
  cfg.workers = 3;
  const auto b = ga_attack(tone_model(), clip, target, cfg);
  EXPECT_EQ(a.adversarial, b.adversarial);
  EXPECT_EQ(a.fitness_history, b.fitness_history);
  cfg.seed = 43;
  EXPECT_NE(ga_attack(tone_model(), clip, target, cfg).adversarial, a.adversarial);
}

TEST(GaAttack, SilentCarrierReportsInfiniteDistortion) {
  const AudioClip silent(std::vector<int16_t>(16000, 0));
  GaConfig cfg;
  cfg.population_size = 4;
  cfg.k_max = 2;
  const auto target = other_label(tone_model(), silent);
  const auto r = ga_attack(tone_model(), silent, target, cfg);
  if (!r.success) {
    ASSERT_TRUE(r.distortion_db.has_value());
    EXPECT_TRUE(std::isinf(*r.distortion_db));
  }
}

TEST(PgdConfig, Validation) {
  PgdConfig c;
  EXPECT_NO_THROW(c.validate());
  c.steps = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
  c = {};
  c.step_size = 0;
  EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(PgdAttack, EveryIterateRespectsTheBound) {
  for (double tau : {-40.0, -25.0, -10.0}) {
    const auto clip = tone(400, 7000);
    PgdConfig cfg;
    cfg.tau_db = tau;
    cfg.steps = 10;
    cfg.step_size = 50;
    cfg.random_start = true;
    const auto r = pgd_attack(tone_model(), clip, other_label(tone_model(), clip), cfg);
    ASSERT_FALSE(r.iterate_distortion_db.empty());
    for (const auto& d : r.iterate_distortion_db) {
      if (d) EXPECT_LE(*d, tau + 1e-12);
    }
    if (r.distortion_db) EXPECT_LE(*r.distortion_db, tau + 1e-12);
  }
}

TEST(PgdAttack, SingleUnitStepMovesEachSampleByAtMostOne) {
  const auto clip = tone(800, 5000);
  PgdConfig cfg;
  cfg.steps = 1;
  cfg.step_size = 1;
  const auto r = pgd_attack(tone_model(), clip, other_label(tone_model(), clip), cfg);
  EXPECT_LE(r.perturbation.peak(), 1);
}

TEST(PgdAttack, SilentCarrierRejected) {
  const AudioClip silent(std::vector<int16_t>(16000, 0));
  EXPECT_THROW(pgd_attack(tone_model(), silent, "mid", PgdConfig{}), SilentCarrier);
}

TEST(PgdAttack, GradientStepsRaiseTargetProbability) {
  const auto clip = tone(400, 7000);
  const auto target = other_label(tone_model(), clip);
  const int t = tone_model().label_index(target);
  PgdConfig cfg;
  cfg.tau_db = -20.0;
  cfg.steps = 5;
  cfg.step_size = 20;
  const auto r = pgd_attack(tone_model(), clip, target, cfg);
  EXPECT_GT(r.final_target_score, predict(tone_model(), clip).probabilities[t]);
}

}  // namespace
}  // namespace noisegate
