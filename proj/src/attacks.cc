#include "noisegate/attacks.h"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "noisegate/errors.h"
#include "noisegate/parallel.h"
#include "noisegate/seed.h"

namespace noisegate {

namespace {

using Samples = std::vector<int16_t>;

struct Fitness {
  double score = 0.0;  // target-class probability
  int predicted = 0;   // argmax class
};

Fitness evaluate(const Model& model, const Samples& candidate, int rate, int target) {
  const AudioClip clip(candidate, rate);
  const auto probs = forward(model, model_features(model, clip));
  return {probs[target], argmax(probs)};
}

std::optional<double> distortion_or_inf(const AudioClip& original, const Perturbation& p) {
  if (original.peak() == 0) {
    if (p.peak() == 0) return std::nullopt;
    return std::numeric_limits<double>::infinity();
  }
  return db_distortion(original, p);
}

AttackResult make_result(const AudioClip& original, AudioClip adversarial,
                         std::string_view target) {
  AttackResult r{std::move(adversarial), {}, false, 0, std::string(target), std::nullopt,
                 0.0, {}, {}};
  r.perturbation = Perturbation::between(original, r.adversarial);
  r.distortion_db = distortion_or_inf(original, r.perturbation);
  return r;
}

}  // namespace

void GaConfig::validate() const {
  if (population_size < 2) throw InvalidArgument("population_size must be >= 2");
  if (k_max < 1) throw InvalidArgument("k_max must be >= 1");
  if (!(temperature > 0.0)) throw InvalidArgument("temperature must be positive");
  if (mutation_probability < 0.0 || mutation_probability > 1.0) {
    throw InvalidArgument("mutation_probability must lie in [0, 1]");
  }
  if (mutation_range < 0) throw InvalidArgument("mutation_range must be >= 0");
  if (init_noise_bits < 0 || init_noise_bits > 15) {
    throw InvalidArgument("init_noise_bits must lie in [0, 15]");
  }
}

AttackResult ga_attack(const Model& model, const AudioClip& original,
                       std::string_view target, const GaConfig& cfg) {
  cfg.validate();
  const int target_index = model.label_index(target);
  const int rate = original.sample_rate_hz();
  const Samples base(original.samples().begin(), original.samples().end());

  {
    const Fitness f = evaluate(model, base, rate, target_index);
    if (f.predicted == target_index) {
      AttackResult r = make_result(original, original, target);
      r.success = true;
      r.final_target_score = f.score;
      r.fitness_history.push_back(f.score);
      return r;
    }
  }

  const size_t n = base.size();
  const int pop_size = cfg.population_size;
  std::vector<Samples> pop(pop_size, base);
  if (cfg.init_noise_bits > 0) {
    const int mask = (1 << cfg.init_noise_bits) - 1;
    for (int i = 0; i < pop_size; ++i) {
      Rng rng(derive_seed(cfg.seed, "ga/init", static_cast<uint64_t>(i)));
      std::uniform_int_distribution<int> bits(0, mask);
      for (size_t s = 0; s < n; ++s) {
        pop[i][s] = static_cast<int16_t>((pop[i][s] & ~mask) | bits(rng));
      }
    }
  }

  std::vector<Fitness> fit(pop_size);
  std::vector<bool> known(pop_size, false);
  std::vector<double> history;
  int best = 0;
  int generation = 0;
  bool success = false;
  while (generation < cfg.k_max) {
    parallel_for(pop_size, cfg.workers, [&](size_t i) {
      if (!known[i]) fit[i] = evaluate(model, pop[i], rate, target_index);
    });
    best = 0;
    for (int i = 1; i < pop_size; ++i) {
      if (fit[i].score > fit[best].score) best = i;
    }
    history.push_back(fit[best].score);
    if (fit[best].predicted == target_index) {
      success = true;
      break;
    }

    std::vector<double> weights(pop_size);
    const double top = fit[best].score / cfg.temperature;
    for (int i = 0; i < pop_size; ++i) {
      weights[i] = std::exp(fit[i].score / cfg.temperature - top);
    }

    std::vector<Samples> next(pop_size);
    std::vector<Fitness> next_fit(pop_size);
    std::vector<bool> next_known(pop_size, false);
    int first_child = 0;
    if (cfg.elitism) {
      next[0] = pop[best];
      next_fit[0] = fit[best];
      next_known[0] = true;
      first_child = 1;
    }
    parallel_for(pop_size - first_child, cfg.workers, [&](size_t k) {
      const size_t i = first_child + k;
      Rng rng(derive_seed(cfg.seed, "ga/child", static_cast<uint64_t>(generation), i));
      std::discrete_distribution<int> pick(weights.begin(), weights.end());
      const Samples& p1 = pop[pick(rng)];
      const Samples& p2 = pop[pick(rng)];
      Samples child(n);
      for (size_t s = 0; s < n; s += 64) {
        uint64_t coins = rng();
        const size_t end = std::min(n, s + 64);
        for (size_t j = s; j < end; ++j, coins >>= 1) child[j] = (coins & 1) ? p1[j] : p2[j];
      }
      if (cfg.mutation_probability > 0.0 && cfg.mutation_range > 0) {
        std::uniform_int_distribution<int> delta(-cfg.mutation_range, cfg.mutation_range);
        if (cfg.mutation_probability >= 1.0) {
          for (size_t j = 0; j < n; ++j) child[j] = saturate(long{child[j]} + delta(rng));
        } else {
          // Geometric gaps visit each sample independently with the given
          // probability.
          std::geometric_distribution<size_t> gap(cfg.mutation_probability);
          for (size_t j = gap(rng); j < n; j += 1 + gap(rng)) {
            child[j] = saturate(long{child[j]} + delta(rng));
          }
        }
      }
      next[i] = std::move(child);
    });
    pop = std::move(next);
    fit = std::move(next_fit);
    known = std::move(next_known);
    ++generation;
  }

  AttackResult r = make_result(original, AudioClip(pop[best], rate), target);
  r.success = success;
  r.iterations_used = generation;
  r.final_target_score = fit[best].score;
  r.fitness_history = std::move(history);
  return r;
}

void PgdConfig::validate() const {
  if (steps < 1) throw InvalidArgument("steps must be >= 1");
  if (step_size < 1) throw InvalidArgument("step_size must be >= 1");
  if (!std::isfinite(tau_db)) throw InvalidArgument("tau must be finite");
}

std::vector<double> sample_gradient(const Model& model, const AudioClip& clip,
                                    int target_index, double* loss) {
  const AudioClip fitted = fit_to_length(clip, static_cast<size_t>(model.clip_samples));
  const auto& extractor = extractor_for(model.feature_config, model.sample_rate_hz);
  const auto unit = to_unit_scale(fitted);
  const FeatureMatrix features = extractor.mfcc(unit);
  const Gradients g = loss_and_gradient(model, features, target_index);
  if (loss) *loss = g.loss;
  const auto grad_unit = extractor.backprop(unit, g.input);
  std::vector<double> grad(clip.size(), 0.0);
  const size_t n = std::min(clip.size(), grad_unit.size());
  for (size_t i = 0; i < n; ++i) grad[i] = grad_unit[i] / 32768.0;
  return grad;
}

AttackResult pgd_attack(const Model& model, const AudioClip& original,
                        std::string_view target, const PgdConfig& cfg) {
  cfg.validate();
  const int target_index = model.label_index(target);
  if (original.peak() == 0) throw SilentCarrier("PGD needs a non-silent original");
  const int bound = max_amplitude_for_db(original, cfg.tau_db);
  const size_t n = original.size();

  std::vector<int32_t> delta(n, 0);
  if (cfg.random_start && bound > 0) {
    Rng rng(derive_seed(cfg.seed, "pgd/start"));
    const int r = std::max(1, bound / 4);
    std::uniform_int_distribution<int> draw(-r, r);
    for (auto& d : delta) d = draw(rng);
  }

  std::vector<std::optional<double>> log;
  auto project = [&] {
    for (auto& d : delta) d = std::clamp(d, -bound, bound);
  };
  auto current = [&] { return clamped_add(original, Perturbation{delta}); };

  project();
  AudioClip adv = current();
  log.push_back(db_distortion(original, Perturbation::between(original, adv)));
  int used = 0;
  bool success = false;
  for (int step = 1; step <= cfg.steps; ++step) {
    if (predict(model, adv).index == target_index) {
      success = true;
      break;
    }
    const auto grad = sample_gradient(model, adv, target_index);
    for (size_t i = 0; i < n; ++i) {
      if (grad[i] > 0.0) {
        delta[i] -= cfg.step_size;
      } else if (grad[i] < 0.0) {
        delta[i] += cfg.step_size;
      }
    }
    project();
    adv = current();
    log.push_back(db_distortion(original, Perturbation::between(original, adv)));
    used = step;
  }
  const Prediction final_pred = predict(model, adv);
  success = success || final_pred.index == target_index;

  AttackResult r = make_result(original, std::move(adv), target);
  r.success = success;
  r.iterations_used = used;
  r.final_target_score = final_pred.probabilities[target_index];
  r.iterate_distortion_db = std::move(log);
  return r;
}

}  // namespace noisegate
