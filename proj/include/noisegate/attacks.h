#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "noisegate/audio.h"
#include "noisegate/classifier.h"

namespace noisegate {

struct GaConfig {
  int population_size = 50;
  int k_max = 500;
  double temperature = 0.02;
  double mutation_probability = 0.005;  // per sample, per child
  int mutation_range = 2;               // mutation deltas drawn from [-range, range]
  int init_noise_bits = 1;              // low bits randomized at initialization
  bool elitism = true;
  uint64_t seed = 0;
  unsigned workers = 1;  // fitness evaluation threads; results do not depend on it

  void validate() const;
};

struct AttackResult {
  AudioClip adversarial;
  Perturbation perturbation;
  bool success = false;
  int iterations_used = 0;
  std::string target;
  // dB_x(delta); nullopt marks a silent (all-zero) perturbation.
  std::optional<double> distortion_db;
  double final_target_score = 0.0;
  // GA: best fitness of every evaluated generation.
  std::vector<double> fitness_history;
  // PGD: distortion of every iterate, starting with the initial one.
  std::vector<std::optional<double>> iterate_distortion_db;
};

// Gradient-free targeted attack. Candidates start as the original with their
// lowest `init_noise_bits` bits randomized; each generation the fittest
// candidate (target-class probability) is tested, parents are sampled from
// softmax(scores / temperature), children are built by uniform crossover and
// sparse mutation. Exhausting k_max is reported as success = false.
AttackResult ga_attack(const Model& model, const AudioClip& original,
                       std::string_view target, const GaConfig& cfg);

struct PgdConfig {
  double tau_db = -20.0;  // distortion bound dB_x(delta) <= tau
  int steps = 100;
  int step_size = 16;  // amplitude units per iteration
  bool random_start = false;
  uint64_t seed = 0;

  void validate() const;
};

// White-box targeted attack: signed-gradient descent on the cross-entropy of
// the target label, with the gradient taken analytically through the MFCC
// front end. After every step the perturbation is clipped to the largest
// amplitude whose distortion stays within tau.
AttackResult pgd_attack(const Model& model, const AudioClip& original,
                        std::string_view target, const PgdConfig& cfg);

// Gradient of the target cross-entropy w.r.t. the clip's samples (amplitude
// units). Samples beyond the model's clip length get zero gradient.
std::vector<double> sample_gradient(const Model& model, const AudioClip& clip,
                                    int target_index, double* loss = nullptr);

}  // namespace noisegate
