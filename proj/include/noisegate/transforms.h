#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <variant>

#include "noisegate/audio.h"

namespace noisegate {

enum class NoiseKind { kUniform, kGaussian };

std::string_view to_string(NoiseKind kind);
NoiseKind parse_noise_kind(std::string_view name);

// Random-noise devastation. Uniform draws integers from [-intensity,
// intensity]; Gaussian draws N(0, intensity^2) rounded to the nearest integer.
struct NoiseSpec {
  NoiseKind kind = NoiseKind::kGaussian;
  int intensity = 0;
  uint64_t seed = 0;
};

namespace transform {

struct UniformNoise {
  int intensity = 0;
  uint64_t seed = 0;
};
struct GaussianNoise {
  int intensity = 0;
  uint64_t seed = 0;
};
struct Requantize8Bit {};
struct LowPass {
  double cutoff_hz = 4000.0;
  int taps = 101;
};
struct SilenceRemoval {
  double threshold = 328.0;
};
struct DownUpSample {
  int factor = 2;
};
struct MedianSmooth {
  int window = 3;
};
struct Quantize {
  int step = 256;
};

}  // namespace transform

using TransformSpec =
    std::variant<transform::UniformNoise, transform::GaussianNoise,
                 transform::Requantize8Bit, transform::LowPass,
                 transform::SilenceRemoval, transform::DownUpSample,
                 transform::MedianSmooth, transform::Quantize>;

AudioClip add_noise(const AudioClip& clip, const NoiseSpec& spec);

// Zeroes the low byte of every sample's two's-complement representation.
AudioClip requantize_8bit(const AudioClip& clip);

// Hamming-windowed sinc FIR, unity DC gain, zero-padded "same" convolution.
AudioClip low_pass(const AudioClip& clip, double cutoff_hz, int taps);

// Drops non-overlapping 20 ms frames whose mean |amplitude| is below
// `threshold`. Never returns an empty clip.
AudioClip silence_removal(const AudioClip& clip, double threshold);

AudioClip down_up_sample(const AudioClip& clip, int factor);
AudioClip median_smooth(const AudioClip& clip, int window);

// Nearest multiple of `step`, ties away from zero, saturated.
AudioClip quantize(const AudioClip& clip, int step);

AudioClip apply(const TransformSpec& spec, const AudioClip& clip);

// Text syntax: uniform:50, gaussian:200, requant8, lowpass:4000:101,
// silence:328, downup:2, median:3, quant:256. Noise variants take `seed`.
TransformSpec parse_transform(std::string_view text, uint64_t seed = 0);
std::string to_string(const TransformSpec& spec);

// Returns a copy of `spec` with its noise seed replaced (no-op for
// deterministic transforms).
TransformSpec with_seed(const TransformSpec& spec, uint64_t seed);

// Throws InvalidArgument on out-of-range parameters.
void validate(const TransformSpec& spec);
void validate(const NoiseSpec& spec);

}  // namespace noisegate
