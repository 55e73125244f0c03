#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace noisegate {

inline constexpr int kSampleMin = -32768;
inline constexpr int kSampleMax = 32767;
inline constexpr int kCanonicalRate = 16000;

// Mono 16-bit PCM signal. Construction validates the invariants (non-empty,
// positive rate); samples are int16 so the amplitude range holds by type.
class AudioClip {
 public:
  AudioClip(std::vector<int16_t> samples, int sample_rate_hz = kCanonicalRate);

  std::span<const int16_t> samples() const { return samples_; }
  std::vector<int16_t>& mutable_samples() { return samples_; }
  int sample_rate_hz() const { return sample_rate_hz_; }
  size_t size() const { return samples_.size(); }
  int16_t operator[](size_t i) const { return samples_[i]; }

  // Largest absolute amplitude (|-32768| = 32768).
  int peak() const;

  bool operator==(const AudioClip&) const = default;

 private:
  std::vector<int16_t> samples_;
  int sample_rate_hz_;
};

// Additive signed deltas aimed at a clip of the same length.
struct Perturbation {
  std::vector<int32_t> deltas;

  static Perturbation zeros(size_t n) { return {std::vector<int32_t>(n, 0)}; }
  // Effective perturbation between two clips: `after - before`.
  static Perturbation between(const AudioClip& before, const AudioClip& after);

  size_t size() const { return deltas.size(); }
  int peak() const;
  bool operator==(const Perturbation&) const = default;
};

inline int16_t saturate(long v) {
  if (v > kSampleMax) return kSampleMax;
  if (v < kSampleMin) return kSampleMin;
  return static_cast<int16_t>(v);
}

AudioClip read_wav(const std::filesystem::path& path);
void write_wav(const AudioClip& clip, const std::filesystem::path& path);

// Serialized bytes of a canonical 44-byte-header WAV.
std::vector<uint8_t> encode_wav(const AudioClip& clip);
AudioClip decode_wav(std::span<const uint8_t> bytes);

AudioClip clamped_add(const AudioClip& clip, const Perturbation& p);

// Peak-based loudness 20*log10(max|v|).
double db_peak(int peak);

// dB(delta) - dB(x). std::nullopt is the silent-perturbation marker (all-zero
// delta, conceptually -inf). Throws SilentCarrier when x is all zeros.
std::optional<double> db_distortion(const AudioClip& x, const Perturbation& p);

// Largest integer perturbation amplitude whose distortion stays <= tau_db.
int max_amplitude_for_db(const AudioClip& x, double tau_db);

}  // namespace noisegate
