#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <vector>

#include "noisegate/audio.h"

namespace noisegate {

struct FeatureConfig {
  int frame_ms = 25;
  int hop_ms = 10;
  int fft_size = 512;
  int mel_filters = 40;
  int num_coeffs = 13;
  double log_floor = 1e-10;
  double pre_emphasis = 0.97;

  bool operator==(const FeatureConfig&) const = default;
};

// Row-major frames x coefficients.
struct FeatureMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> values;

  double at(int r, int c) const { return values[static_cast<size_t>(r) * cols + c]; }
  double& at(int r, int c) { return values[static_cast<size_t>(r) * cols + c]; }
};

// Number of frames for `n` samples: floor((n - frame_len)/hop) + 1, or 0 when
// the signal is shorter than one frame.
int frame_count(size_t n, int frame_len, int hop_len);

double hz_to_mel(double hz);
double mel_to_hz(double mel);

// Pre-emphasis -> framing -> Hamming -> |FFT|^2 -> HTK mel filterbank ->
// log(max(E, floor)) -> orthonormal DCT-II. Operates on samples scaled to
// [-1, 1). Instances are immutable after construction and safe to share
// between threads.
class MfccExtractor {
 public:
  MfccExtractor(const FeatureConfig& cfg, int sample_rate_hz);
  ~MfccExtractor();
  MfccExtractor(const MfccExtractor&) = delete;
  MfccExtractor& operator=(const MfccExtractor&) = delete;

  const FeatureConfig& config() const { return cfg_; }
  int sample_rate_hz() const { return rate_; }
  int frame_length() const { return frame_len_; }
  int hop_length() const { return hop_len_; }

  FeatureMatrix mfcc(std::span<const double> signal) const;
  // Mel filterbank energies before the log, frames x mel_filters.
  FeatureMatrix filterbank_energies(std::span<const double> signal) const;

  // Vector-Jacobian product: gradient of a scalar loss w.r.t. the scaled
  // input samples given its gradient w.r.t. the MFCC matrix of `signal`.
  std::vector<double> backprop(std::span<const double> signal,
                               const FeatureMatrix& grad_mfcc) const;

  // Center frequency (Hz) of each mel filter.
  std::vector<double> filter_centers_hz() const;

 private:
  struct Filter {
    int first_bin;
    std::vector<double> weights;
  };

  void frame_power(std::span<const double> emphasized, int frame,
                   std::vector<double>& buf, std::vector<double>& power,
                   std::vector<double>* spectrum) const;
  std::vector<double> emphasize(std::span<const double> signal) const;

  FeatureConfig cfg_;
  int rate_;
  int frame_len_;
  int hop_len_;
  int bins_;
  std::vector<double> window_;
  std::vector<Filter> filters_;
  std::vector<double> dct_;  // num_coeffs x mel_filters
  void* forward_plan_;
  void* inverse_plan_;
};

// Shared extractor for (cfg, rate); created once and cached.
const MfccExtractor& extractor_for(const FeatureConfig& cfg, int sample_rate_hz);

std::vector<double> to_unit_scale(const AudioClip& clip);

FeatureMatrix mfcc(const AudioClip& clip, const FeatureConfig& cfg = {});
FeatureMatrix filterbank_energies(const AudioClip& clip, const FeatureConfig& cfg = {});

// 8-bit grayscale image; row 0 is the highest frequency bin.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels;

  uint8_t at(int row, int col) const {
    return pixels[static_cast<size_t>(row) * width + col];
  }
};

// Log-magnitude STFT (Hann window, no padding) normalized per image to
// [0, 255]. A constant image (e.g. silence) maps to all zeros.
GrayImage spectrogram_image(const AudioClip& clip, int fft_size = 512, int hop = 128);

// Binary PGM (P5).
void write_pgm(const GrayImage& image, const std::filesystem::path& path);

}  // namespace noisegate
