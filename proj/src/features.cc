#include "noisegate/features.h"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>
#include <numbers>
#include <string>
#include <tuple>

#include "noisegate/errors.h"

namespace noisegate {

namespace {

// FFTW planning is not thread-safe; execution with the new-array interface is.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

fftw_plan make_r2c(int n) {
  std::lock_guard lock(planner_mutex());
  std::vector<double> in(n);
  std::vector<fftw_complex> out(n / 2 + 1);
  return fftw_plan_dft_r2c_1d(n, in.data(), out.data(),
                              FFTW_ESTIMATE | FFTW_UNALIGNED);
}

fftw_plan make_c2r(int n) {
  std::lock_guard lock(planner_mutex());
  std::vector<fftw_complex> in(n / 2 + 1);
  std::vector<double> out(n);
  return fftw_plan_dft_c2r_1d(n, in.data(), out.data(),
                              FFTW_ESTIMATE | FFTW_UNALIGNED);
}

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

}  // namespace

int frame_count(size_t n, int frame_len, int hop_len) {
  if (n < static_cast<size_t>(frame_len)) return 0;
  return static_cast<int>((n - frame_len) / hop_len) + 1;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

MfccExtractor::MfccExtractor(const FeatureConfig& cfg, int sample_rate_hz)
    : cfg_(cfg), rate_(sample_rate_hz) {
  if (rate_ <= 0) throw InvalidArgument("sample rate must be positive");
  frame_len_ = rate_ * cfg.frame_ms / 1000;
  hop_len_ = rate_ * cfg.hop_ms / 1000;
  if (frame_len_ < 1 || hop_len_ < 1) throw InvalidArgument("frame/hop too short");
  if (!is_power_of_two(cfg.fft_size)) throw InvalidArgument("fft_size must be a power of two");
  if (cfg.fft_size < frame_len_) throw InvalidArgument("fft_size shorter than a frame");
  if (cfg.mel_filters < 1 || cfg.num_coeffs < 1 || cfg.num_coeffs > cfg.mel_filters) {
    throw InvalidArgument("num_coeffs must lie in [1, mel_filters]");
  }
  if (!(cfg.log_floor > 0.0)) throw InvalidArgument("log floor must be positive");
  bins_ = cfg.fft_size / 2 + 1;

  window_.resize(frame_len_);
  for (int n = 0; n < frame_len_; ++n) {
    window_[n] = frame_len_ == 1
                     ? 1.0
                     : 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / (frame_len_ - 1));
  }

  const double mel_hi = hz_to_mel(rate_ / 2.0);
  std::vector<double> edges(cfg.mel_filters + 2);
  for (size_t i = 0; i < edges.size(); ++i) {
    edges[i] = mel_to_hz(mel_hi * static_cast<double>(i) / (edges.size() - 1));
  }
  const double bin_hz = static_cast<double>(rate_) / cfg.fft_size;
  for (int j = 0; j < cfg.mel_filters; ++j) {
    const double lo = edges[j], mid = edges[j + 1], hi = edges[j + 2];
    Filter f{-1, {}};
    for (int k = 0; k < bins_; ++k) {
      const double hz = k * bin_hz;
      double w = 0.0;
      if (hz > lo && hz < mid) {
        w = (hz - lo) / (mid - lo);
      } else if (hz >= mid && hz < hi) {
        w = (hi - hz) / (hi - mid);
      }
      if (w > 0.0) {
        if (f.first_bin < 0) f.first_bin = k;
        f.weights.resize(k - f.first_bin + 1, 0.0);
        f.weights.back() = w;
      }
    }
    if (f.first_bin < 0) f.first_bin = 0;
    filters_.push_back(std::move(f));
  }

  const int m = cfg.mel_filters;
  dct_.resize(static_cast<size_t>(cfg.num_coeffs) * m);
  for (int c = 0; c < cfg.num_coeffs; ++c) {
    const double scale = c == 0 ? std::sqrt(1.0 / m) : std::sqrt(2.0 / m);
    for (int j = 0; j < m; ++j) {
      dct_[static_cast<size_t>(c) * m + j] =
          scale * std::cos(std::numbers::pi * c * (j + 0.5) / m);
    }
  }

  forward_plan_ = make_r2c(cfg.fft_size);
  inverse_plan_ = make_c2r(cfg.fft_size);
}

MfccExtractor::~MfccExtractor() {
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(forward_plan_));
  fftw_destroy_plan(static_cast<fftw_plan>(inverse_plan_));
}

std::vector<double> MfccExtractor::emphasize(std::span<const double> signal) const {
  std::vector<double> y(signal.size());
  if (signal.empty()) return y;
  y[0] = signal[0];
  for (size_t i = 1; i < signal.size(); ++i) {
    y[i] = signal[i] - cfg_.pre_emphasis * signal[i - 1];
  }
  return y;
}

void MfccExtractor::frame_power(std::span<const double> emphasized, int frame,
                                std::vector<double>& buf, std::vector<double>& power,
                                std::vector<double>* spectrum) const {
  const size_t start = static_cast<size_t>(frame) * hop_len_;
  std::fill(buf.begin(), buf.end(), 0.0);
  for (int n = 0; n < frame_len_; ++n) buf[n] = emphasized[start + n] * window_[n];
  std::vector<double> local;
  std::vector<double>& spec = spectrum ? *spectrum : local;
  spec.resize(2 * static_cast<size_t>(bins_));
  fftw_execute_dft_r2c(static_cast<fftw_plan>(forward_plan_), buf.data(),
                       reinterpret_cast<fftw_complex*>(spec.data()));
  for (int k = 0; k < bins_; ++k) {
    power[k] = spec[2 * k] * spec[2 * k] + spec[2 * k + 1] * spec[2 * k + 1];
  }
}

FeatureMatrix MfccExtractor::filterbank_energies(std::span<const double> signal) const {
  const int frames = frame_count(signal.size(), frame_len_, hop_len_);
  if (frames == 0) throw InvalidArgument("clip shorter than one analysis frame");
  const auto emphasized = emphasize(signal);
  FeatureMatrix out{frames, cfg_.mel_filters,
                    std::vector<double>(static_cast<size_t>(frames) * cfg_.mel_filters)};
  std::vector<double> buf(cfg_.fft_size), power(bins_), spec;
  for (int t = 0; t < frames; ++t) {
    frame_power(emphasized, t, buf, power, &spec);
    for (int j = 0; j < cfg_.mel_filters; ++j) {
      const Filter& f = filters_[j];
      double e = 0.0;
      for (size_t i = 0; i < f.weights.size(); ++i) e += f.weights[i] * power[f.first_bin + i];
      out.at(t, j) = e;
    }
  }
  return out;
}

FeatureMatrix MfccExtractor::mfcc(std::span<const double> signal) const {
  const FeatureMatrix energies = filterbank_energies(signal);
  const int m = cfg_.mel_filters;
  FeatureMatrix out{energies.rows, cfg_.num_coeffs,
                    std::vector<double>(static_cast<size_t>(energies.rows) * cfg_.num_coeffs)};
  std::vector<double> logmel(m);
  for (int t = 0; t < energies.rows; ++t) {
    for (int j = 0; j < m; ++j) logmel[j] = std::log(std::max(energies.at(t, j), cfg_.log_floor));
    for (int c = 0; c < cfg_.num_coeffs; ++c) {
      const double* row = &dct_[static_cast<size_t>(c) * m];
      double acc = 0.0;
      for (int j = 0; j < m; ++j) acc += row[j] * logmel[j];
      out.at(t, c) = acc;
    }
  }
  return out;
}

std::vector<double> MfccExtractor::backprop(std::span<const double> signal,
                                            const FeatureMatrix& grad) const {
  const int frames = frame_count(signal.size(), frame_len_, hop_len_);
  if (frames == 0) throw InvalidArgument("clip shorter than one analysis frame");
  if (grad.rows != frames || grad.cols != cfg_.num_coeffs) {
    throw ShapeMismatch("gradient shape does not match the MFCC matrix");
  }
  const int m = cfg_.mel_filters;
  const auto emphasized = emphasize(signal);
  std::vector<double> grad_emph(signal.size(), 0.0);
  std::vector<double> buf(cfg_.fft_size), power(bins_), spec;
  std::vector<double> g_mel(m), g_pow(bins_), z(2 * static_cast<size_t>(bins_));
  for (int t = 0; t < frames; ++t) {
    frame_power(emphasized, t, buf, power, &spec);
    for (int j = 0; j < m; ++j) {
      const Filter& f = filters_[j];
      double e = 0.0;
      for (size_t i = 0; i < f.weights.size(); ++i) e += f.weights[i] * power[f.first_bin + i];
      double g_log = 0.0;
      for (int c = 0; c < cfg_.num_coeffs; ++c) {
        g_log += dct_[static_cast<size_t>(c) * m + j] * grad.at(t, c);
      }
      // The floor clamps; no gradient flows through it.
      g_mel[j] = e > cfg_.log_floor ? g_log / e : 0.0;
    }
    std::fill(g_pow.begin(), g_pow.end(), 0.0);
    for (int j = 0; j < m; ++j) {
      const Filter& f = filters_[j];
      for (size_t i = 0; i < f.weights.size(); ++i) g_pow[f.first_bin + i] += f.weights[i] * g_mel[j];
    }
    // d|X_k|^2/dx_n = 2 Re(conj(X_k) e^{-i w k n}); summing over the one-sided
    // spectrum is a Hermitian inverse DFT of g_k X_k with the DC and Nyquist
    // terms doubled.
    for (int k = 0; k < bins_; ++k) {
      const double scale = (k == 0 || k == bins_ - 1) ? 2.0 : 1.0;
      z[2 * k] = scale * g_pow[k] * spec[2 * k];
      z[2 * k + 1] = scale * g_pow[k] * spec[2 * k + 1];
    }
    fftw_execute_dft_c2r(static_cast<fftw_plan>(inverse_plan_),
                         reinterpret_cast<fftw_complex*>(z.data()), buf.data());
    const size_t start = static_cast<size_t>(t) * hop_len_;
    for (int n = 0; n < frame_len_; ++n) grad_emph[start + n] += buf[n] * window_[n];
  }
  std::vector<double> grad_x(signal.size());
  for (size_t i = 0; i < signal.size(); ++i) {
    grad_x[i] = grad_emph[i] -
                (i + 1 < signal.size() ? cfg_.pre_emphasis * grad_emph[i + 1] : 0.0);
  }
  return grad_x;
}

std::vector<double> MfccExtractor::filter_centers_hz() const {
  const double mel_hi = hz_to_mel(rate_ / 2.0);
  std::vector<double> centers(cfg_.mel_filters);
  for (int j = 0; j < cfg_.mel_filters; ++j) {
    centers[j] = mel_to_hz(mel_hi * (j + 1) / (cfg_.mel_filters + 1));
  }
  return centers;
}

const MfccExtractor& extractor_for(const FeatureConfig& cfg, int sample_rate_hz) {
  using Key = std::tuple<int, int, int, int, int, double, double, int>;
  static std::mutex mu;
  static std::map<Key, std::unique_ptr<MfccExtractor>> cache;
  const Key key{cfg.frame_ms, cfg.hop_ms,      cfg.fft_size,     cfg.mel_filters,
                cfg.num_coeffs, cfg.log_floor, cfg.pre_emphasis, sample_rate_hz};
  std::lock_guard lock(mu);
  auto& slot = cache[key];
  if (!slot) slot = std::make_unique<MfccExtractor>(cfg, sample_rate_hz);
  return *slot;
}

std::vector<double> to_unit_scale(const AudioClip& clip) {
  std::vector<double> out(clip.size());
  for (size_t i = 0; i < out.size(); ++i) out[i] = clip[i] / 32768.0;
  return out;
}

FeatureMatrix mfcc(const AudioClip& clip, const FeatureConfig& cfg) {
  return extractor_for(cfg, clip.sample_rate_hz()).mfcc(to_unit_scale(clip));
}

FeatureMatrix filterbank_energies(const AudioClip& clip, const FeatureConfig& cfg) {
  return extractor_for(cfg, clip.sample_rate_hz()).filterbank_energies(to_unit_scale(clip));
}

GrayImage spectrogram_image(const AudioClip& clip, int fft_size, int hop) {
  if (!is_power_of_two(fft_size)) throw InvalidArgument("fft_size must be a power of two");
  if (hop < 1) throw InvalidArgument("hop must be positive");
  const int frames = frame_count(clip.size(), fft_size, hop);
  if (frames == 0) throw InvalidArgument("clip shorter than the spectrogram window");
  const int bins = fft_size / 2 + 1;
  const auto x = to_unit_scale(clip);
  std::vector<double> window(fft_size);
  for (int n = 0; n < fft_size; ++n) {
    window[n] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * n / fft_size);
  }
  fftw_plan plan = make_r2c(fft_size);
  std::vector<double> buf(fft_size), spec(2 * static_cast<size_t>(bins));
  std::vector<double> db(static_cast<size_t>(frames) * bins);
  for (int t = 0; t < frames; ++t) {
    for (int n = 0; n < fft_size; ++n) buf[n] = x[static_cast<size_t>(t) * hop + n] * window[n];
    fftw_execute_dft_r2c(plan, buf.data(), reinterpret_cast<fftw_complex*>(spec.data()));
    for (int k = 0; k < bins; ++k) {
      const double mag = std::hypot(spec[2 * k], spec[2 * k + 1]);
      db[static_cast<size_t>(t) * bins + k] = 20.0 * std::log10(std::max(mag, 1e-10));
    }
  }
  {
    std::lock_guard lock(planner_mutex());
    fftw_destroy_plan(plan);
  }
  const auto [lo_it, hi_it] = std::minmax_element(db.begin(), db.end());
  const double lo = *lo_it, hi = *hi_it;
  GrayImage img{frames, bins, std::vector<uint8_t>(static_cast<size_t>(frames) * bins, 0)};
  if (hi > lo) {
    for (int t = 0; t < frames; ++t) {
      for (int k = 0; k < bins; ++k) {
        const double v = (db[static_cast<size_t>(t) * bins + k] - lo) / (hi - lo);
        img.pixels[static_cast<size_t>(bins - 1 - k) * frames + t] =
            static_cast<uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  return img;
}

void write_pgm(const GrayImage& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace noisegate
