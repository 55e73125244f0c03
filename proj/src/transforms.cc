#include "noisegate/transforms.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>
#include <vector>

#include "noisegate/errors.h"
#include "noisegate/seed.h"

namespace noisegate {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

int16_t round_sat(double v) { return saturate(std::lround(v)); }

std::vector<double> design_low_pass(double cutoff_hz, int taps, int rate) {
  const double fc = cutoff_hz / rate;
  const int mid = taps / 2;
  std::vector<double> h(taps);
  double sum = 0.0;
  for (int n = 0; n < taps; ++n) {
    const double t = n - mid;
    const double sinc = t == 0 ? 2.0 * fc
                               : std::sin(2.0 * std::numbers::pi * fc * t) /
                                     (std::numbers::pi * t);
    const double window =
        taps == 1 ? 1.0
                  : 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / (taps - 1));
    h[n] = sinc * window;
    sum += h[n];
  }
  for (double& v : h) v /= sum;
  return h;
}

std::vector<double> convolve_same(std::span<const int16_t> x,
                                  const std::vector<double>& h) {
  const long n = static_cast<long>(x.size());
  const long taps = static_cast<long>(h.size());
  const long mid = taps / 2;
  std::vector<double> y(x.size(), 0.0);
  for (long i = 0; i < n; ++i) {
    const long k_lo = std::max(0L, i + mid - (n - 1));
    const long k_hi = std::min(taps - 1, i + mid);
    double acc = 0.0;
    for (long k = k_lo; k <= k_hi; ++k) acc += h[k] * x[i + mid - k];
    y[i] = acc;
  }
  return y;
}

int parse_int(std::string_view s, std::string_view what) {
  try {
    size_t used = 0;
    const int v = std::stoi(std::string(s), &used);
    if (used != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument("bad " + std::string(what) + " '" + std::string(s) + "'");
  }
}

double parse_double(std::string_view s, std::string_view what) {
  try {
    size_t used = 0;
    const double v = std::stod(std::string(s), &used);
    if (used != s.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument("bad " + std::string(what) + " '" + std::string(s) + "'");
  }
}

std::vector<std::string_view> split_colon(std::string_view text) {
  std::vector<std::string_view> parts;
  size_t start = 0;
  while (true) {
    const size_t at = text.find(':', start);
    parts.push_back(text.substr(start, at - start));
    if (at == std::string_view::npos) break;
    start = at + 1;
  }
  return parts;
}

std::string format_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

std::string_view to_string(NoiseKind kind) {
  return kind == NoiseKind::kUniform ? "uniform" : "gaussian";
}

NoiseKind parse_noise_kind(std::string_view name) {
  if (name == "uniform") return NoiseKind::kUniform;
  if (name == "gaussian") return NoiseKind::kGaussian;
  throw InvalidArgument("unknown noise kind '" + std::string(name) + "'");
}

void validate(const NoiseSpec& spec) {
  if (spec.intensity < 0 || spec.intensity > kSampleMax) {
    throw InvalidArgument("noise intensity must lie in [0, 32767]");
  }
}

AudioClip add_noise(const AudioClip& clip, const NoiseSpec& spec) {
  validate(spec);
  if (spec.intensity == 0) return clip;
  Rng rng(spec.seed);
  std::vector<int16_t> out(clip.size());
  if (spec.kind == NoiseKind::kUniform) {
    std::uniform_int_distribution<int> draw(-spec.intensity, spec.intensity);
    for (size_t i = 0; i < out.size(); ++i) {
      out[i] = saturate(static_cast<long>(clip[i]) + draw(rng));
    }
  } else {
    std::normal_distribution<double> draw(0.0, spec.intensity);
    for (size_t i = 0; i < out.size(); ++i) {
      out[i] = saturate(static_cast<long>(clip[i]) + std::lround(draw(rng)));
    }
  }
  return AudioClip(std::move(out), clip.sample_rate_hz());
}

AudioClip requantize_8bit(const AudioClip& clip) {
  std::vector<int16_t> out(clip.samples().begin(), clip.samples().end());
  for (int16_t& s : out) s = static_cast<int16_t>(s & ~0xFF);
  return AudioClip(std::move(out), clip.sample_rate_hz());
}

AudioClip low_pass(const AudioClip& clip, double cutoff_hz, int taps) {
  if (!(cutoff_hz > 0.0) || cutoff_hz >= clip.sample_rate_hz() / 2.0) {
    throw InvalidArgument("low-pass cutoff must lie in (0, sample_rate/2)");
  }
  if (taps < 1 || taps % 2 == 0) throw InvalidArgument("low-pass taps must be odd");
  const auto h = design_low_pass(cutoff_hz, taps, clip.sample_rate_hz());
  const auto y = convolve_same(clip.samples(), h);
  std::vector<int16_t> out(y.size());
  std::transform(y.begin(), y.end(), out.begin(), round_sat);
  return AudioClip(std::move(out), clip.sample_rate_hz());
}

AudioClip silence_removal(const AudioClip& clip, double threshold) {
  if (threshold < 0.0) throw InvalidArgument("silence threshold must be >= 0");
  const size_t frame = std::max<size_t>(1, clip.sample_rate_hz() / 50);
  const auto in = clip.samples();
  std::vector<int16_t> out;
  size_t loudest_start = 0;
  size_t loudest_len = std::min(frame, in.size());
  double loudest_mean = -1.0;
  for (size_t start = 0; start < in.size(); start += frame) {
    const size_t len = std::min(frame, in.size() - start);
    double sum = 0.0;
    for (size_t i = start; i < start + len; ++i) sum += std::abs(static_cast<int>(in[i]));
    const double mean = sum / static_cast<double>(len);
    if (mean > loudest_mean) {
      loudest_mean = mean;
      loudest_start = start;
      loudest_len = len;
    }
    if (mean >= threshold) out.insert(out.end(), in.begin() + start, in.begin() + start + len);
  }
  if (out.empty()) {
    out.assign(in.begin() + loudest_start, in.begin() + loudest_start + loudest_len);
  }
  return AudioClip(std::move(out), clip.sample_rate_hz());
}

AudioClip down_up_sample(const AudioClip& clip, int factor) {
  if (factor < 2) throw InvalidArgument("downsampling factor must be >= 2");
  const double cutoff = clip.sample_rate_hz() / (2.0 * factor);
  const auto h = design_low_pass(cutoff, 101, clip.sample_rate_hz());
  const auto smooth = convolve_same(clip.samples(), h);
  std::vector<double> kept;
  for (size_t i = 0; i < smooth.size(); i += factor) kept.push_back(smooth[i]);
  std::vector<int16_t> out(clip.size());
  for (size_t n = 0; n < out.size(); ++n) {
    const size_t k = n / factor;
    const double frac = static_cast<double>(n % factor) / factor;
    const double a = kept[k];
    const double b = k + 1 < kept.size() ? kept[k + 1] : kept[k];
    out[n] = round_sat(a + (b - a) * frac);
  }
  return AudioClip(std::move(out), clip.sample_rate_hz());
}

AudioClip median_smooth(const AudioClip& clip, int window) {
  if (window < 3 || window % 2 == 0) {
    throw InvalidArgument("median window must be odd and >= 3");
  }
  const auto in = clip.samples();
  const long n = static_cast<long>(in.size());
  const long half = window / 2;
  std::vector<int16_t> out(in.size());
  std::vector<int16_t> buf;
  buf.reserve(window);
  for (long i = 0; i < n; ++i) {
    const long lo = std::max(0L, i - half);
    const long hi = std::min(n - 1, i + half);
    buf.assign(in.begin() + lo, in.begin() + hi + 1);
    // Lower median when a truncated edge window has even size.
    const auto mid = buf.begin() + (buf.size() - 1) / 2;
    std::nth_element(buf.begin(), mid, buf.end());
    out[i] = *mid;
  }
  return AudioClip(std::move(out), clip.sample_rate_hz());
}

AudioClip quantize(const AudioClip& clip, int step) {
  if (step < 1) throw InvalidArgument("quantization step must be >= 1");
  std::vector<int16_t> out(clip.size());
  for (size_t i = 0; i < out.size(); ++i) {
    // std::round rounds half away from zero.
    out[i] = round_sat(std::round(static_cast<double>(clip[i]) / step) * step);
  }
  return AudioClip(std::move(out), clip.sample_rate_hz());
}

void validate(const TransformSpec& spec) {
  std::visit(
      Overloaded{
          [](const transform::UniformNoise& t) {
            validate(NoiseSpec{NoiseKind::kUniform, t.intensity, t.seed});
          },
          [](const transform::GaussianNoise& t) {
            validate(NoiseSpec{NoiseKind::kGaussian, t.intensity, t.seed});
          },
          [](const transform::Requantize8Bit&) {},
          [](const transform::LowPass& t) {
            if (!(t.cutoff_hz > 0.0)) throw InvalidArgument("cutoff must be positive");
            if (t.taps < 1 || t.taps % 2 == 0) throw InvalidArgument("taps must be odd");
          },
          [](const transform::SilenceRemoval& t) {
            if (t.threshold < 0.0) throw InvalidArgument("threshold must be >= 0");
          },
          [](const transform::DownUpSample& t) {
            if (t.factor < 2) throw InvalidArgument("factor must be >= 2");
          },
          [](const transform::MedianSmooth& t) {
            if (t.window < 3 || t.window % 2 == 0) {
              throw InvalidArgument("window must be odd and >= 3");
            }
          },
          [](const transform::Quantize& t) {
            if (t.step < 1) throw InvalidArgument("step must be >= 1");
          },
      },
      spec);
}

AudioClip apply(const TransformSpec& spec, const AudioClip& clip) {
  return std::visit(
      Overloaded{
          [&](const transform::UniformNoise& t) {
            return add_noise(clip, {NoiseKind::kUniform, t.intensity, t.seed});
          },
          [&](const transform::GaussianNoise& t) {
            return add_noise(clip, {NoiseKind::kGaussian, t.intensity, t.seed});
          },
          [&](const transform::Requantize8Bit&) { return requantize_8bit(clip); },
          [&](const transform::LowPass& t) {
            return low_pass(clip, t.cutoff_hz, t.taps);
          },
          [&](const transform::SilenceRemoval& t) {
            return silence_removal(clip, t.threshold);
          },
          [&](const transform::DownUpSample& t) {
            return down_up_sample(clip, t.factor);
          },
          [&](const transform::MedianSmooth& t) {
            return median_smooth(clip, t.window);
          },
          [&](const transform::Quantize& t) { return quantize(clip, t.step); },
      },
      spec);
}

TransformSpec parse_transform(std::string_view text, uint64_t seed) {
  const auto parts = split_colon(text);
  const std::string_view name = parts[0];
  auto expect = [&](size_t lo, size_t hi) {
    if (parts.size() < lo || parts.size() > hi) {
      throw InvalidArgument("wrong number of parameters in transform '" +
                            std::string(text) + "'");
    }
  };
  TransformSpec spec;
  if (name == "uniform") {
    expect(2, 2);
    spec = transform::UniformNoise{parse_int(parts[1], "intensity"), seed};
  } else if (name == "gaussian") {
    expect(2, 2);
    spec = transform::GaussianNoise{parse_int(parts[1], "intensity"), seed};
  } else if (name == "requant8") {
    expect(1, 1);
    spec = transform::Requantize8Bit{};
  } else if (name == "lowpass") {
    expect(1, 3);
    transform::LowPass t;
    if (parts.size() > 1) t.cutoff_hz = parse_double(parts[1], "cutoff");
    if (parts.size() > 2) t.taps = parse_int(parts[2], "taps");
    spec = t;
  } else if (name == "silence") {
    expect(1, 2);
    transform::SilenceRemoval t;
    if (parts.size() > 1) t.threshold = parse_double(parts[1], "threshold");
    spec = t;
  } else if (name == "downup") {
    expect(1, 2);
    transform::DownUpSample t;
    if (parts.size() > 1) t.factor = parse_int(parts[1], "factor");
    spec = t;
  } else if (name == "median") {
    expect(1, 2);
    transform::MedianSmooth t;
    if (parts.size() > 1) t.window = parse_int(parts[1], "window");
    spec = t;
  } else if (name == "quant") {
    expect(1, 2);
    transform::Quantize t;
    if (parts.size() > 1) t.step = parse_int(parts[1], "step");
    spec = t;
  } else {
    throw InvalidArgument("unknown transform '" + std::string(text) + "'");
  }
  validate(spec);
  return spec;
}

std::string to_string(const TransformSpec& spec) {
  return std::visit(
      Overloaded{
          [](const transform::UniformNoise& t) {
            return "uniform:" + std::to_string(t.intensity);
          },
          [](const transform::GaussianNoise& t) {
            return "gaussian:" + std::to_string(t.intensity);
          },
          [](const transform::Requantize8Bit&) { return std::string("requant8"); },
          [](const transform::LowPass& t) {
            return "lowpass:" + format_number(t.cutoff_hz) + ":" + std::to_string(t.taps);
          },
          [](const transform::SilenceRemoval& t) {
            return "silence:" + format_number(t.threshold);
          },
          [](const transform::DownUpSample& t) {
            return "downup:" + std::to_string(t.factor);
          },
          [](const transform::MedianSmooth& t) {
            return "median:" + std::to_string(t.window);
          },
          [](const transform::Quantize& t) { return "quant:" + std::to_string(t.step); },
      },
      spec);
}

TransformSpec with_seed(const TransformSpec& spec, uint64_t seed) {
  TransformSpec out = spec;
  if (auto* u = std::get_if<transform::UniformNoise>(&out)) u->seed = seed;
  if (auto* g = std::get_if<transform::GaussianNoise>(&out)) g->seed = seed;
  return out;
}

}  // namespace noisegate
