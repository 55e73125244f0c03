#include "noisegate/audio.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "noisegate/errors.h"

namespace noisegate {

namespace {

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(static_cast<uint8_t>(v & 0xFF));
  out.push_back(static_cast<uint8_t>(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_tag(std::vector<uint8_t>& out, const char* tag) {
  out.insert(out.end(), tag, tag + 4);
}

uint16_t get_u16(std::span<const uint8_t> b, size_t at) {
  return static_cast<uint16_t>(b[at] | (b[at + 1] << 8));
}

uint32_t get_u32(std::span<const uint8_t> b, size_t at) {
  return static_cast<uint32_t>(b[at]) | (static_cast<uint32_t>(b[at + 1]) << 8) |
         (static_cast<uint32_t>(b[at + 2]) << 16) |
         (static_cast<uint32_t>(b[at + 3]) << 24);
}

bool tag_is(std::span<const uint8_t> b, size_t at, const char* tag) {
  return std::memcmp(b.data() + at, tag, 4) == 0;
}

}  // namespace

AudioClip::AudioClip(std::vector<int16_t> samples, int sample_rate_hz)
    : samples_(std::move(samples)), sample_rate_hz_(sample_rate_hz) {
  if (samples_.empty()) throw InvalidArgument("audio clip must be non-empty");
  if (sample_rate_hz_ <= 0) throw InvalidArgument("sample rate must be positive");
}

int AudioClip::peak() const {
  int m = 0;
  for (int16_t s : samples_) m = std::max(m, std::abs(static_cast<int>(s)));
  return m;
}

Perturbation Perturbation::between(const AudioClip& before, const AudioClip& after) {
  if (before.size() != after.size()) {
    throw LengthMismatch("perturbation endpoints differ in length");
  }
  Perturbation p;
  p.deltas.resize(before.size());
  for (size_t i = 0; i < before.size(); ++i) {
    p.deltas[i] = static_cast<int32_t>(after[i]) - static_cast<int32_t>(before[i]);
  }
  return p;
}

int Perturbation::peak() const {
  int m = 0;
  for (int32_t d : deltas) m = std::max(m, std::abs(d));
  return m;
}

std::vector<uint8_t> encode_wav(const AudioClip& clip) {
  const uint32_t data_bytes = static_cast<uint32_t>(clip.size() * 2);
  std::vector<uint8_t> out;
  out.reserve(44 + data_bytes);
  put_tag(out, "RIFF");
  put_u32(out, 36 + data_bytes);
  put_tag(out, "WAVE");
  put_tag(out, "fmt ");
  put_u32(out, 16);
  put_u16(out, 1);  // PCM
  put_u16(out, 1);  // mono
  put_u32(out, static_cast<uint32_t>(clip.sample_rate_hz()));
  put_u32(out, static_cast<uint32_t>(clip.sample_rate_hz()) * 2);
  put_u16(out, 2);
  put_u16(out, 16);
  put_tag(out, "data");
  put_u32(out, data_bytes);
  for (int16_t s : clip.samples()) put_u16(out, static_cast<uint16_t>(s));
  return out;
}

AudioClip decode_wav(std::span<const uint8_t> b) {
  if (b.size() < 12 || !tag_is(b, 0, "RIFF") || !tag_is(b, 8, "WAVE")) {
    throw MalformedWav("missing RIFF/WAVE header");
  }
  size_t pos = 12;
  bool have_fmt = false;
  int rate = 0;
  while (pos + 8 <= b.size()) {
    const uint32_t chunk_size = get_u32(b, pos + 4);
    const size_t body = pos + 8;
    if (tag_is(b, pos, "fmt ")) {
      if (chunk_size < 16 || body + 16 > b.size()) {
        throw MalformedWav("truncated fmt chunk");
      }
      const uint16_t format = get_u16(b, body);
      const uint16_t channels = get_u16(b, body + 2);
      const uint16_t bits = get_u16(b, body + 14);
      rate = static_cast<int>(get_u32(b, body + 4));
      if (format != 1) {
        throw UnsupportedFormat("WAV format code " + std::to_string(format) +
                                " is not PCM");
      }
      if (bits != 16) {
        throw UnsupportedFormat(std::to_string(bits) +
                                "-bit samples are not supported (16-bit only)");
      }
      if (channels != 1) {
        throw UnsupportedFormat(std::to_string(channels) +
                                " channels are not supported (mono only)");
      }
      if (rate <= 0) throw MalformedWav("sample rate must be positive");
      have_fmt = true;
    } else if (tag_is(b, pos, "data")) {
      if (!have_fmt) throw MalformedWav("data chunk precedes fmt chunk");
      if (body + chunk_size > b.size()) throw MalformedWav("truncated data chunk");
      if (chunk_size % 2 != 0) throw MalformedWav("odd data chunk size");
      std::vector<int16_t> samples(chunk_size / 2);
      for (size_t i = 0; i < samples.size(); ++i) {
        samples[i] = static_cast<int16_t>(get_u16(b, body + 2 * i));
      }
      if (samples.empty()) throw MalformedWav("empty data chunk");
      return AudioClip(std::move(samples), rate);
    }
    // Chunks are word-aligned.
    pos = body + chunk_size + (chunk_size & 1u);
  }
  throw MalformedWav(have_fmt ? "missing data chunk" : "missing fmt chunk");
}

AudioClip read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    if (!std::filesystem::exists(path)) {
      throw FileNotFound("no such file: " + path.string());
    }
    throw IoError("cannot open " + path.string());
  }
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  try {
    return decode_wav(bytes);
  } catch (const MalformedWav& e) {
    throw MalformedWav(path.string() + ": " + e.what());
  } catch (const UnsupportedFormat& e) {
    throw UnsupportedFormat(path.string() + ": " + e.what());
  }
}

void write_wav(const AudioClip& clip, const std::filesystem::path& path) {
  const auto bytes = encode_wav(clip);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed: " + path.string());
}

AudioClip clamped_add(const AudioClip& clip, const Perturbation& p) {
  if (clip.size() != p.size()) {
    throw LengthMismatch("perturbation length " + std::to_string(p.size()) +
                         " != clip length " + std::to_string(clip.size()));
  }
  std::vector<int16_t> out(clip.size());
  for (size_t i = 0; i < out.size(); ++i) {
    out[i] = saturate(static_cast<long>(clip[i]) + p.deltas[i]);
  }
  return AudioClip(std::move(out), clip.sample_rate_hz());
}

double db_peak(int peak) { return 20.0 * std::log10(static_cast<double>(peak)); }

std::optional<double> db_distortion(const AudioClip& x, const Perturbation& p) {
  if (x.size() != p.size()) throw LengthMismatch("perturbation/clip length mismatch");
  const int carrier = x.peak();
  if (carrier == 0) throw SilentCarrier("distortion undefined for a silent carrier");
  const int delta = p.peak();
  if (delta == 0) return std::nullopt;
  return db_peak(delta) - db_peak(carrier);
}

int max_amplitude_for_db(const AudioClip& x, double tau_db) {
  const int carrier = x.peak();
  if (carrier == 0) throw SilentCarrier("distortion undefined for a silent carrier");
  int bound = static_cast<int>(std::floor(carrier * std::pow(10.0, tau_db / 20.0)));
  bound = std::clamp(bound, 0, 65535);
  // Guard against the floor landing one step above the bound through rounding.
  while (bound > 0 && db_peak(bound) - db_peak(carrier) > tau_db) --bound;
  return bound;
}

}  // namespace noisegate
