#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <variant>

#include "noisegate/audio.h"
#include "noisegate/classifier.h"

namespace noisegate {

struct Transcript {
  std::string text;
  std::string recognizer_id;
};

namespace recognizer {

struct Builtin {
  std::filesystem::path model_path;
};

// `command` holds exactly one "{}" placeholder, replaced by the path of a
// temporary WAV file. The first stdout line is the transcript.
struct External {
  std::string command;
  double timeout_seconds = 60.0;
};

// JSON-lines file of {"sha256": ..., "transcript": ...} records keyed by the
// SHA-256 of the clip's raw little-endian sample bytes.
struct Cache {
  std::filesystem::path path;
};

}  // namespace recognizer

using RecognizerSpec = std::variant<recognizer::Builtin, recognizer::External, recognizer::Cache>;

// Trim, lowercase and collapse internal whitespace runs to one space.
std::string normalize_transcript(std::string_view text);

// SHA-256 (lowercase hex) of the clip's samples as little-endian int16 bytes.
std::string content_hash(const AudioClip& clip);

// Uniform recognizer g(.). Builtin and cache kinds are deterministic and safe
// to call concurrently; external invocations are limited process-wide by
// set_external_concurrency (default 4).
class Recognizer {
 public:
  explicit Recognizer(const RecognizerSpec& spec);
  // Wraps an in-memory model (builtin kind without a file).
  explicit Recognizer(std::shared_ptr<const Model> model);

  Transcript transcribe(const AudioClip& clip) const;
  const std::string& id() const { return id_; }
  const Model* model() const { return model_.get(); }

  static void set_external_concurrency(int limit);

 private:
  Transcript run_external(const AudioClip& clip) const;

  RecognizerSpec spec_;
  std::string id_;
  std::shared_ptr<const Model> model_;
  std::shared_ptr<const std::map<std::string, std::string>> cache_;
};

Transcript transcribe(const RecognizerSpec& spec, const AudioClip& clip);

// Parses "builtin:<model path>", "external:<command>" or "cache:<path>".
RecognizerSpec parse_recognizer(std::string_view text, double timeout_seconds = 60.0);

// Minimum number of single-character insertions, deletions and substitutions
// turning `a` into `b` (byte-wise).
size_t levenshtein(std::string_view a, std::string_view b);

}  // namespace noisegate
