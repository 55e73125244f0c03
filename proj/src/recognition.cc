#include "noisegate/recognition.h"

#include <openssl/evp.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cctype>
#include <condition_variable>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <random>
#include <vector>

#include <json.hpp>

#include "noisegate/errors.h"

namespace noisegate {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};

class ProcessLimiter {
 public:
  void set_limit(int limit) {
    std::lock_guard lock(mu_);
    limit_ = std::max(1, limit);
    cv_.notify_all();
  }
  void acquire() {
    std::unique_lock lock(mu_);
    cv_.wait(lock, [&] { return active_ < limit_; });
    ++active_;
  }
  void release() {
    std::lock_guard lock(mu_);
    --active_;
    cv_.notify_one();
  }

 private:
  std::mutex mu_;
  std::condition_variable cv_;
  int limit_ = 4;
  int active_ = 0;
};

ProcessLimiter& limiter() {
  static ProcessLimiter l;
  return l;
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'') {
      out += "'\\''";
    } else {
      out += c;
    }
  }
  return out + "'";
}

size_t count_placeholders(std::string_view s) {
  size_t n = 0;
  for (size_t at = s.find("{}"); at != std::string_view::npos; at = s.find("{}", at + 2)) ++n;
  return n;
}

std::filesystem::path temp_wav_path() {
  static std::atomic<uint64_t> counter{0};
  std::random_device rd;
  const auto name = "noisegate-" + std::to_string(::getpid()) + "-" +
                    std::to_string(counter++) + "-" + std::to_string(rd()) + ".wav";
  return std::filesystem::temp_directory_path() / name;
}

struct TempFile {
  std::filesystem::path path;
  ~TempFile() {
    std::error_code ec;
    std::filesystem::remove(path, ec);
  }
};

std::shared_ptr<const std::map<std::string, std::string>> load_cache(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFound("cannot open transcript cache " + path.string());
  auto map = std::make_shared<std::map<std::string, std::string>>();
  std::string line;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      (*map)[j.at("sha256").get<std::string>()] = j.at("transcript").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument(path.string() + ":" + std::to_string(line_no) +
                            ": bad cache record: " + e.what());
    }
  }
  return map;
}

}  // namespace

std::string normalize_transcript(std::string_view text) {
  std::string out;
  bool pending_space = false;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += ' ';
    pending_space = false;
    out += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  return out;
}

std::string content_hash(const AudioClip& clip) {
  std::vector<uint8_t> bytes;
  bytes.reserve(clip.size() * 2);
  for (int16_t s : clip.samples()) {
    const auto u = static_cast<uint16_t>(s);
    bytes.push_back(static_cast<uint8_t>(u & 0xFF));
    bytes.push_back(static_cast<uint8_t>(u >> 8));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("SHA-256 computation failed");
  }
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned int i = 0; i < len; ++i) {
    hex += kHex[digest[i] >> 4];
    hex += kHex[digest[i] & 0xF];
  }
  return hex;
}

Recognizer::Recognizer(const RecognizerSpec& spec) : spec_(spec) {
  std::visit(Overloaded{
                 [&](const recognizer::Builtin& b) {
                   model_ = std::make_shared<const Model>(load_model(b.model_path));
                   id_ = "builtin:" + b.model_path.string();
                 },
                 [&](const recognizer::External& e) {
                   if (count_placeholders(e.command) != 1) {
                     throw InvalidArgument(
                         "external command template needs exactly one {} placeholder");
                   }
                   if (!(e.timeout_seconds > 0.0)) {
                     throw InvalidArgument("external timeout must be positive");
                   }
                   id_ = "external:" + e.command;
                 },
                 [&](const recognizer::Cache& c) {
                   cache_ = load_cache(c.path);
                   id_ = "cache:" + c.path.string();
                 },
             },
             spec_);
}

Recognizer::Recognizer(std::shared_ptr<const Model> model)
    : spec_(recognizer::Builtin{}), id_("builtin:memory"), model_(std::move(model)) {
  if (!model_) throw InvalidArgument("null model");
}

void Recognizer::set_external_concurrency(int limit) { limiter().set_limit(limit); }

Transcript Recognizer::transcribe(const AudioClip& clip) const {
  if (model_) return {predict(*model_, clip).label, id_};
  if (cache_) {
    const auto hash = content_hash(clip);
    const auto it = cache_->find(hash);
    if (it == cache_->end()) throw CacheMiss(hash);
    return {normalize_transcript(it->second), id_};
  }
  return run_external(clip);
}

Transcript Recognizer::run_external(const AudioClip& clip) const {
  const auto& ext = std::get<recognizer::External>(spec_);
  TempFile wav{temp_wav_path()};
  write_wav(clip, wav.path);
  std::string command = ext.command;
  command.replace(command.find("{}"), 2, shell_quote(wav.path.string()));

  limiter().acquire();
  struct Release {
    ~Release() { limiter().release(); }
  } release;

  int out_pipe[2];
  if (::pipe(out_pipe) != 0) throw IoError("pipe() failed");
  const pid_t pid = ::fork();
  if (pid < 0) {
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    throw IoError("fork() failed");
  }
  if (pid == 0) {
    ::setpgid(0, 0);
    ::dup2(out_pipe[1], STDOUT_FILENO);
    ::close(out_pipe[0]);
    ::close(out_pipe[1]);
    ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
    ::_exit(127);
  }
  ::close(out_pipe[1]);

  using Clock = std::chrono::steady_clock;
  const auto deadline =
      Clock::now() + std::chrono::duration_cast<Clock::duration>(
                         std::chrono::duration<double>(ext.timeout_seconds));
  std::string output;
  bool timed_out = false;
  char buf[4096];
  while (true) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    if (left.count() <= 0) {
      timed_out = true;
      break;
    }
    pollfd pfd{out_pipe[0], POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(left.count()));
    if (ready < 0 && errno == EINTR) continue;
    if (ready == 0) {
      timed_out = true;
      break;
    }
    const ssize_t got = ::read(out_pipe[0], buf, sizeof(buf));
    if (got < 0 && errno == EINTR) continue;
    if (got <= 0) break;
    output.append(buf, static_cast<size_t>(got));
  }
  ::close(out_pipe[0]);
  if (timed_out) {
    ::kill(-pid, SIGKILL);
    ::kill(pid, SIGKILL);
  }
  int status = 0;
  while (::waitpid(pid, &status, 0) < 0 && errno == EINTR) {
  }
  if (timed_out) {
    throw ExternalCommandTimeout("external recognizer timed out after " +
                                 std::to_string(ext.timeout_seconds) + " s: " + command);
  }
  if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) {
    const int code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    throw ExternalCommandFailed("external recognizer exited with status " +
                                std::to_string(code) + ": " + command);
  }
  const auto newline = output.find('\n');
  return {normalize_transcript(output.substr(0, newline)), id_};
}

Transcript transcribe(const RecognizerSpec& spec, const AudioClip& clip) {
  return Recognizer(spec).transcribe(clip);
}

RecognizerSpec parse_recognizer(std::string_view text, double timeout_seconds) {
  const auto colon = text.find(':');
  if (colon == std::string_view::npos) {
    throw InvalidArgument("recognizer must look like kind:argument, got '" +
                          std::string(text) + "'");
  }
  const auto kind = text.substr(0, colon);
  const std::string arg(text.substr(colon + 1));
  if (kind == "builtin") return recognizer::Builtin{arg};
  if (kind == "external") return recognizer::External{arg, timeout_seconds};
  if (kind == "cache") return recognizer::Cache{arg};
  throw InvalidArgument("unknown recognizer kind '" + std::string(kind) + "'");
}

size_t levenshtein(std::string_view a, std::string_view b) {
  if (a.size() < b.size()) std::swap(a, b);
  std::vector<size_t> row(b.size() + 1);
  for (size_t j = 0; j <= b.size(); ++j) row[j] = j;
  for (size_t i = 1; i <= a.size(); ++i) {
    size_t diag = row[0];
    row[0] = i;
    for (size_t j = 1; j <= b.size(); ++j) {
      const size_t up = row[j];
      row[j] = std::min({up + 1, row[j - 1] + 1, diag + (a[i - 1] == b[j - 1] ? 0 : 1)});
      diag = up;
    }
  }
  return row[b.size()];
}

}  // namespace noisegate
