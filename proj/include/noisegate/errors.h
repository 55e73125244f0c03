#pragma once

#include <stdexcept>
#include <string>

namespace noisegate {

// Base for every error raised by the library. Each failure mode named in the
// module contracts gets its own subclass so callers (and tests) can tell them
// apart without string matching.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class FileNotFound : public IoError {
 public:
  using IoError::IoError;
};

class MalformedWav : public Error {
 public:
  using Error::Error;
};

class UnsupportedFormat : public Error {
 public:
  using Error::Error;
};

class LengthMismatch : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class SilentCarrier : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class ShapeMismatch : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class UnknownLabel : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class CorruptModel : public Error {
 public:
  using Error::Error;
};

class VersionMismatch : public CorruptModel {
 public:
  using CorruptModel::CorruptModel;
};

class ExternalCommandFailed : public Error {
 public:
  using Error::Error;
};

class ExternalCommandTimeout : public Error {
 public:
  using Error::Error;
};

class CacheMiss : public Error {
 public:
  CacheMiss(const std::string& hash)
      : Error("transcript cache miss for content hash " + hash), hash_(hash) {}
  const std::string& hash() const { return hash_; }

 private:
  std::string hash_;
};

class UndefinedChangeRate : public Error {
 public:
  using Error::Error;
};

class SingleClass : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

class EmptyInput : public InvalidArgument {
 public:
  using InvalidArgument::InvalidArgument;
};

}  // namespace noisegate
