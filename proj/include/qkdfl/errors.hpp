#pragma once

#include <stdexcept>
#include <string>

namespace qkdfl {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A BB84 run or QBER estimate had no sifted positions to work with.
class DegenerateSessionError : public Error {
 public:
  using Error::Error;
};

/// derive_pair_key was asked for a pair with i == j or an index out of range.
class InvalidPairError : public Error {
 public:
  using Error::Error;
};

/// Updates handed to aggregation do not share names, shapes and order.
class AggregationShapeError : public Error {
 public:
  using Error::Error;
};

/// Protocol misuse, e.g. aggregating updates from different rounds.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

/// Cosine/Pearson proxy requested for a zero-norm or constant vector.
class UndefinedProxyError : public Error {
 public:
  using Error::Error;
};

/// Local training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  using Error::Error;
};

/// Experiment configuration is malformed. `path` locates the offending key.
class ConfigError : public Error {
 public:
  ConfigError(std::string path, const std::string& what)
      : Error(path.empty() ? what : path + ": " + what), path_(std::move(path)) {}
  const std::string& path() const noexcept { return path_; }

 private:
  std::string path_;
};

}  // namespace qkdfl
