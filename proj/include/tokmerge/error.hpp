#pragma once

#include <stdexcept>
#include <string>

namespace tokmerge {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor dimensions do not line up (matmul inner dims, conv input vs kernel,
// merge map vs token count, ...).
class ShapeError : public Error {
 public:
  explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// A scalar argument is out of its valid range (rate outside [0,1), eps <= 0,
// reduction quantity too large, ...).
class ParameterError : public Error {
 public:
  explicit ParameterError(const std::string& msg) : Error(msg) {}
};

// A merge policy cannot be satisfied on the given grid (not enough source
// tokens for the requested merge count).
class PolicyError : public Error {
 public:
  explicit PolicyError(const std::string& msg) : Error(msg) {}
};

// An attention / model configuration is inconsistent (head count does not
// divide channels, mismatched variant rates, ...).
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// A serialized file is malformed (bad version, truncated blob, overlapping
// manifest offsets).
class FormatError : public Error {
 public:
  explicit FormatError(const std::string& msg) : Error(msg) {}
};

// Manifest/blob contents do not match the model configuration they are being
// loaded into.
class LoadError : public Error {
 public:
  explicit LoadError(const std::string& msg) : Error(msg) {}
};

}  // namespace tokmerge
