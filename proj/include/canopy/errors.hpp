#pragma once

#include <stdexcept>
#include <string>

namespace canopy {

// Error taxonomy shared by every module. Exit-code mapping lives in the CLI:
// ConfigError/ValidationError -> 2, DependencyError -> 3, everything else -> 4.

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad configuration or precondition supplied by the caller.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error("config error: " + msg) {}
};

// A value object violates one of its declared invariants.
class ValidationError : public Error {
 public:
  explicit ValidationError(const std::string& msg) : Error("validation error: " + msg) {}
};

// Malformed input file (bad JSON line, truncated record, ...).
class ParseError : public Error {
 public:
  explicit ParseError(const std::string& msg) : Error("parse error: " + msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error("io error: " + msg) {}
};

// Cross-artifact inconsistency (unknown tree_id, label mismatch, ...).
class ConsistencyError : public Error {
 public:
  explicit ConsistencyError(const std::string& msg) : Error("consistency error: " + msg) {}
};

// Missing external dependency (pretrained weights, upstream artifact).
class DependencyError : public Error {
 public:
  explicit DependencyError(const std::string& msg) : Error("dependency error: " + msg) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& msg) : Error("format error: " + msg) {}
};

class GeometryError : public Error {
 public:
  explicit GeometryError(const std::string& msg) : Error("geometry error: " + msg) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& msg) : Error("numeric error: " + msg) {}
};

}  // namespace canopy
