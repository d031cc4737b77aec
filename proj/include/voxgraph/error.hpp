#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace voxgraph {

/// Base of every error thrown by the library.
class Error : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class ParseErrorKind { BadMagic, Truncated, ZeroDims, BadValue, DimsMismatch };

inline const char* to_string(ParseErrorKind k) {
  switch (k) {
    case ParseErrorKind::BadMagic: return "bad magic";
    case ParseErrorKind::Truncated: return "truncated payload";
    case ParseErrorKind::ZeroDims: return "zero dimension";
    case ParseErrorKind::BadValue: return "invalid value";
    case ParseErrorKind::DimsMismatch: return "dimension mismatch";
  }
  return "unknown";
}

/// Malformed file contents. `offset` is the byte position where decoding failed.
class ParseError : public Error {
public:
  ParseError(ParseErrorKind kind, std::size_t offset, const std::string& detail)
      : Error(std::string(to_string(kind)) + " at byte offset " + std::to_string(offset) +
              (detail.empty() ? "" : ": " + detail)),
        kind_(kind), offset_(offset) {}

  ParseErrorKind kind() const noexcept { return kind_; }
  std::size_t offset() const noexcept { return offset_; }

private:
  ParseErrorKind kind_;
  std::size_t offset_;
};

class IoError : public Error {
public:
  using Error::Error;
};

/// Every voxel of a volume was filtered as signal-free.
class EmptyVoxelSetError : public Error {
public:
  using Error::Error;
};

class UndefinedCorrelationError : public Error {
public:
  using Error::Error;
};

/// Invalid argument, out-of-range id or violated precondition.
class ContractError : public Error {
public:
  using Error::Error;
};

/// NaN or Inf produced during a forward or backward pass.
class NumericError : public Error {
public:
  NumericError(int layer, const std::string& what)
      : Error("non-finite value in layer " + std::to_string(layer) + ": " + what), layer_(layer) {}
  int layer() const noexcept { return layer_; }

private:
  int layer_;
};

class SplitError : public Error {
public:
  using Error::Error;
};

class GridError : public Error {
public:
  using Error::Error;
};

}  // namespace voxgraph
