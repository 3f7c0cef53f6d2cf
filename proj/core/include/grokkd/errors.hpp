#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace grokkd {

// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid run configuration (bad key, bad value, unmet scenario requirement).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Tensor shape mismatch; message names the offending shapes.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Input outside an operation's mathematical domain (e.g. log1p below -1).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Non-finite values where finite ones are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

// API contract violation (non-scalar loss, empty dataset, bad position).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Token or label id outside the valid range.
class IndexError : public Error {
 public:
  using Error::Error;
};

// Malformed checkpoint or CSV container; carries the byte offset.
class FormatError : public Error {
 public:
  FormatError(const std::string& msg, std::uint64_t offset)
      : Error(msg + " (at byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
  explicit FormatError(const std::string& msg) : Error(msg), offset_(0) {}
  std::uint64_t offset() const { return offset_; }

 private:
  std::uint64_t offset_;
};

// Filesystem failure.
class IoError : public Error {
 public:
  using Error::Error;
};

// Training step aborted because a loss or gradient went NaN/Inf.
class NanAbortError : public Error {
 public:
  NanAbortError(const std::string& what_failed, std::int64_t step)
      : Error("non-finite " + what_failed + " at step " + std::to_string(step)), step_(step) {}
  std::int64_t step() const { return step_; }

 private:
  std::int64_t step_;
};

}  // namespace grokkd
