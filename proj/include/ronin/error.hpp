#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ronin {

enum class ErrorKind {
  GimbalDegenerate,
  MalformedHeader,
  MalformedRow,
  NonMonotonicTime,
  NonUnitQuaternion,
  TooShort,
  OutOfRange,
  InvalidSpec,
  ShapeMismatch,
  NonScalarLoss,
  VersionMismatch,
  MissingParameter,
  EmptyDataset,
  DivergedLoss,
  InvalidArgument,
  Io,
};

const char* to_string(ErrorKind kind) noexcept;

// All toolkit failures are reported through this type; `kind()` carries the
// machine-readable category and `what()` the human-readable detail.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& detail);
  // For row- or frame-specific failures; `index()` is the zero-based frame.
  Error(ErrorKind kind, std::size_t index, const std::string& detail);

  ErrorKind kind() const noexcept { return kind_; }
  bool has_index() const noexcept { return has_index_; }
  std::size_t index() const noexcept { return index_; }

 private:
  ErrorKind kind_;
  bool has_index_ = false;
  std::size_t index_ = 0;
};

}  // namespace ronin
