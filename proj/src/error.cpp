#include "ronin/error.hpp"

namespace ronin {

const char* to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::GimbalDegenerate: return "GimbalDegenerate";
    case ErrorKind::MalformedHeader: return "MalformedHeader";
    case ErrorKind::MalformedRow: return "MalformedRow";
    case ErrorKind::NonMonotonicTime: return "NonMonotonicTime";
    case ErrorKind::NonUnitQuaternion: return "NonUnitQuaternion";
    case ErrorKind::TooShort: return "TooShort";
    case ErrorKind::OutOfRange: return "OutOfRange";
    case ErrorKind::InvalidSpec: return "InvalidSpec";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::NonScalarLoss: return "NonScalarLoss";
    case ErrorKind::VersionMismatch: return "VersionMismatch";
    case ErrorKind::MissingParameter: return "MissingParameter";
    case ErrorKind::EmptyDataset: return "EmptyDataset";
    case ErrorKind::DivergedLoss: return "DivergedLoss";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

Error::Error(ErrorKind kind, const std::string& detail)
    : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}

Error::Error(ErrorKind kind, std::size_t index, const std::string& detail)
    : std::runtime_error(std::string(to_string(kind)) + " at row " + std::to_string(index) +
                         ": " + detail),
      kind_(kind),
      has_index_(true),
      index_(index) {}

}  // namespace ronin
