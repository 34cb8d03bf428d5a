#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace redist {

enum class ErrorKind {
  InvalidArgument,
  DuplicateUnitId,
  DanglingEdge,
  SelfLoop,
  DuplicateEdge,
  DisconnectedGraph,
  MissingDataset,
  UnknownDataset,
  UnknownGroup,
  InconsistentCounts,
  ParseError,
  MissingColumn,
  NegativeCount,
  MissingDatasetRow,
  UnknownUnit,
  MissingUnit,
  CorruptRecord,
  DisconnectedSubset,
  InvalidInputPartition,
  Infeasible,
  NonpositiveIdeal,
  ZeroMinimum,
  EmptyEnsemble,
  NotFoundWithinGrid,
  ChainTooShort,
  Io,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::DuplicateUnitId: return "DuplicateUnitId";
    case ErrorKind::DanglingEdge: return "DanglingEdge";
    case ErrorKind::SelfLoop: return "SelfLoop";
    case ErrorKind::DuplicateEdge: return "DuplicateEdge";
    case ErrorKind::DisconnectedGraph: return "DisconnectedGraph";
    case ErrorKind::MissingDataset: return "MissingDataset";
    case ErrorKind::UnknownDataset: return "UnknownDataset";
    case ErrorKind::UnknownGroup: return "UnknownGroup";
    case ErrorKind::InconsistentCounts: return "InconsistentCounts";
    case ErrorKind::ParseError: return "ParseError";
    case ErrorKind::MissingColumn: return "MissingColumn";
    case ErrorKind::NegativeCount: return "NegativeCount";
    case ErrorKind::MissingDatasetRow: return "MissingDatasetRow";
    case ErrorKind::UnknownUnit: return "UnknownUnit";
    case ErrorKind::MissingUnit: return "MissingUnit";
    case ErrorKind::CorruptRecord: return "CorruptRecord";
    case ErrorKind::DisconnectedSubset: return "DisconnectedSubset";
    case ErrorKind::InvalidInputPartition: return "InvalidInputPartition";
    case ErrorKind::Infeasible: return "Infeasible";
    case ErrorKind::NonpositiveIdeal: return "NonpositiveIdeal";
    case ErrorKind::ZeroMinimum: return "ZeroMinimum";
    case ErrorKind::EmptyEnsemble: return "EmptyEnsemble";
    case ErrorKind::NotFoundWithinGrid: return "NotFoundWithinGrid";
    case ErrorKind::ChainTooShort: return "ChainTooShort";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

/// Every failure raised by the library. The kind is stable and testable; the
/// message carries the human-readable context (file, line, unit id, ...).
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Process exit code for a failure kind: 1 validation, 2 infeasible.
constexpr int exit_code(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::Infeasible:
    case ErrorKind::NotFoundWithinGrid:
      return 2;
    default:
      return 1;
  }
}

}  // namespace redist
