#include "progeval/error.hpp"

namespace progeval {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kMalformedLine: return "MalformedLine";
    case ErrorKind::kDuplicateGameId: return "DuplicateGameId";
    case ErrorKind::kMissingSeatInSnapshot: return "MissingSeatInSnapshot";
    case ErrorKind::kNonMonotoneTurns: return "NonMonotoneTurns";
    case ErrorKind::kInvalidGame: return "InvalidGame";
    case ErrorKind::kEmptyGame: return "EmptyGame";
    case ErrorKind::kVersionMismatch: return "VersionMismatch";
    case ErrorKind::kIo: return "IoError";
    case ErrorKind::kNegativeInput: return "NegativeInput";
    case ErrorKind::kNegativeGamma: return "NegativeGamma";
    case ErrorKind::kInvalidProfile: return "InvalidProfile";
    case ErrorKind::kShapeMismatch: return "ShapeMismatch";
    case ErrorKind::kNonFiniteGradient: return "NonFiniteGradient";
    case ErrorKind::kNonFiniteUpdate: return "NonFiniteUpdate";
    case ErrorKind::kArchMismatch: return "ArchMismatch";
    case ErrorKind::kAllZeroScores: return "AllZeroScores";
    case ErrorKind::kNonConvergence: return "NonConvergence";
    case ErrorKind::kNonFiniteLoss: return "NonFiniteLoss";
    case ErrorKind::kTooFewGames: return "TooFewGames";
    case ErrorKind::kUnknownEstimator: return "UnknownEstimator";
    case ErrorKind::kSingleClass: return "SingleClass";
    case ErrorKind::kKeyMismatch: return "KeyMismatch";
    case ErrorKind::kMismatchedPlayerTypes: return "MismatchedPlayerTypes";
    case ErrorKind::kMissingTurns: return "MissingTurns";
    case ErrorKind::kDisconnectedGraph: return "DisconnectedGraph";
    case ErrorKind::kNoPursuitData: return "NoPursuitData";
    case ErrorKind::kMissingBaseline: return "MissingBaseline";
    case ErrorKind::kInsufficientGames: return "InsufficientGames";
    case ErrorKind::kInvalidConfig: return "InvalidConfig";
    case ErrorKind::kUnknownCommand: return "UnknownCommand";
    case ErrorKind::kConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace progeval
