#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace progeval {

enum class ErrorKind {
  // game-data
  kMalformedLine,
  kDuplicateGameId,
  kMissingSeatInSnapshot,
  kNonMonotoneTurns,
  kInvalidGame,
  kEmptyGame,
  kVersionMismatch,
  kIo,
  // feature-pipeline
  kNegativeInput,
  kNegativeGamma,
  kInvalidProfile,
  // diffcore
  kShapeMismatch,
  kNonFiniteGradient,
  kNonFiniteUpdate,
  kArchMismatch,
  // estimators
  kAllZeroScores,
  kNonConvergence,
  kNonFiniteLoss,
  kTooFewGames,
  kUnknownEstimator,
  // validity
  kSingleClass,
  kKeyMismatch,
  kMismatchedPlayerTypes,
  // rating
  kMissingTurns,
  kDisconnectedGraph,
  // profiler
  kNoPursuitData,
  kMissingBaseline,
  kInsufficientGames,
  // arena
  kInvalidConfig,
  // cli
  kUnknownCommand,
  kConfigError,
};

std::string_view to_string(ErrorKind kind);

/// Single exception type for the library; `kind()` is stable and
/// machine-readable, `what()` carries the human context.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& context)
      : std::runtime_error(std::string(to_string(kind)) + ": " + context),
        kind_(kind),
        context_(context) {}

  ErrorKind kind() const noexcept { return kind_; }
  const std::string& context() const noexcept { return context_; }

 private:
  ErrorKind kind_;
  std::string context_;
};

}  // namespace progeval
