#pragma once

#include <stdexcept>
#include <string>

namespace sem {

enum class ErrorCode {
  UnknownOperator,
  MalformedTerm,
  BadCommandArity,
  UnbalancedParens,
  UnknownParameterName,
  DuplicateFixedLoading,
  ConflictingClass,
  TooFewRows,
  AllMissingColumn,
  SingularResolvent,
  SigmaNotPD,
  EmptyRow,
  MissingWeightMatrix,
  SingularS,
  RankDeficientX2,
  LNotPD,
  TNotPD,
  AsymmetricK,
  UnknownGroupLabel,
  MissingColumn,
  DimensionMismatch,
  NegativeDt,
  ObjectiveError,
  ParseError,
  DomainError,
  ExogenousTarget,
  SingularSigma22,
  SingularSystem,
  SingularTi,
  InfeasibleConfig,
  CannotAchievePD,
  AllReplicatesFailed,
  NoClustersFound,
  NotFitted,
  MethodMismatch,
  Unsupported,
  Io,
};

const char* error_name(ErrorCode c);

class SemError : public std::runtime_error {
 public:
  SemError(ErrorCode code, const std::string& msg)
      : std::runtime_error(std::string(error_name(code)) + ": " + msg), code_(code) {}
  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace sem
