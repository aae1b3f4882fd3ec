#include "sem/errors.hpp"

namespace sem {

const char* error_name(ErrorCode c) {
  switch (c) {
    case ErrorCode::UnknownOperator: return "UnknownOperator";
    case ErrorCode::MalformedTerm: return "MalformedTerm";
    case ErrorCode::BadCommandArity: return "BadCommandArity";
    case ErrorCode::UnbalancedParens: return "UnbalancedParens";
    case ErrorCode::UnknownParameterName: return "UnknownParameterName";
    case ErrorCode::DuplicateFixedLoading: return "DuplicateFixedLoading";
    case ErrorCode::ConflictingClass: return "ConflictingClass";
    case ErrorCode::TooFewRows: return "TooFewRows";
    case ErrorCode::AllMissingColumn: return "AllMissingColumn";
    case ErrorCode::SingularResolvent: return "SingularResolvent";
    case ErrorCode::SigmaNotPD: return "SigmaNotPD";
    case ErrorCode::EmptyRow: return "EmptyRow";
    case ErrorCode::MissingWeightMatrix: return "MissingWeightMatrix";
    case ErrorCode::SingularS: return "SingularS";
    case ErrorCode::RankDeficientX2: return "RankDeficientX2";
    case ErrorCode::LNotPD: return "LNotPD";
    case ErrorCode::TNotPD: return "TNotPD";
    case ErrorCode::AsymmetricK: return "AsymmetricK";
    case ErrorCode::UnknownGroupLabel: return "UnknownGroupLabel";
    case ErrorCode::MissingColumn: return "MissingColumn";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::NegativeDt: return "NegativeDt";
    case ErrorCode::ObjectiveError: return "ObjectiveError";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::DomainError: return "DomainError";
    case ErrorCode::ExogenousTarget: return "ExogenousTarget";
    case ErrorCode::SingularSigma22: return "SingularSigma22";
    case ErrorCode::SingularSystem: return "SingularSystem";
    case ErrorCode::SingularTi: return "SingularTi";
    case ErrorCode::InfeasibleConfig: return "InfeasibleConfig";
    case ErrorCode::CannotAchievePD: return "CannotAchievePD";
    case ErrorCode::AllReplicatesFailed: return "AllReplicatesFailed";
    case ErrorCode::NoClustersFound: return "NoClustersFound";
    case ErrorCode::NotFitted: return "NotFitted";
    case ErrorCode::MethodMismatch: return "MethodMismatch";
    case ErrorCode::Unsupported: return "Unsupported";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace sem
