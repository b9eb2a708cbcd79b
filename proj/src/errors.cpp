#include "kflow/errors.hpp"

namespace kflow {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParameterArity: return "ParameterArity";
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::SeriesTooShort: return "SeriesTooShort";
    case ErrorCode::SingularGram: return "SingularGram";
    case ErrorCode::NegativeVariance: return "NegativeVariance";
    case ErrorCode::ZeroDenominator: return "ZeroDenominator";
    case ErrorCode::BatchTooLarge: return "BatchTooLarge";
    case ErrorCode::SampleTooLarge: return "SampleTooLarge";
    case ErrorCode::NoValidNeighbors: return "NoValidNeighbors";
    case ErrorCode::AllProbesFailed: return "AllProbesFailed";
    case ErrorCode::TrainingStalled: return "TrainingStalled";
    case ErrorCode::ChecksumMismatch: return "ChecksumMismatch";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace kflow
