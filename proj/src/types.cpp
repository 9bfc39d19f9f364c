#include "stcluster/types.hpp"

namespace stcluster {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::InvalidEdge: return "InvalidEdge";
    case ErrorCode::RhoOutOfRange: return "RhoOutOfRange";
    case ErrorCode::MissingCentroids: return "MissingCentroids";
    case ErrorCode::MissingCell: return "MissingCell";
    case ErrorCode::NonPositiveExpected: return "NonPositiveExpected";
    case ErrorCode::NegativeCount: return "NegativeCount";
    case ErrorCode::MalformedInput: return "MalformedInput";
    case ErrorCode::DegenerateT: return "DegenerateT";
    case ErrorCode::VariantMismatch: return "VariantMismatch";
    case ErrorCode::OrderingViolated: return "OrderingViolated";
    case ErrorCode::NonFiniteLogPosterior: return "NonFiniteLogPosterior";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::MissingArtifacts: return "MissingArtifacts";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace stcluster
