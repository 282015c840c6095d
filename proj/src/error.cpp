#include "foodcal/error.hpp"

namespace foodcal {

const char* error_code_name(ErrorCode code) {
    switch (code) {
        case ErrorCode::EmptyComponent: return "EmptyComponent";
        case ErrorCode::NoReferenceObject: return "NoReferenceObject";
        case ErrorCode::InvalidDimension: return "InvalidDimension";
        case ErrorCode::EmptyMask: return "EmptyMask";
        case ErrorCode::UnknownDensity: return "UnknownDensity";
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::CoinNotEncodable: return "CoinNotEncodable";
        case ErrorCode::EmptyDataset: return "EmptyDataset";
        case ErrorCode::TooFewRows: return "TooFewRows";
        case ErrorCode::SingularSystem: return "SingularSystem";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::ZeroTotalWeight: return "ZeroTotalWeight";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::DegenerateTarget: return "DegenerateTarget";
        case ErrorCode::NoGroundTruth: return "NoGroundTruth";
        case ErrorCode::PlacementFailure: return "PlacementFailure";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

}  // namespace foodcal
