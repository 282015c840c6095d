#pragma once

#include <stdexcept>
#include <string>

namespace foodcal {

enum class ErrorCode {
    EmptyComponent,
    NoReferenceObject,
    InvalidDimension,
    EmptyMask,
    UnknownDensity,
    ShapeMismatch,
    CoinNotEncodable,
    EmptyDataset,
    TooFewRows,
    SingularSystem,
    DimensionMismatch,
    ZeroTotalWeight,
    LengthMismatch,
    DegenerateTarget,
    NoGroundTruth,
    PlacementFailure,
    ParseError,
    IoError,
    InvalidArgument,
};

const char* error_code_name(ErrorCode code);

// All data-level failures raised by the toolkit. The CLI maps these to exit code 2.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace foodcal
