#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace clozefit {

enum class ErrorCode {
    MalformedTemplate,
    SlotUnfilled,
    UnknownLabel,
    UnknownToken,
    InputTooLong,
    NoMaskPresent,
    SegmentMismatch,
    CapabilityError,
    EmptyBatch,
    TrainingDiverged,
    EmptyInput,
    ShapeError,
    OutOfInterval,
    NoValidAssignment,
    FormMismatch,
    DegenerateTemplate,
    NoUsableTemplate,
    EmptyClassPool,
    InsufficientData,
    NoSuccessfulTrial,
    ParseError,
    EmptyResults,
    InvalidArgument,
    IoError,
};

std::string_view to_string(ErrorCode code);

/// Every failure raised by the library carries one of the codes above so
/// callers (and the CLI's error record) can dispatch without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace clozefit
