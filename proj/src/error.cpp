#include "clozefit/error.hpp"

namespace clozefit {

std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::MalformedTemplate: return "MalformedTemplate";
    case ErrorCode::SlotUnfilled: return "SlotUnfilled";
    case ErrorCode::UnknownLabel: return "UnknownLabel";
    case ErrorCode::UnknownToken: return "UnknownToken";
    case ErrorCode::InputTooLong: return "InputTooLong";
    case ErrorCode::NoMaskPresent: return "NoMaskPresent";
    case ErrorCode::SegmentMismatch: return "SegmentMismatch";
    case ErrorCode::CapabilityError: return "CapabilityError";
    case ErrorCode::EmptyBatch: return "EmptyBatch";
    case ErrorCode::TrainingDiverged: return "TrainingDiverged";
    case ErrorCode::EmptyInput: return "EmptyInput";
    case ErrorCode::ShapeError: return "ShapeError";
    case ErrorCode::OutOfInterval: return "OutOfInterval";
    case ErrorCode::NoValidAssignment: return "NoValidAssignment";
    case ErrorCode::FormMismatch: return "FormMismatch";
    case ErrorCode::DegenerateTemplate: return "DegenerateTemplate";
    case ErrorCode::NoUsableTemplate: return "NoUsableTemplate";
    case ErrorCode::EmptyClassPool: return "EmptyClassPool";
    case ErrorCode::InsufficientData: return "InsufficientData";
    case ErrorCode::NoSuccessfulTrial: return "NoSuccessfulTrial";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::EmptyResults: return "EmptyResults";
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

} // namespace clozefit
