// SPDX-License-Identifier: Apache-2.0
#include "modgate/error.hpp"

namespace modgate {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::UnknownLabel: return "UnknownLabel";
        case ErrorCode::MissingAnnotator: return "MissingAnnotator";
        case ErrorCode::InvalidValue: return "InvalidValue";
        case ErrorCode::UnreadableSource: return "UnreadableSource";
        case ErrorCode::UnknownFormat: return "UnknownFormat";
        case ErrorCode::UnsortedInput: return "UnsortedInput";
        case ErrorCode::EmptyText: return "EmptyText";
        case ErrorCode::TemplateError: return "TemplateError";
        case ErrorCode::ProviderUnavailable: return "ProviderUnavailable";
        case ErrorCode::UnparseableCompletion: return "UnparseableCompletion";
        case ErrorCode::RateLimited: return "RateLimited";
        case ErrorCode::EmptyCorpus: return "EmptyCorpus";
        case ErrorCode::MixedTasks: return "MixedTasks";
        case ErrorCode::JobFailed: return "JobFailed";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::EmptyMatrix: return "EmptyMatrix";
        case ErrorCode::NoPairableValues: return "NoPairableValues";
        case ErrorCode::DegenerateAgreement: return "DegenerateAgreement";
        case ErrorCode::EmptySample: return "EmptySample";
        case ErrorCode::DanglingReference: return "DanglingReference";
        case ErrorCode::HoldoutOverlap: return "HoldoutOverlap";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::ModelUnavailable: return "ModelUnavailable";
        case ErrorCode::UnknownFlag: return "UnknownFlag";
        case ErrorCode::AlreadyResolved: return "AlreadyResolved";
        case ErrorCode::CorruptLog: return "CorruptLog";
        case ErrorCode::NotFound: return "NotFound";
        case ErrorCode::Unauthorized: return "Unauthorized";
        case ErrorCode::BadRequest: return "BadRequest";
    }
    return "Unknown";
}

}  // namespace modgate
