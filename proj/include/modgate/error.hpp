// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace modgate {

enum class ErrorCode {
    UnknownLabel,
    MissingAnnotator,
    InvalidValue,
    UnreadableSource,
    UnknownFormat,
    UnsortedInput,
    EmptyText,
    TemplateError,
    ProviderUnavailable,
    UnparseableCompletion,
    RateLimited,
    EmptyCorpus,
    MixedTasks,
    JobFailed,
    LengthMismatch,
    EmptyMatrix,
    NoPairableValues,
    DegenerateAgreement,
    EmptySample,
    DanglingReference,
    HoldoutOverlap,
    EmptyInput,
    ModelUnavailable,
    UnknownFlag,
    AlreadyResolved,
    CorruptLog,
    NotFound,
    Unauthorized,
    BadRequest,
};

std::string_view to_string(ErrorCode code);

/// Domain error carrying a stable machine-readable code. The code name is
/// what the CLI prints and what the HTTP API returns in `{code, message}`.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string &message)
        : std::runtime_error(message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }
    std::string_view code_name() const { return to_string(code_); }

private:
    ErrorCode code_;
};

}  // namespace modgate
