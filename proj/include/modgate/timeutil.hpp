// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace modgate {

/// Milliseconds since the Unix epoch, UTC.
using TimestampMs = std::int64_t;

/// Parses an ISO-8601 instant: `YYYY-MM-DDTHH:MM:SS[.f+](Z|+HH:MM|-HH:MM)`.
/// A space is accepted in place of `T`; fractional digits beyond
/// milliseconds are truncated. Returns nullopt on any malformed input.
std::optional<TimestampMs> parse_iso8601(std::string_view text);

/// Formats as `YYYY-MM-DDTHH:MM:SS.mmmZ`.
std::string format_iso8601(TimestampMs ms);

TimestampMs now_ms();

}  // namespace modgate
