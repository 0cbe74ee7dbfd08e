// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <istream>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "modgate/domain.hpp"

namespace modgate::ingest {

enum class ExportFormat { jsonl, csv };

/// Throws Error(UnknownFormat).
ExportFormat parse_format(std::string_view name);
/// Picks a format from a file extension (`.jsonl`, `.json`, `.csv`).
ExportFormat format_for_path(const std::filesystem::path &path);

struct RejectedLine {
    std::size_t line = 0;  // 1-based
    std::string reason;
};

struct ParseResult {
    std::vector<Message> messages;
    std::vector<RejectedLine> rejected;
};

/// Parses a chat export. Malformed records are collected in `rejected`
/// and never abort the run. Throws UnreadableSource if the stream fails.
ParseResult parse_export(std::istream &in, ExportFormat format);
ParseResult parse_export_file(const std::filesystem::path &path, ExportFormat format);

/// Inverse of the JSONL branch of parse_export.
std::string serialize_jsonl(const std::vector<Message> &msgs);
std::string serialize_csv(const std::vector<Message> &msgs);

/// Drops whitespace-only messages and messages authored by `bot_ids`.
/// Order is preserved.
std::vector<Message> filter_messages(const std::vector<Message> &msgs, const std::set<std::string> &bot_ids);

/// One author id per line; blank lines and `#` comments ignored.
std::set<std::string> parse_bot_list(std::istream &in);
std::set<std::string> load_bot_list(const std::filesystem::path &path);

/// Sorts by (channel_id, timestamp, id).
void sort_messages(std::vector<Message> &msgs);

inline constexpr std::size_t kDefaultContextWindow = 5;

struct ContextualMessage {
    std::vector<std::string> context;  // preceding same-channel texts, oldest first
    Message message;
};

/// For each message, attaches up to `k` immediately preceding messages
/// from the same channel. Input must be ordered by (channel, timestamp,
/// id); throws UnsortedInput otherwise.
std::vector<ContextualMessage> build_context(const std::vector<Message> &msgs, std::size_t k);

}  // namespace modgate::ingest
