// SPDX-License-Identifier: Apache-2.0
#include "modgate/ingest.hpp"

#include <algorithm>
#include <deque>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <tuple>

#include <fmt/format.h>

#include "modgate/error.hpp"

namespace modgate::ingest {

ExportFormat parse_format(std::string_view name) {
    if (name == "jsonl") return ExportFormat::jsonl;
    if (name == "csv") return ExportFormat::csv;
    throw Error(ErrorCode::UnknownFormat, fmt::format("unknown export format '{}'", name));
}

ExportFormat format_for_path(const std::filesystem::path &path) {
    const auto ext = path.extension().string();
    if (ext == ".jsonl" || ext == ".json" || ext == ".ndjson") return ExportFormat::jsonl;
    if (ext == ".csv") return ExportFormat::csv;
    throw Error(ErrorCode::UnknownFormat, fmt::format("cannot infer export format from '{}'", path.string()));
}

namespace {

bool is_blank(std::string_view s) { return s.find_first_not_of(" \t\r\n") == std::string_view::npos; }

std::optional<bool> parse_bool(std::string_view s) {
    const auto v = canonical_label(s);
    if (v.empty() || v == "false" || v == "0" || v == "no") return false;
    if (v == "true" || v == "1" || v == "yes") return true;
    return std::nullopt;
}

// Returns the failure reason, or nullopt on success.
std::optional<std::string> message_from_json(std::string_view line, Message &out) {
    auto j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) return "malformed JSON";
    if (!j.is_object()) return "record is not a JSON object";
    for (const char *key : {"id", "channel_id", "author_id", "timestamp", "content"}) {
        if (!j.contains(key)) return fmt::format("missing field '{}'", key);
        if (!j.at(key).is_string()) return fmt::format("field '{}' is not a string", key);
    }
    if (j.contains("is_bot") && !j.at("is_bot").is_boolean() && !j.at("is_bot").is_null()) {
        return "field 'is_bot' is not a boolean";
    }
    const auto ts = parse_iso8601(j.at("timestamp").get<std::string>());
    if (!ts) return fmt::format("bad timestamp '{}'", j.at("timestamp").get<std::string>());
    out.id = j.at("id").get<std::string>();
    if (out.id.empty()) return "empty id";
    out.channel_id = j.at("channel_id").get<std::string>();
    out.author_id = j.at("author_id").get<std::string>();
    out.timestamp = *ts;
    out.text = j.at("content").get<std::string>();
    out.is_bot = j.contains("is_bot") && j.at("is_bot").is_boolean() && j.at("is_bot").get<bool>();
    return std::nullopt;
}

ParseResult parse_jsonl(std::istream &in) {
    ParseResult result;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (is_blank(line)) continue;
        Message m;
        if (auto err = message_from_json(line, m)) {
            result.rejected.push_back({line_no, std::move(*err)});
        } else {
            result.messages.push_back(std::move(m));
        }
    }
    if (in.bad()) throw Error(ErrorCode::UnreadableSource, "read failure while parsing export");
    return result;
}

struct CsvRecord {
    std::size_t line = 0;
    std::vector<std::string> fields;
    bool unterminated_quote = false;
};

// RFC 4180 reader; quoted fields may span lines.
class CsvReader {
public:
    explicit CsvReader(std::istream &in) : in_(in) {}

    std::optional<CsvRecord> next() {
        std::string line;
        if (!std::getline(in_, line)) return std::nullopt;
        ++line_no_;
        CsvRecord rec;
        rec.line = line_no_;
        std::string field;
        bool quoted = false;
        bool field_started_quoted = false;
        while (true) {
            for (std::size_t i = 0; i < line.size(); ++i) {
                const char c = line[i];
                if (quoted) {
                    if (c == '"') {
                        if (i + 1 < line.size() && line[i + 1] == '"') {
                            field += '"';
                            ++i;
                        } else {
                            quoted = false;
                        }
                    } else {
                        field += c;
                    }
                } else if (c == '"' && field.empty() && !field_started_quoted) {
                    quoted = true;
                    field_started_quoted = true;
                } else if (c == ',') {
                    rec.fields.push_back(std::move(field));
                    field.clear();
                    field_started_quoted = false;
                } else if (c == '\r' && i + 1 == line.size()) {
                } else {
                    field += c;
                }
            }
            if (!quoted) break;
            if (!std::getline(in_, line)) {
                rec.unterminated_quote = true;
                break;
            }
            ++line_no_;
            field += '\n';
        }
        rec.fields.push_back(std::move(field));
        return rec;
    }

    bool bad() const { return in_.bad(); }

private:
    std::istream &in_;
    std::size_t line_no_ = 0;
};

ParseResult parse_csv(std::istream &in) {
    ParseResult result;
    CsvReader reader(in);
    auto header = reader.next();
    while (header && header->fields.size() == 1 && is_blank(header->fields[0])) header = reader.next();
    if (!header) return result;

    std::map<std::string, std::size_t> column;
    for (std::size_t i = 0; i < header->fields.size(); ++i) column[canonical_label(header->fields[i])] = i;
    for (const char *key : {"id", "channel_id", "author_id", "timestamp", "content"}) {
        if (!column.count(key)) {
            throw Error(ErrorCode::UnknownFormat, fmt::format("CSV header lacks required column '{}'", key));
        }
    }
    const auto bot_col = column.count("is_bot") ? std::optional<std::size_t>(column["is_bot"]) : std::nullopt;

    while (auto rec = reader.next()) {
        if (rec->fields.size() == 1 && is_blank(rec->fields[0])) continue;
        if (rec->unterminated_quote) {
            result.rejected.push_back({rec->line, "unterminated quoted field"});
            continue;
        }
        if (rec->fields.size() != header->fields.size()) {
            result.rejected.push_back(
                {rec->line, fmt::format("expected {} fields, found {}", header->fields.size(), rec->fields.size())});
            continue;
        }
        const auto &f = rec->fields;
        Message m;
        m.id = f[column["id"]];
        m.channel_id = f[column["channel_id"]];
        m.author_id = f[column["author_id"]];
        m.text = f[column["content"]];
        const auto ts = parse_iso8601(f[column["timestamp"]]);
        if (m.id.empty()) {
            result.rejected.push_back({rec->line, "empty id"});
            continue;
        }
        if (!ts) {
            result.rejected.push_back({rec->line, fmt::format("bad timestamp '{}'", f[column["timestamp"]])});
            continue;
        }
        m.timestamp = *ts;
        if (bot_col) {
            const auto b = parse_bool(f[*bot_col]);
            if (!b) {
                result.rejected.push_back({rec->line, fmt::format("bad is_bot value '{}'", f[*bot_col])});
                continue;
            }
            m.is_bot = *b;
        }
        result.messages.push_back(std::move(m));
    }
    if (reader.bad()) throw Error(ErrorCode::UnreadableSource, "read failure while parsing export");
    return result;
}

std::string csv_escape(std::string_view s) {
    if (s.find_first_of(",\"\n\r") == std::string_view::npos && !s.empty()) return std::string(s);
    std::string out = "\"";
    for (const char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

}  // namespace

ParseResult parse_export(std::istream &in, ExportFormat format) {
    if (!in) throw Error(ErrorCode::UnreadableSource, "export stream is not readable");
    switch (format) {
        case ExportFormat::jsonl: return parse_jsonl(in);
        case ExportFormat::csv: return parse_csv(in);
    }
    throw Error(ErrorCode::UnknownFormat, "unknown export format");
}

ParseResult parse_export_file(const std::filesystem::path &path, ExportFormat format) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::UnreadableSource, fmt::format("cannot open '{}'", path.string()));
    return parse_export(in, format);
}

std::string serialize_jsonl(const std::vector<Message> &msgs) {
    std::string out;
    for (const auto &m : msgs) {
        out += nlohmann::json(m).dump();
        out += '\n';
    }
    return out;
}

std::string serialize_csv(const std::vector<Message> &msgs) {
    std::string out = "id,channel_id,author_id,timestamp,content,is_bot\n";
    for (const auto &m : msgs) {
        out += fmt::format("{},{},{},{},{},{}\n", csv_escape(m.id), csv_escape(m.channel_id), csv_escape(m.author_id),
                           format_iso8601(m.timestamp), csv_escape(m.text), m.is_bot ? "true" : "false");
    }
    return out;
}

std::vector<Message> filter_messages(const std::vector<Message> &msgs, const std::set<std::string> &bot_ids) {
    std::vector<Message> out;
    out.reserve(msgs.size());
    std::copy_if(msgs.begin(), msgs.end(), std::back_inserter(out),
                 [&](const Message &m) { return !is_blank(m.text) && !bot_ids.count(m.author_id); });
    return out;
}

std::set<std::string> parse_bot_list(std::istream &in) {
    std::set<std::string> ids;
    std::string line;
    while (std::getline(in, line)) {
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        const auto e = line.find_last_not_of(" \t\r");
        ids.insert(line.substr(b, e - b + 1));
    }
    return ids;
}

std::set<std::string> load_bot_list(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::UnreadableSource, fmt::format("cannot open bot list '{}'", path.string()));
    return parse_bot_list(in);
}

void sort_messages(std::vector<Message> &msgs) {
    std::sort(msgs.begin(), msgs.end(), [](const Message &a, const Message &b) {
        return std::tie(a.channel_id, a.timestamp, a.id) < std::tie(b.channel_id, b.timestamp, b.id);
    });
}

std::vector<ContextualMessage> build_context(const std::vector<Message> &msgs, std::size_t k) {
    std::vector<ContextualMessage> out;
    out.reserve(msgs.size());
    std::deque<const Message *> window;
    for (std::size_t i = 0; i < msgs.size(); ++i) {
        const Message &m = msgs[i];
        if (i > 0) {
            const Message &prev = msgs[i - 1];
            if (std::tie(m.channel_id, m.timestamp) < std::tie(prev.channel_id, prev.timestamp)) {
                throw Error(ErrorCode::UnsortedInput,
                            fmt::format("message '{}' precedes '{}' in (channel, timestamp) order", m.id, prev.id));
            }
            if (m.channel_id != prev.channel_id) window.clear();
        }
        ContextualMessage cm;
        cm.message = m;
        for (const Message *p : window) cm.context.push_back(p->text);
        out.push_back(std::move(cm));
        if (k > 0) {
            window.push_back(&m);
            if (window.size() > k) window.pop_front();
        }
    }
    return out;
}

}  // namespace modgate::ingest
