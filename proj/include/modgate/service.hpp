// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <deque>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "modgate/domain.hpp"
#include "modgate/gateway.hpp"

namespace modgate::service {

enum class FlagStatus { pending, resolved };

std::string_view to_string(FlagStatus s);
FlagStatus parse_flag_status(std::string_view s);

struct FlagRecord {
    std::string id;
    Message message;
    std::vector<std::string> context;  // preceding same-channel texts seen by the gate
    std::optional<std::string> predicted_label;
    std::map<std::string, double> scores;
    std::string reason;
    FlagStatus status = FlagStatus::pending;
    std::optional<std::string> verdict;
    std::optional<std::string> moderator_id;
    TimestampMs created_at = 0;
    std::optional<TimestampMs> resolved_at;

    friend bool operator==(const FlagRecord &, const FlagRecord &) = default;
};

void to_json(nlohmann::json &j, const FlagRecord &f);
void from_json(const nlohmann::json &j, FlagRecord &f);

struct GatePolicy {
    /// Flag when the not_toxic_not_spam score falls below this.
    double tau = 0.7;
    std::set<std::string> hard_flag_labels{"toxic", "spam"};

    void validate() const;
};

/// Append-only JSONL log, one event per line, fsync'd per append.
class EventLog {
public:
    /// Opens (creating if needed) and returns every stored event. A torn
    /// final line, as left by a crash mid-append, is dropped and truncated
    /// away; damage anywhere else throws CorruptLog.
    static std::pair<std::unique_ptr<EventLog>, std::vector<nlohmann::json>> open(const std::filesystem::path &path);

    ~EventLog();
    EventLog(const EventLog &) = delete;
    EventLog &operator=(const EventLog &) = delete;

    void append(const nlohmann::json &event);
    const std::filesystem::path &path() const { return path_; }

private:
    EventLog(std::filesystem::path path, int fd) : path_(std::move(path)), fd_(fd) {}

    std::filesystem::path path_;
    int fd_ = -1;
};

struct ScoreOutcome {
    bool flagged = false;
    std::optional<FlagRecord> flag;
    std::optional<gateway::ClassificationResult> prediction;
};

struct FlagPage {
    std::vector<FlagRecord> items;
    std::size_t page = 1;
    std::size_t page_size = 50;
    std::size_t total = 0;
};

struct CorpusExport {
    std::string bytes;
    std::size_t count = 0;
};

struct GateCounters {
    std::uint64_t scored = 0;
    std::uint64_t passed = 0;
    std::uint64_t flagged = 0;
    std::uint64_t fail_closed = 0;
};

using Clock = std::function<TimestampMs()>;

class ModerationService {
public:
    /// `model` may be null: every message is then flagged (fail-closed).
    ModerationService(std::shared_ptr<gateway::TextClassifier> model, GatePolicy policy,
                      const std::filesystem::path &event_log, Clock clock = now_ms,
                      std::size_t context_window = 5);

    /// Flags when the predicted label is a hard-flag label or the
    /// not_toxic_not_spam score is below tau. The flag is durable before
    /// this returns. Scoring a message id that is already queued returns the
    /// existing flag.
    ScoreOutcome score_message(const Message &msg);

    /// Ordered by (created_at, id). `page` is 1-based.
    FlagPage list_flags(std::optional<FlagStatus> status, std::size_t page = 1, std::size_t page_size = 50) const;

    /// Throws UnknownFlag, AlreadyResolved, or UnknownLabel.
    FlagRecord resolve_flag(const std::string &flag_id, const std::string &verdict, const std::string &moderator_id);

    std::optional<FlagRecord> find(const std::string &flag_id) const;

    /// Human verdicts as training examples, in resolution order.
    std::vector<LabeledExample> retraining_log() const;

    /// Verdicts resolved strictly after `since`, in the fine-tune corpus format.
    CorpusExport export_retraining_corpus(TimestampMs since) const;

    GateCounters counters() const;
    const GatePolicy &policy() const { return policy_; }

private:
    void apply(const nlohmann::json &event);
    std::vector<FlagRecord> ordered(std::optional<FlagStatus> status) const;

    std::shared_ptr<gateway::TextClassifier> model_;
    GatePolicy policy_;
    Clock clock_;
    std::size_t context_window_;

    mutable std::mutex mu_;
    std::unique_ptr<EventLog> log_;
    std::map<std::string, FlagRecord> flags_;
    std::map<std::string, std::string> flag_by_message_;
    std::vector<std::string> resolution_order_;
    std::map<std::string, std::deque<std::string>> recent_by_channel_;
    std::uint64_t next_seq_ = 1;
    GateCounters counters_;
};

/// Flag decision for one prediction under `policy`.
bool should_flag(const gateway::ClassificationResult &prediction, const GatePolicy &policy);

struct CalibrationResult {
    double tau = 0;
    double toxic_recall = 0;
    bool target_met = false;
    std::size_t toxic_total = 0;
    std::size_t type_ii = 0;  // gold toxic, passed
    std::size_t type_i = 0;   // gold not_toxic_not_spam, flagged
    std::size_t benign_total = 0;
};

/// Smallest tau whose gate reaches `target_recall` on gold-toxic examples.
/// Throws EmptyInput if the validation set has no toxic example.
CalibrationResult calibrate_threshold(gateway::TextClassifier &model, const std::vector<LabeledExample> &validation,
                                      double target_recall, const GatePolicy &base = {});

nlohmann::json to_json(const CalibrationResult &c);

}  // namespace modgate::service
