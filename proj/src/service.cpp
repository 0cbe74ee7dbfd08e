// SPDX-License-Identifier: Apache-2.0
#include "modgate/service.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <tuple>

#include <fmt/format.h>

#include "modgate/error.hpp"
#include "modgate/io.hpp"

namespace modgate::service {

std::string_view to_string(FlagStatus s) { return s == FlagStatus::pending ? "pending" : "resolved"; }

FlagStatus parse_flag_status(std::string_view s) {
    if (s == "pending") return FlagStatus::pending;
    if (s == "resolved") return FlagStatus::resolved;
    throw Error(ErrorCode::InvalidValue, fmt::format("unknown flag status '{}'", s));
}

namespace {

nlohmann::json optional_json(const std::optional<std::string> &v) {
    return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::optional<std::string> optional_string(const nlohmann::json &j, const char *key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return j.at(key).get<std::string>();
}

TimestampMs parse_ts(const std::string &s) {
    const auto ts = parse_iso8601(s);
    if (!ts) throw Error(ErrorCode::InvalidValue, fmt::format("bad timestamp '{}'", s));
    return *ts;
}

}  // namespace

void to_json(nlohmann::json &j, const FlagRecord &f) {
    j = nlohmann::json{{"id", f.id},
                       {"message", f.message},
                       {"context", f.context},
                       {"predicted_label", optional_json(f.predicted_label)},
                       {"scores", f.scores},
                       {"reason", f.reason},
                       {"status", to_string(f.status)},
                       {"verdict", optional_json(f.verdict)},
                       {"moderator_id", optional_json(f.moderator_id)},
                       {"created_at", format_iso8601(f.created_at)},
                       {"resolved_at", f.resolved_at ? nlohmann::json(format_iso8601(*f.resolved_at))
                                                     : nlohmann::json(nullptr)}};
}

void from_json(const nlohmann::json &j, FlagRecord &f) {
    f.id = j.at("id").get<std::string>();
    f.message = j.at("message").get<Message>();
    f.context = j.value("context", std::vector<std::string>{});
    f.predicted_label = optional_string(j, "predicted_label");
    f.scores = j.value("scores", std::map<std::string, double>{});
    f.reason = j.value("reason", std::string{});
    f.status = parse_flag_status(j.at("status").get<std::string>());
    f.verdict = optional_string(j, "verdict");
    f.moderator_id = optional_string(j, "moderator_id");
    f.created_at = parse_ts(j.at("created_at").get<std::string>());
    if (auto r = optional_string(j, "resolved_at")) {
        f.resolved_at = parse_ts(*r);
    } else {
        f.resolved_at.reset();
    }
}

void GatePolicy::validate() const {
    if (!(tau >= 0.0 && tau <= 1.0)) throw Error(ErrorCode::InvalidValue, fmt::format("tau {} outside [0,1]", tau));
    for (const auto &label : hard_flag_labels) {
        if (!TaxonomySpec::moderation().contains(label)) {
            throw Error(ErrorCode::UnknownLabel, fmt::format("hard-flag label '{}' not in moderation taxonomy", label));
        }
    }
}

// ---------------------------------------------------------------------------

std::pair<std::unique_ptr<EventLog>, std::vector<nlohmann::json>> EventLog::open(const std::filesystem::path &path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    const int fd = ::open(path.c_str(), O_RDWR | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd < 0) {
        throw Error(ErrorCode::UnreadableSource,
                    fmt::format("cannot open event log '{}': {}", path.string(), std::strerror(errno)));
    }
    auto log = std::unique_ptr<EventLog>(new EventLog(path, fd));

    const std::string data = read_file(path);
    std::vector<nlohmann::json> events;
    std::size_t start = 0;
    std::size_t line_no = 0;
    while (start < data.size()) {
        const auto nl = data.find('\n', start);
        const bool terminated = nl != std::string::npos;
        const auto end = terminated ? nl : data.size();
        ++line_no;
        auto j = nlohmann::json::parse(std::string_view(data).substr(start, end - start), nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("event")) {
            if (!terminated) {
                if (::ftruncate(fd, static_cast<off_t>(start)) != 0) {
                    throw Error(ErrorCode::CorruptLog, fmt::format("cannot truncate torn tail of '{}'", path.string()));
                }
                break;
            }
            throw Error(ErrorCode::CorruptLog, fmt::format("{}:{}: unreadable event", path.string(), line_no));
        }
        if (!terminated) {
            // Complete JSON without its newline: keep it and finish the line.
            if (::write(fd, "\n", 1) != 1) throw Error(ErrorCode::CorruptLog, "cannot repair event log tail");
        }
        events.push_back(std::move(j));
        start = end + 1;
    }
    return {std::move(log), std::move(events)};
}

EventLog::~EventLog() {
    if (fd_ >= 0) ::close(fd_);
}

void EventLog::append(const nlohmann::json &event) {
    const std::string line = event.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace) + "\n";
    std::size_t written = 0;
    while (written < line.size()) {
        const auto n = ::write(fd_, line.data() + written, line.size() - written);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw Error(ErrorCode::UnreadableSource, fmt::format("event log write failed: {}", std::strerror(errno)));
        }
        written += static_cast<std::size_t>(n);
    }
    if (::fdatasync(fd_) != 0) {
        throw Error(ErrorCode::UnreadableSource, fmt::format("event log sync failed: {}", std::strerror(errno)));
    }
}

// ---------------------------------------------------------------------------

bool should_flag(const gateway::ClassificationResult &prediction, const GatePolicy &policy) {
    if (policy.hard_flag_labels.count(prediction.label)) return true;
    if (!prediction.scores) return false;
    const auto it = prediction.scores->find("not_toxic_not_spam");
    return it != prediction.scores->end() && it->second < policy.tau;
}

ModerationService::ModerationService(std::shared_ptr<gateway::TextClassifier> model, GatePolicy policy,
                                     const std::filesystem::path &event_log, Clock clock, std::size_t context_window)
    : model_(std::move(model)), policy_(std::move(policy)), clock_(std::move(clock)), context_window_(context_window) {
    policy_.validate();
    if (model_ && model_->taxonomy().task() != Task::moderation) {
        throw Error(ErrorCode::InvalidValue, "the gate needs a moderation model");
    }
    auto [log, events] = EventLog::open(event_log);
    log_ = std::move(log);
    for (const auto &e : events) apply(e);
}

void ModerationService::apply(const nlohmann::json &event) {
    const auto type = event.at("event").get<std::string>();
    if (type == "flag_created") {
        auto f = event.at("flag").get<FlagRecord>();
        flag_by_message_[f.message.id] = f.id;
        next_seq_ = std::max(next_seq_, event.value("seq", std::uint64_t{0}) + 1);
        flags_[f.id] = std::move(f);
    } else if (type == "flag_resolved") {
        auto &f = flags_.at(event.at("flag_id").get<std::string>());
        f.status = FlagStatus::resolved;
        f.verdict = event.at("verdict").get<std::string>();
        f.moderator_id = event.at("moderator_id").get<std::string>();
        f.resolved_at = parse_ts(event.at("resolved_at").get<std::string>());
        resolution_order_.push_back(f.id);
    } else {
        throw Error(ErrorCode::CorruptLog, fmt::format("unknown event type '{}'", type));
    }
}

ScoreOutcome ModerationService::score_message(const Message &msg) {
    if (msg.id.empty()) throw Error(ErrorCode::BadRequest, "message id is required");
    std::vector<std::string> context;
    {
        std::lock_guard lock(mu_);
        if (const auto it = flag_by_message_.find(msg.id); it != flag_by_message_.end()) {
            return {true, flags_.at(it->second), std::nullopt};
        }
        if (const auto it = recent_by_channel_.find(msg.channel_id); it != recent_by_channel_.end()) {
            context.assign(it->second.begin(), it->second.end());
        }
    }

    ScoreOutcome out;
    std::string reason;
    bool fail_closed = false;
    if (!model_) {
        fail_closed = true;
        reason = "model unavailable: no moderation model loaded";
    } else {
        try {
            out.prediction = model_->classify(context, msg.text);
        } catch (const Error &e) {
            if (e.code() == ErrorCode::EmptyText) throw;
            fail_closed = true;
            reason = fmt::format("model unavailable: {}", e.what());
        }
    }
    if (!fail_closed) {
        out.flagged = should_flag(*out.prediction, policy_);
        if (policy_.hard_flag_labels.count(out.prediction->label)) {
            reason = fmt::format("predicted {}", out.prediction->label);
        } else if (out.flagged) {
            reason = fmt::format("not_toxic_not_spam score {:.4f} below tau {:.4f}",
                                 out.prediction->scores->at("not_toxic_not_spam"), policy_.tau);
        }
    } else {
        out.flagged = true;
    }

    std::lock_guard lock(mu_);
    ++counters_.scored;
    if (context_window_ > 0) {
        auto &recent = recent_by_channel_[msg.channel_id];
        recent.push_back(msg.text);
        while (recent.size() > context_window_) recent.pop_front();
    }
    if (!out.flagged) {
        ++counters_.passed;
        return out;
    }
    // A concurrent request for the same message may have won the race.
    if (const auto it = flag_by_message_.find(msg.id); it != flag_by_message_.end()) {
        out.flag = flags_.at(it->second);
        return out;
    }
    FlagRecord f;
    const auto seq = next_seq_;
    f.id = fmt::format("flag-{:08d}", seq);
    f.message = msg;
    f.context = std::move(context);
    if (out.prediction) {
        f.predicted_label = out.prediction->label;
        if (out.prediction->scores) f.scores = *out.prediction->scores;
    }
    f.reason = reason;
    f.created_at = clock_();
    log_->append({{"event", "flag_created"}, {"seq", seq}, {"flag", f}});
    ++next_seq_;
    flag_by_message_[msg.id] = f.id;
    flags_[f.id] = f;
    ++counters_.flagged;
    if (fail_closed) ++counters_.fail_closed;
    out.flag = std::move(f);
    return out;
}

std::vector<FlagRecord> ModerationService::ordered(std::optional<FlagStatus> status) const {
    std::vector<FlagRecord> out;
    for (const auto &[id, f] : flags_) {
        if (!status || f.status == *status) out.push_back(f);
    }
    std::sort(out.begin(), out.end(),
              [](const FlagRecord &a, const FlagRecord &b) { return std::tie(a.created_at, a.id) < std::tie(b.created_at, b.id); });
    return out;
}

FlagPage ModerationService::list_flags(std::optional<FlagStatus> status, std::size_t page, std::size_t page_size) const {
    if (page == 0 || page_size == 0) throw Error(ErrorCode::BadRequest, "page and page_size must be positive");
    std::lock_guard lock(mu_);
    auto all = ordered(status);
    FlagPage p;
    p.page = page;
    p.page_size = page_size;
    p.total = all.size();
    const auto begin = std::min(all.size(), (page - 1) * page_size);
    const auto end = std::min(all.size(), begin + page_size);
    p.items.assign(std::make_move_iterator(all.begin() + static_cast<std::ptrdiff_t>(begin)),
                   std::make_move_iterator(all.begin() + static_cast<std::ptrdiff_t>(end)));
    return p;
}

FlagRecord ModerationService::resolve_flag(const std::string &flag_id, const std::string &verdict,
                                           const std::string &moderator_id) {
    const auto label = canonical_label(verdict);
    if (!TaxonomySpec::moderation().contains(label)) {
        throw Error(ErrorCode::UnknownLabel, fmt::format("verdict '{}' is not a moderation label", verdict));
    }
    if (moderator_id.empty()) throw Error(ErrorCode::MissingAnnotator, "moderator_id is required");
    std::lock_guard lock(mu_);
    const auto it = flags_.find(flag_id);
    if (it == flags_.end()) throw Error(ErrorCode::UnknownFlag, fmt::format("no flag '{}'", flag_id));
    if (it->second.status == FlagStatus::resolved) {
        throw Error(ErrorCode::AlreadyResolved, fmt::format("flag '{}' is already resolved", flag_id));
    }
    const auto now = clock_();
    // The resolution event is also the retraining record: one append, one commit.
    const nlohmann::json event{{"event", "flag_resolved"},
                               {"flag_id", flag_id},
                               {"verdict", label},
                               {"moderator_id", moderator_id},
                               {"resolved_at", format_iso8601(now)}};
    log_->append(event);
    apply(event);
    return it->second;
}

std::optional<FlagRecord> ModerationService::find(const std::string &flag_id) const {
    std::lock_guard lock(mu_);
    const auto it = flags_.find(flag_id);
    if (it == flags_.end()) return std::nullopt;
    return it->second;
}

std::vector<LabeledExample> ModerationService::retraining_log() const {
    std::lock_guard lock(mu_);
    std::vector<LabeledExample> out;
    for (const auto &id : resolution_order_) {
        const auto &f = flags_.at(id);
        LabeledExample ex;
        ex.message_id = f.message.id;
        ex.context = f.context;
        ex.text = f.message.text;
        ex.label = *f.verdict;
        ex.source = LabelSource::human;
        ex.annotator_id = f.moderator_id;
        out.push_back(std::move(ex));
    }
    return out;
}

CorpusExport ModerationService::export_retraining_corpus(TimestampMs since) const {
    std::vector<LabeledExample> examples;
    {
        std::lock_guard lock(mu_);
        for (const auto &id : resolution_order_) {
            const auto &f = flags_.at(id);
            if (*f.resolved_at <= since || f.message.text.find_first_not_of(" \t\r\n") == std::string::npos) continue;
            LabeledExample ex;
            ex.message_id = f.message.id;
            ex.context = f.context;
            ex.text = f.message.text;
            ex.label = *f.verdict;
            ex.source = LabelSource::human;
            ex.annotator_id = f.moderator_id;
            examples.push_back(std::move(ex));
        }
    }
    if (examples.empty()) return {};
    gateway::PromptTemplate tpl;
    tpl.task = Task::moderation;
    auto corpus = gateway::build_finetune_corpus(examples, tpl);
    return {std::move(corpus.bytes), corpus.total};
}

GateCounters ModerationService::counters() const {
    std::lock_guard lock(mu_);
    return counters_;
}

// ---------------------------------------------------------------------------

CalibrationResult calibrate_threshold(gateway::TextClassifier &model, const std::vector<LabeledExample> &validation,
                                      double target_recall, const GatePolicy &base) {
    if (!(target_recall >= 0.0 && target_recall <= 1.0)) {
        throw Error(ErrorCode::InvalidValue, "target recall must be in [0,1]");
    }
    struct Scored {
        bool toxic;
        bool benign;
        bool hard;
        double safe_score;
    };
    std::vector<Scored> scored;
    std::size_t toxic_total = 0;
    for (const auto &ex : validation) {
        const auto pred = model.classify(ex.context, ex.text);
        Scored s;
        s.toxic = ex.label == "toxic";
        s.benign = ex.label == "not_toxic_not_spam";
        s.hard = base.hard_flag_labels.count(pred.label) > 0;
        s.safe_score = 1.0;
        if (pred.scores) {
            if (const auto it = pred.scores->find("not_toxic_not_spam"); it != pred.scores->end()) s.safe_score = it->second;
        }
        toxic_total += s.toxic;
        scored.push_back(s);
    }
    if (toxic_total == 0) throw Error(ErrorCode::EmptyInput, "validation set has no toxic example");

    // Flag iff hard || score < tau, so the useful taus sit just above each
    // toxic example's safe score.
    std::vector<double> candidates{0.0};
    for (const auto &s : scored) {
        if (s.toxic && !s.hard) candidates.push_back(std::min(1.0, std::nextafter(s.safe_score, 2.0)));
    }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());

    const auto evaluate_tau = [&](double tau) {
        CalibrationResult r;
        r.tau = tau;
        r.toxic_total = toxic_total;
        std::size_t caught = 0;
        for (const auto &s : scored) {
            const bool flagged = s.hard || s.safe_score < tau;
            if (s.toxic) flagged ? ++caught : ++r.type_ii;
            if (s.benign) {
                ++r.benign_total;
                if (flagged) ++r.type_i;
            }
        }
        r.toxic_recall = static_cast<double>(caught) / static_cast<double>(toxic_total);
        r.target_met = r.toxic_recall >= target_recall;
        return r;
    };
    CalibrationResult last;
    for (const double tau : candidates) {
        last = evaluate_tau(tau);
        if (last.target_met) return last;
    }
    return last;
}

nlohmann::json to_json(const CalibrationResult &c) {
    return {{"tau", c.tau},
            {"toxic_recall", c.toxic_recall},
            {"target_met", c.target_met},
            {"toxic_total", c.toxic_total},
            {"type_ii", c.type_ii},
            {"type_i", c.type_i},
            {"benign_total", c.benign_total}};
}

}  // namespace modgate::service
