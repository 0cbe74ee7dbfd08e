// SPDX-License-Identifier: Apache-2.0
#include "modgate/domain.hpp"

#include <algorithm>
#include <cctype>

#include <fmt/format.h>

#include "modgate/error.hpp"

namespace modgate {

std::string_view to_string(Task task) {
    switch (task) {
        case Task::intent: return "intent";
        case Task::moderation: return "moderation";
        case Task::contribution: return "contribution";
    }
    return "unknown";
}

Task parse_task(std::string_view name) {
    if (name == "intent") return Task::intent;
    if (name == "moderation") return Task::moderation;
    if (name == "contribution") return Task::contribution;
    throw Error(ErrorCode::InvalidValue, fmt::format("unknown task '{}'", name));
}

TaxonomySpec::TaxonomySpec(Task task, std::vector<std::pair<std::string, std::string>> labels_and_definitions,
                           std::size_t default_index)
    : task_(task), default_index_(default_index) {
    for (auto &[label, definition] : labels_and_definitions) {
        labels_.push_back(std::move(label));
        definitions_.push_back(std::move(definition));
    }
}

// Definitions never mention a label token, so each label appears once in a
// rendered instruction block.
const TaxonomySpec &TaxonomySpec::intent() {
    static const TaxonomySpec spec(
        Task::intent,
        {
            {"crypto", "Talk about tokens, NFTs, wallets, trading, prices or blockchain projects."},
            {"fan", "Talk about the show, its episodes, characters, actors or the wider story universe."},
            {"casual", "Greetings, small talk, jokes or anything unrelated to the other two topics."},
        },
        2);
    return spec;
}

const TaxonomySpec &TaxonomySpec::moderation() {
    static const TaxonomySpec spec(
        Task::moderation,
        {
            {"toxic", "Insults, slurs, harassment, threats or hateful language aimed at people."},
            {"spam", "Unsolicited promotion, scam links, repeated flooding or fake giveaways."},
            {"not_toxic_not_spam", "Ordinary conversation that is neither abusive nor promotional."},
        },
        2);
    return spec;
}

const TaxonomySpec &TaxonomySpec::contribution() {
    static const TaxonomySpec spec(
        Task::contribution,
        {
            {"na", "The message does not add value to the community beyond ordinary chatter."},
            {"onboarding", "Welcoming newcomers or helping them find their way around the server."},
            {"knowledge_tcg", "Sharing knowledge about the trading card game, its rules, decks or cards."},
            {"knowledge_fan", "Sharing knowledge about the show, its lore, episodes or characters."},
            {"knowledge_crypto", "Sharing knowledge about tokens, wallets, marketplaces or blockchain mechanics."},
            {"content", "Original creative work such as art, videos, memes or stories made by the member."},
            {"moderation", "Helping keep order: warning about scams, calming disputes, pointing to the rules."},
            {"suggestion", "Proposing improvements, features or ideas for the project or the community."},
        },
        0);
    return spec;
}

const TaxonomySpec &TaxonomySpec::for_task(Task task) {
    switch (task) {
        case Task::intent: return intent();
        case Task::moderation: return moderation();
        case Task::contribution: return contribution();
    }
    throw Error(ErrorCode::InvalidValue, "unknown task");
}

const std::string &TaxonomySpec::definition(std::string_view label) const {
    const int i = index_of(label);
    if (i < 0) throw Error(ErrorCode::UnknownLabel, fmt::format("label '{}' not in {} taxonomy", label, to_string(task_)));
    return definitions_[static_cast<std::size_t>(i)];
}

bool TaxonomySpec::contains(std::string_view label) const { return index_of(label) >= 0; }

int TaxonomySpec::index_of(std::string_view label) const {
    const auto it = std::find(labels_.begin(), labels_.end(), label);
    return it == labels_.end() ? -1 : static_cast<int>(it - labels_.begin());
}

std::string_view to_string(LabelSource source) {
    switch (source) {
        case LabelSource::teacher_zero_shot: return "teacher_zero_shot";
        case LabelSource::human: return "human";
        case LabelSource::student_model: return "student_model";
    }
    return "unknown";
}

LabelSource parse_label_source(std::string_view name) {
    if (name == "teacher_zero_shot") return LabelSource::teacher_zero_shot;
    if (name == "human") return LabelSource::human;
    if (name == "student_model") return LabelSource::student_model;
    throw Error(ErrorCode::InvalidValue, fmt::format("unknown label source '{}'", name));
}

std::string canonical_label(std::string_view raw) {
    const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    std::size_t b = 0, e = raw.size();
    while (b < e && is_space(static_cast<unsigned char>(raw[b]))) ++b;
    while (e > b && is_space(static_cast<unsigned char>(raw[e - 1]))) --e;
    std::string out(raw.substr(b, e - b));
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> tokens;
    std::string cur;
    const auto flush = [&] {
        if (cur.size() >= 2) tokens.push_back(cur);
        cur.clear();
    };
    for (const char ch : text) {
        const auto c = static_cast<unsigned char>(ch);
        if (c >= 0x80 || std::isalnum(c)) {
            cur += static_cast<char>(std::tolower(c));
        } else {
            flush();
        }
    }
    flush();
    return tokens;
}

LabeledExample validate_example(LabeledExample ex, const TaxonomySpec &tax) {
    ex.label = canonical_label(ex.label);
    if (!tax.contains(ex.label)) {
        throw Error(ErrorCode::UnknownLabel,
                    fmt::format("label '{}' is not part of the {} taxonomy", ex.label, to_string(tax.task())));
    }
    const bool has_annotator = ex.annotator_id.has_value() && !ex.annotator_id->empty();
    if (ex.source == LabelSource::human && !has_annotator) {
        throw Error(ErrorCode::MissingAnnotator, fmt::format("human label on '{}' has no annotator_id", ex.message_id));
    }
    if (ex.source != LabelSource::human && ex.annotator_id.has_value()) {
        throw Error(ErrorCode::InvalidValue,
                    fmt::format("annotator_id set on non-human label for '{}'", ex.message_id));
    }
    return ex;
}

void AnnotationMatrix::add(const std::string &unit, const std::string &annotator, const std::string &label) {
    if (std::find(units_.begin(), units_.end(), unit) == units_.end()) units_.push_back(unit);
    if (std::find(annotators_.begin(), annotators_.end(), annotator) == annotators_.end()) {
        annotators_.push_back(annotator);
    }
    values_[{unit, annotator}] = label;
}

std::optional<std::string> AnnotationMatrix::value(const std::string &unit, const std::string &annotator) const {
    const auto it = values_.find({unit, annotator});
    if (it == values_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::string> AnnotationMatrix::values_for(const std::string &unit) const {
    std::vector<std::string> out;
    for (const auto &annotator : annotators_) {
        if (auto v = value(unit, annotator)) out.push_back(std::move(*v));
    }
    return out;
}

AnnotationMatrix annotations_from(const std::vector<LabeledExample> &examples) {
    AnnotationMatrix am;
    for (const auto &ex : examples) {
        if (ex.source == LabelSource::human && ex.annotator_id) am.add(ex.message_id, *ex.annotator_id, ex.label);
    }
    return am;
}

void to_json(nlohmann::json &j, const Message &m) {
    j = nlohmann::json{{"id", m.id},
                       {"channel_id", m.channel_id},
                       {"author_id", m.author_id},
                       {"timestamp", format_iso8601(m.timestamp)},
                       {"content", m.text},
                       {"is_bot", m.is_bot}};
}

void from_json(const nlohmann::json &j, Message &m) {
    m.id = j.at("id").get<std::string>();
    m.channel_id = j.at("channel_id").get<std::string>();
    m.author_id = j.at("author_id").get<std::string>();
    const auto ts = j.at("timestamp").get<std::string>();
    const auto parsed = parse_iso8601(ts);
    if (!parsed) throw Error(ErrorCode::InvalidValue, fmt::format("bad timestamp '{}'", ts));
    m.timestamp = *parsed;
    m.text = j.at("content").get<std::string>();
    m.is_bot = j.value("is_bot", false);
}

void to_json(nlohmann::json &j, const LabeledExample &ex) {
    j = nlohmann::json{{"message_id", ex.message_id},
                       {"context", ex.context},
                       {"text", ex.text},
                       {"label", ex.label},
                       {"source", to_string(ex.source)},
                       {"iteration", ex.iteration}};
    if (ex.annotator_id) j["annotator_id"] = *ex.annotator_id;
}

void from_json(const nlohmann::json &j, LabeledExample &ex) {
    ex.message_id = j.at("message_id").get<std::string>();
    ex.context = j.value("context", std::vector<std::string>{});
    ex.text = j.value("text", std::string{});
    ex.label = j.at("label").get<std::string>();
    ex.source = parse_label_source(j.value("source", std::string{"human"}));
    if (j.contains("annotator_id") && !j.at("annotator_id").is_null()) {
        ex.annotator_id = j.at("annotator_id").get<std::string>();
    } else {
        ex.annotator_id.reset();
    }
    ex.iteration = j.value("iteration", 0u);
}

}  // namespace modgate
