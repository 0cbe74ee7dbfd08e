// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "modgate/timeutil.hpp"

namespace modgate {

enum class Task { intent, moderation, contribution };

std::string_view to_string(Task task);
/// Throws Error(InvalidValue) for anything other than the three task names.
Task parse_task(std::string_view name);

/// One chat utterance.
struct Message {
    std::string id;
    std::string channel_id;
    std::string author_id;
    TimestampMs timestamp = 0;
    std::string text;
    bool is_bot = false;

    friend bool operator==(const Message &, const Message &) = default;
};

/// Label set and per-label definitions for one classification task.
/// Labels are stored in canonical lowercase form, in table order.
class TaxonomySpec {
public:
    static const TaxonomySpec &intent();
    static const TaxonomySpec &moderation();
    static const TaxonomySpec &contribution();
    static const TaxonomySpec &for_task(Task task);

    Task task() const { return task_; }
    const std::vector<std::string> &labels() const { return labels_; }
    const std::string &definition(std::string_view label) const;

    bool contains(std::string_view label) const;
    /// Position of `label` in `labels()`, or -1.
    int index_of(std::string_view label) const;
    /// Label a classifier falls back to when nothing matches.
    const std::string &default_label() const { return labels_[default_index_]; }

private:
    TaxonomySpec(Task task, std::vector<std::pair<std::string, std::string>> labels_and_definitions,
                 std::size_t default_index);

    Task task_;
    std::size_t default_index_;
    std::vector<std::string> labels_;
    std::vector<std::string> definitions_;
};

enum class LabelSource { teacher_zero_shot, human, student_model };

std::string_view to_string(LabelSource source);
LabelSource parse_label_source(std::string_view name);

struct LabeledExample {
    std::string message_id;
    std::vector<std::string> context;  // oldest first
    std::string text;
    std::string label;
    LabelSource source = LabelSource::teacher_zero_shot;
    std::optional<std::string> annotator_id;
    std::uint32_t iteration = 0;

    friend bool operator==(const LabeledExample &, const LabeledExample &) = default;
};

/// Trim + ASCII lowercase.
std::string canonical_label(std::string_view raw);

/// Lowercases ASCII, splits on anything that is not alphanumeric (bytes
/// >= 0x80 count as alphanumeric so UTF-8 words stay whole) and drops
/// tokens shorter than two bytes.
std::vector<std::string> tokenize(std::string_view text);

/// Returns `ex` with its label canonicalized. Throws UnknownLabel when the
/// label is not in `tax`, MissingAnnotator when a human label has no
/// annotator, InvalidValue when a non-human label carries one.
LabeledExample validate_example(LabeledExample ex, const TaxonomySpec &tax);

/// Sparse (unit, annotator) -> label table for agreement analysis.
class AnnotationMatrix {
public:
    void add(const std::string &unit, const std::string &annotator, const std::string &label);

    const std::vector<std::string> &units() const { return units_; }
    const std::vector<std::string> &annotators() const { return annotators_; }
    std::optional<std::string> value(const std::string &unit, const std::string &annotator) const;
    /// Values recorded for `unit`, in annotator insertion order.
    std::vector<std::string> values_for(const std::string &unit) const;
    std::size_t size() const { return values_.size(); }

private:
    std::vector<std::string> units_;
    std::vector<std::string> annotators_;
    std::map<std::pair<std::string, std::string>, std::string> values_;
};

/// Builds an agreement table from every human-sourced example.
AnnotationMatrix annotations_from(const std::vector<LabeledExample> &examples);

void to_json(nlohmann::json &j, const Message &m);
void from_json(const nlohmann::json &j, Message &m);
void to_json(nlohmann::json &j, const LabeledExample &ex);
void from_json(const nlohmann::json &j, LabeledExample &ex);

}  // namespace modgate
