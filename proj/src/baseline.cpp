// SPDX-License-Identifier: Apache-2.0
#include "modgate/baseline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <set>

#include <fmt/format.h>

#include "modgate/error.hpp"
#include "modgate/io.hpp"

namespace modgate::baseline {

double BaselineModel::token_probability(const std::string &label, const std::string &token) const {
    std::size_t count = 0;
    if (const auto by_label = token_counts.find(label); by_label != token_counts.end()) {
        if (const auto it = by_label->second.find(token); it != by_label->second.end()) count = it->second;
    }
    const auto total_it = token_totals.find(label);
    const double total = total_it == token_totals.end() ? 0.0 : static_cast<double>(total_it->second);
    return (static_cast<double>(count) + smoothing) / (total + smoothing * static_cast<double>(vocabulary.size()));
}

BaselineModel train(const std::vector<LabeledExample> &examples, Task task, double smoothing) {
    if (examples.empty()) throw Error(ErrorCode::EmptyCorpus, "cannot train on zero examples");
    if (!(smoothing > 0.0)) throw Error(ErrorCode::InvalidValue, "smoothing must be > 0");
    const auto &tax = TaxonomySpec::for_task(task);

    BaselineModel m;
    m.task = task;
    m.smoothing = smoothing;
    std::set<std::string> vocab;
    for (const auto &ex : examples) {
        if (!tax.contains(ex.label)) {
            throw Error(ErrorCode::UnknownLabel,
                        fmt::format("training label '{}' not in the {} taxonomy", ex.label, to_string(task)));
        }
        ++m.doc_counts[ex.label];
        auto &counts = m.token_counts[ex.label];
        auto &total = m.token_totals[ex.label];
        for (const auto &tok : tokenize(ex.text)) {
            ++counts[tok];
            ++total;
            vocab.insert(tok);
        }
    }
    for (const auto &label : tax.labels()) {
        if (m.doc_counts.count(label)) {
            m.labels.push_back(label);
        } else {
            m.dropped_labels.push_back(label);
        }
    }
    std::sort(m.labels.begin(), m.labels.end());
    std::sort(m.dropped_labels.begin(), m.dropped_labels.end());
    m.vocabulary.assign(vocab.begin(), vocab.end());
    const auto n = static_cast<double>(examples.size());
    for (const auto &label : m.labels) m.priors[label] = static_cast<double>(m.doc_counts[label]) / n;
    return m;
}

Prediction predict(const BaselineModel &m, std::string_view text) {
    if (m.labels.empty()) throw Error(ErrorCode::ModelUnavailable, "model has no classes");
    std::map<std::string, std::size_t> tf;
    for (auto &tok : tokenize(text)) {
        if (std::binary_search(m.vocabulary.begin(), m.vocabulary.end(), tok)) ++tf[tok];
    }
    std::vector<double> log_scores;
    log_scores.reserve(m.labels.size());
    for (const auto &label : m.labels) {
        double s = std::log(m.priors.at(label));
        for (const auto &[tok, n] : tf) s += static_cast<double>(n) * std::log(m.token_probability(label, tok));
        log_scores.push_back(s);
    }
    const double top = *std::max_element(log_scores.begin(), log_scores.end());
    double z = 0;
    for (double s : log_scores) z += std::exp(s - top);

    Prediction p;
    for (std::size_t i = 0; i < m.labels.size(); ++i) {
        p.scores[m.labels[i]] = std::exp(log_scores[i] - top) / z;
        // labels are sorted, so the first near-maximal one is the lexically smallest
        if (p.label.empty() && log_scores[i] >= top - 1e-12 * std::max(1.0, std::abs(top))) p.label = m.labels[i];
    }
    return p;
}

nlohmann::json to_json(const BaselineModel &m) {
    nlohmann::json j;
    j["format"] = "modgate-naive-bayes";
    j["version"] = BaselineModel::kFormatVersion;
    j["task"] = to_string(m.task);
    j["smoothing"] = m.smoothing;
    j["labels"] = m.labels;
    j["dropped_labels"] = m.dropped_labels;
    j["priors"] = m.priors;
    j["doc_counts"] = m.doc_counts;
    j["vocabulary"] = m.vocabulary;
    j["token_counts"] = m.token_counts;
    return j;
}

BaselineModel from_json(const nlohmann::json &j) {
    if (j.value("format", std::string{}) != "modgate-naive-bayes") {
        throw Error(ErrorCode::InvalidValue, "not a naive Bayes model file");
    }
    if (j.value("version", 0) != BaselineModel::kFormatVersion) {
        throw Error(ErrorCode::InvalidValue, fmt::format("unsupported model version {}", j.value("version", 0)));
    }
    BaselineModel m;
    m.task = parse_task(j.at("task").get<std::string>());
    m.smoothing = j.at("smoothing").get<double>();
    m.labels = j.at("labels").get<std::vector<std::string>>();
    m.dropped_labels = j.value("dropped_labels", std::vector<std::string>{});
    m.priors = j.at("priors").get<std::map<std::string, double>>();
    m.doc_counts = j.at("doc_counts").get<std::map<std::string, std::size_t>>();
    m.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
    m.token_counts = j.at("token_counts").get<std::map<std::string, std::map<std::string, std::size_t>>>();
    for (const auto &[label, counts] : m.token_counts) {
        std::size_t total = 0;
        for (const auto &[tok, n] : counts) total += n;
        m.token_totals[label] = total;
    }
    std::sort(m.vocabulary.begin(), m.vocabulary.end());
    return m;
}

void save(const BaselineModel &m, const std::filesystem::path &path) {
    write_file_atomic(path, to_json(m).dump(1) + "\n");
}

BaselineModel load(const std::filesystem::path &path) {
    const auto j = nlohmann::json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::InvalidValue, fmt::format("'{}' is not valid JSON", path.string()));
    return from_json(j);
}

BaselineClassifier::BaselineClassifier(BaselineModel model) : model_(std::move(model)) {}

gateway::ClassificationResult BaselineClassifier::classify(std::span<const std::string>, std::string_view text) {
    const auto start = std::chrono::steady_clock::now();
    auto p = predict(model_, text);
    gateway::ClassificationResult r;
    r.label = p.label;
    r.raw_completion = " " + p.label + "\n";
    // Dropped classes score zero so the map covers the whole taxonomy.
    for (const auto &label : taxonomy().labels()) p.scores.try_emplace(label, 0.0);
    r.scores = std::move(p.scores);
    r.provider = "baseline:naive-bayes";
    r.latency = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start);
    return r;
}

}  // namespace modgate::baseline
