// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "modgate/domain.hpp"
#include "modgate/gateway.hpp"

namespace modgate::baseline {

/// Multinomial naive Bayes over bag-of-words with additive smoothing.
struct BaselineModel {
    static constexpr int kFormatVersion = 1;

    Task task = Task::intent;
    double smoothing = 1.0;
    std::vector<std::string> labels;  // sorted
    std::map<std::string, double> priors;
    std::map<std::string, std::size_t> doc_counts;
    std::map<std::string, std::map<std::string, std::size_t>> token_counts;  // label -> token -> count
    std::map<std::string, std::size_t> token_totals;                         // label -> sum of counts
    std::vector<std::string> vocabulary;                                     // sorted
    /// Taxonomy labels with no training example; they never get predicted.
    std::vector<std::string> dropped_labels;

    /// Smoothed P(token | label); strictly positive.
    double token_probability(const std::string &label, const std::string &token) const;
};

struct Prediction {
    std::string label;
    std::map<std::string, double> scores;  // normalized posteriors
};

/// Counts commute, so the result is independent of example order.
/// Throws EmptyCorpus for an empty input and UnknownLabel for labels
/// outside the task taxonomy.
BaselineModel train(const std::vector<LabeledExample> &examples, Task task, double smoothing = 1.0);

/// Unknown tokens are ignored; an all-unknown text falls back to the priors.
/// Ties (within 1e-12 in log space) go to the lexically smaller label.
Prediction predict(const BaselineModel &m, std::string_view text);

nlohmann::json to_json(const BaselineModel &m);
BaselineModel from_json(const nlohmann::json &j);
void save(const BaselineModel &m, const std::filesystem::path &path);
BaselineModel load(const std::filesystem::path &path);

/// Exposes a trained model through the classifier interface.
class BaselineClassifier final : public gateway::TextClassifier {
public:
    explicit BaselineClassifier(BaselineModel model);

    const TaxonomySpec &taxonomy() const override { return TaxonomySpec::for_task(model_.task); }
    gateway::ClassificationResult classify(std::span<const std::string> context, std::string_view text) override;
    const BaselineModel &model() const { return model_; }

private:
    BaselineModel model_;
};

}  // namespace modgate::baseline
