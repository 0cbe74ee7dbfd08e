// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "modgate/domain.hpp"

namespace modgate::eval {

/// Rows are gold labels, columns are predictions.
class ConfusionMatrix {
public:
    explicit ConfusionMatrix(std::vector<std::string> labels);
    ConfusionMatrix(std::vector<std::string> labels, std::vector<std::vector<std::uint64_t>> counts);

    const std::vector<std::string> &labels() const { return labels_; }
    std::size_t size() const { return labels_.size(); }
    std::uint64_t at(std::size_t gold, std::size_t pred) const { return counts_[gold][pred]; }
    void add(std::size_t gold, std::size_t pred, std::uint64_t n = 1) { counts_[gold][pred] += n; }

    std::uint64_t total() const;
    std::uint64_t trace() const;
    std::uint64_t row_sum(std::size_t gold) const;
    std::uint64_t column_sum(std::size_t pred) const;

    /// Element-wise sum; both matrices must share the label order.
    ConfusionMatrix &operator+=(const ConfusionMatrix &other);
    friend bool operator==(const ConfusionMatrix &, const ConfusionMatrix &) = default;

private:
    std::vector<std::string> labels_;
    std::vector<std::vector<std::uint64_t>> counts_;
};

/// Throws LengthMismatch or UnknownLabel.
ConfusionMatrix confusion_matrix(const std::vector<std::string> &gold, const std::vector<std::string> &pred,
                                 const TaxonomySpec &tax);

struct ClassMetrics {
    std::string label;
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    std::uint64_t support = 0;
};

/// 0/0 divisions yield 0 for precision, recall and F1.
std::vector<ClassMetrics> per_class_metrics(const ConfusionMatrix &cm);

struct Averages {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
};

struct Aggregates {
    double accuracy = 0;
    Averages macro;
    Averages weighted;
    std::uint64_t total = 0;
};

/// Throws EmptyMatrix when the matrix holds no observations.
Aggregates aggregate_metrics(const std::vector<ClassMetrics> &per_class, const ConfusionMatrix &cm);

struct EvalReport {
    std::string task;
    ConfusionMatrix confusion{{}};
    std::vector<ClassMetrics> per_class;
    Aggregates aggregates;

    double macro_f1() const { return aggregates.macro.f1; }
};

EvalReport evaluate(const ConfusionMatrix &cm, std::string task_name = {});
EvalReport evaluate(const std::vector<std::string> &gold, const std::vector<std::string> &pred,
                    const TaxonomySpec &tax);

/// Half-up rounding to `digits` decimals, for display only.
double round_half_up(double value, int digits = 2);

/// Aligned text table in the layout of a classification report.
std::string render_table(const EvalReport &report);

nlohmann::json to_json(const EvalReport &report);
EvalReport report_from_json(const nlohmann::json &j);

// ---------------------------------------------------------------------------
// Inter-annotator agreement (nominal Krippendorff's alpha)

struct AgreementReport {
    double alpha = 0;
    double observed_disagreement = 0;
    double expected_disagreement = 0;
    /// Number of pairable values (values in units with at least two values).
    std::uint64_t pairable_values = 0;
    std::uint64_t units_used = 0;
    std::uint64_t units_dropped = 0;
};

/// Throws NoPairableValues when no unit carries two values, and
/// DegenerateAgreement when every pairable value is identical (alpha is
/// undefined there, not 1).
AgreementReport krippendorff_alpha(const AnnotationMatrix &am);

nlohmann::json to_json(const AgreementReport &report);

}  // namespace modgate::eval
