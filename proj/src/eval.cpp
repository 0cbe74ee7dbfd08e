// SPDX-License-Identifier: Apache-2.0
#include "modgate/eval.hpp"

#include <cmath>
#include <map>

#include <fmt/format.h>

#include "modgate/error.hpp"

namespace modgate::eval {

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> labels)
    : labels_(std::move(labels)), counts_(labels_.size(), std::vector<std::uint64_t>(labels_.size(), 0)) {}

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> labels, std::vector<std::vector<std::uint64_t>> counts)
    : labels_(std::move(labels)), counts_(std::move(counts)) {
    if (counts_.size() != labels_.size()) throw Error(ErrorCode::LengthMismatch, "confusion matrix row count != labels");
    for (const auto &row : counts_) {
        if (row.size() != labels_.size()) {
            throw Error(ErrorCode::LengthMismatch, "confusion matrix column count != labels");
        }
    }
}

std::uint64_t ConfusionMatrix::total() const {
    std::uint64_t t = 0;
    for (const auto &row : counts_) {
        for (auto v : row) t += v;
    }
    return t;
}

std::uint64_t ConfusionMatrix::trace() const {
    std::uint64_t t = 0;
    for (std::size_t i = 0; i < size(); ++i) t += counts_[i][i];
    return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t gold) const {
    std::uint64_t t = 0;
    for (auto v : counts_[gold]) t += v;
    return t;
}

std::uint64_t ConfusionMatrix::column_sum(std::size_t pred) const {
    std::uint64_t t = 0;
    for (const auto &row : counts_) t += row[pred];
    return t;
}

ConfusionMatrix &ConfusionMatrix::operator+=(const ConfusionMatrix &other) {
    if (other.labels_ != labels_) throw Error(ErrorCode::LengthMismatch, "cannot merge matrices with different labels");
    for (std::size_t i = 0; i < size(); ++i) {
        for (std::size_t j = 0; j < size(); ++j) counts_[i][j] += other.counts_[i][j];
    }
    return *this;
}

ConfusionMatrix confusion_matrix(const std::vector<std::string> &gold, const std::vector<std::string> &pred,
                                 const TaxonomySpec &tax) {
    if (gold.size() != pred.size()) {
        throw Error(ErrorCode::LengthMismatch,
                    fmt::format("{} gold labels but {} predictions", gold.size(), pred.size()));
    }
    ConfusionMatrix cm(tax.labels());
    for (std::size_t i = 0; i < gold.size(); ++i) {
        const int g = tax.index_of(gold[i]);
        const int p = tax.index_of(pred[i]);
        if (g < 0 || p < 0) {
            throw Error(ErrorCode::UnknownLabel,
                        fmt::format("label '{}' at position {} is not in the {} taxonomy", g < 0 ? gold[i] : pred[i],
                                    i, to_string(tax.task())));
        }
        cm.add(static_cast<std::size_t>(g), static_cast<std::size_t>(p));
    }
    return cm;
}

namespace {

double ratio(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

}  // namespace

std::vector<ClassMetrics> per_class_metrics(const ConfusionMatrix &cm) {
    std::vector<ClassMetrics> out;
    out.reserve(cm.size());
    for (std::size_t c = 0; c < cm.size(); ++c) {
        const auto tp = static_cast<double>(cm.at(c, c));
        ClassMetrics m;
        m.label = cm.labels()[c];
        m.support = cm.row_sum(c);
        m.precision = ratio(tp, static_cast<double>(cm.column_sum(c)));
        m.recall = ratio(tp, static_cast<double>(m.support));
        m.f1 = ratio(2.0 * m.precision * m.recall, m.precision + m.recall);
        out.push_back(m);
    }
    return out;
}

Aggregates aggregate_metrics(const std::vector<ClassMetrics> &per_class, const ConfusionMatrix &cm) {
    const auto total = cm.total();
    if (total == 0 || per_class.empty()) throw Error(ErrorCode::EmptyMatrix, "no observations to aggregate");
    Aggregates a;
    a.total = total;
    a.accuracy = static_cast<double>(cm.trace()) / static_cast<double>(total);
    const auto k = static_cast<double>(per_class.size());
    for (const auto &m : per_class) {
        a.macro.precision += m.precision;
        a.macro.recall += m.recall;
        a.macro.f1 += m.f1;
        const auto w = static_cast<double>(m.support);
        a.weighted.precision += w * m.precision;
        a.weighted.recall += w * m.recall;
        a.weighted.f1 += w * m.f1;
    }
    a.macro.precision /= k;
    a.macro.recall /= k;
    a.macro.f1 /= k;
    const auto n = static_cast<double>(total);
    a.weighted.precision /= n;
    a.weighted.recall /= n;
    a.weighted.f1 /= n;
    return a;
}

EvalReport evaluate(const ConfusionMatrix &cm, std::string task_name) {
    EvalReport r;
    r.task = std::move(task_name);
    r.confusion = cm;
    r.per_class = per_class_metrics(cm);
    r.aggregates = aggregate_metrics(r.per_class, cm);
    return r;
}

EvalReport evaluate(const std::vector<std::string> &gold, const std::vector<std::string> &pred,
                    const TaxonomySpec &tax) {
    return evaluate(confusion_matrix(gold, pred, tax), std::string(to_string(tax.task())));
}

double round_half_up(double value, int digits) {
    const double scale = std::pow(10.0, digits);
    // The nudge absorbs representation error on exact half-way values.
    return std::floor(value * scale + 0.5 + 1e-9) / scale;
}

std::string render_table(const EvalReport &report) {
    std::size_t width = std::string("Weighted avg").size();
    for (const auto &m : report.per_class) width = std::max(width, m.label.size());
    const auto num = [](double v) { return fmt::format("{:.2f}", round_half_up(v)); };

    std::string out = fmt::format("{:<{}}  {:>9}  {:>6}  {:>8}  {:>10}\n", "Classifier", width, "Precision", "Recall",
                                  "F1-score", "n messages");
    for (const auto &m : report.per_class) {
        out += fmt::format("{:<{}}  {:>9}  {:>6}  {:>8}  {:>10}\n", m.label, width, num(m.precision), num(m.recall),
                           num(m.f1), m.support);
    }
    const auto &a = report.aggregates;
    out += fmt::format("{:<{}}  {:>9}  {:>6}  {:>8}  {:>10}\n", "Accuracy", width, "", "", num(a.accuracy), a.total);
    out += fmt::format("{:<{}}  {:>9}  {:>6}  {:>8}  {:>10}\n", "Macro avg", width, num(a.macro.precision),
                       num(a.macro.recall), num(a.macro.f1), a.total);
    out += fmt::format("{:<{}}  {:>9}  {:>6}  {:>8}  {:>10}\n", "Weighted avg", width, num(a.weighted.precision),
                       num(a.weighted.recall), num(a.weighted.f1), a.total);
    return out;
}

namespace {

nlohmann::json averages_json(const Averages &a) {
    return {{"precision", a.precision}, {"recall", a.recall}, {"f1", a.f1}};
}

Averages averages_from(const nlohmann::json &j) {
    return {j.at("precision").get<double>(), j.at("recall").get<double>(), j.at("f1").get<double>()};
}

}  // namespace

nlohmann::json to_json(const EvalReport &report) {
    nlohmann::json per_class = nlohmann::json::array();
    for (const auto &m : report.per_class) {
        per_class.push_back({{"label", m.label},
                             {"precision", m.precision},
                             {"recall", m.recall},
                             {"f1", m.f1},
                             {"support", m.support}});
    }
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t i = 0; i < report.confusion.size(); ++i) {
        nlohmann::json row = nlohmann::json::array();
        for (std::size_t j = 0; j < report.confusion.size(); ++j) row.push_back(report.confusion.at(i, j));
        rows.push_back(std::move(row));
    }
    return {{"task", report.task},
            {"labels", report.confusion.labels()},
            {"confusion", rows},
            {"per_class", per_class},
            {"accuracy", report.aggregates.accuracy},
            {"macro_avg", averages_json(report.aggregates.macro)},
            {"weighted_avg", averages_json(report.aggregates.weighted)},
            {"n", report.aggregates.total}};
}

EvalReport report_from_json(const nlohmann::json &j) {
    EvalReport r;
    r.task = j.value("task", std::string{});
    r.confusion = ConfusionMatrix(j.at("labels").get<std::vector<std::string>>(),
                                  j.at("confusion").get<std::vector<std::vector<std::uint64_t>>>());
    for (const auto &m : j.at("per_class")) {
        r.per_class.push_back({m.at("label").get<std::string>(), m.at("precision").get<double>(),
                               m.at("recall").get<double>(), m.at("f1").get<double>(),
                               m.at("support").get<std::uint64_t>()});
    }
    r.aggregates.accuracy = j.at("accuracy").get<double>();
    r.aggregates.macro = averages_from(j.at("macro_avg"));
    r.aggregates.weighted = averages_from(j.at("weighted_avg"));
    r.aggregates.total = j.at("n").get<std::uint64_t>();
    return r;
}

// ---------------------------------------------------------------------------

AgreementReport krippendorff_alpha(const AnnotationMatrix &am) {
    // Coincidence matrix over the distinct values, keyed by label.
    std::map<std::string, std::map<std::string, double>> o;
    AgreementReport rep;
    for (const auto &unit : am.units()) {
        const auto values = am.values_for(unit);
        const auto m = values.size();
        if (m < 2) {
            ++rep.units_dropped;
            continue;
        }
        ++rep.units_used;
        rep.pairable_values += m;
        const double w = 1.0 / static_cast<double>(m - 1);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < m; ++j) {
                if (i != j) o[values[i]][values[j]] += w;
            }
        }
    }
    if (rep.pairable_values == 0) {
        throw Error(ErrorCode::NoPairableValues, "no unit has two or more values; agreement is undefined");
    }
    std::map<std::string, double> marginals;
    for (const auto &[c, row] : o) {
        for (const auto &[k, v] : row) marginals[c] += v;
    }
    double n = 0;
    for (const auto &[c, nc] : marginals) n += nc;

    double disagree = 0;
    for (const auto &[c, row] : o) {
        for (const auto &[k, v] : row) {
            if (c != k) disagree += v;
        }
    }
    double expected = 0;
    for (const auto &[c, nc] : marginals) {
        for (const auto &[k, nk] : marginals) {
            if (c != k) expected += nc * nk;
        }
    }
    rep.observed_disagreement = disagree / n;
    rep.expected_disagreement = expected / (n * (n - 1.0));
    if (rep.expected_disagreement == 0.0) {
        throw Error(ErrorCode::DegenerateAgreement,
                    "all pairable values are identical; expected disagreement is zero and alpha is undefined");
    }
    rep.alpha = 1.0 - rep.observed_disagreement / rep.expected_disagreement;
    return rep;
}

nlohmann::json to_json(const AgreementReport &report) {
    return {{"alpha", report.alpha},
            {"observed_disagreement", report.observed_disagreement},
            {"expected_disagreement", report.expected_disagreement},
            {"pairable_values", report.pairable_values},
            {"units_used", report.units_used},
            {"units_dropped", report.units_dropped}};
}

}  // namespace modgate::eval
