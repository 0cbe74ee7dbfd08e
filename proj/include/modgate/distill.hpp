// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "modgate/domain.hpp"
#include "modgate/eval.hpp"
#include "modgate/gateway.hpp"
#include "modgate/ingest.hpp"

namespace modgate::distill {

struct StopPolicy {
    double epsilon = 0.01;  // minimum macro-F1 gain that counts as progress
    int patience = 2;
    int max_iterations = 10;

    void validate() const;
};

struct StopDecision {
    enum class Kind { keep_going, leveled, budget };
    Kind kind = Kind::keep_going;
    std::string reason;

    bool stop() const { return kind != Kind::keep_going; }
};

/// Stops when the last `patience` macro-F1 gains are all below epsilon, or
/// when the history has reached max_iterations.
StopDecision should_stop(const std::vector<eval::EvalReport> &history, const StopPolicy &policy);

struct LoopState {
    Task task = Task::intent;
    std::uint32_t iteration = 0;
    /// Teacher labels from bootstrap; never edited, corrections overlay them.
    std::vector<LabeledExample> teacher_labels;
    /// Every human label received so far, including disagreeing ones.
    std::vector<LabeledExample> human_labels;
    /// Teacher labels with human corrections merged; the training set.
    std::vector<LabeledExample> curated;
    /// Messages whose human labels tie; held out of training for re-annotation.
    std::vector<LabeledExample> unresolved;
    std::vector<LabeledExample> holdout;
    std::vector<eval::EvalReport> history;
    std::string current_model;
    /// Base models, cheapest first.
    std::vector<std::string> candidates{"baseline"};
    std::size_t candidate_index = 0;

    const std::string &base_model() const { return candidates.at(candidate_index); }
};

nlohmann::json to_json(const LoopState &state);
LoopState state_from_json(const nlohmann::json &j);
void save_checkpoint(const LoopState &state, const std::filesystem::path &path);
LoopState load_checkpoint(const std::filesystem::path &path);

struct BootstrapAudit {
    std::string message_id;
    std::string reason;
};

struct BootstrapResult {
    std::vector<LabeledExample> examples;
    std::vector<BootstrapAudit> excluded;
};

/// Labels a seeded sample of `messages` with the teacher. Unparseable
/// completions are excluded and audited; any other provider error
/// propagates. Throws EmptySample for a zero sample size.
BootstrapResult bootstrap(const std::vector<ingest::ContextualMessage> &messages, gateway::Provider &teacher,
                          const gateway::PromptTemplate &tpl, std::size_t sample_size, std::uint64_t seed);

struct MergeResult {
    std::vector<LabeledExample> curated;
    std::vector<LabeledExample> unresolved;
};

/// Human labels override teacher labels; several humans resolve by
/// majority, and an exact tie moves the message to `unresolved`.
/// Throws DanglingReference for a human label on an unknown message.
MergeResult merge_corrections(const std::vector<LabeledExample> &predicted, const std::vector<LabeledExample> &human);

/// Appends `human` to the state's human labels and recomputes the curated set
/// from the teacher labels (also when `human` is empty).
LoopState apply_corrections(LoopState state, const std::vector<LabeledExample> &human);

/// Trains a student on curated data and returns something that classifies.
class StudentTrainer {
public:
    struct Trained {
        std::string model_ref;
        std::shared_ptr<gateway::TextClassifier> classifier;
    };

    virtual ~StudentTrainer() = default;
    virtual Trained train(const std::vector<LabeledExample> &curated, const std::string &base_model, Task task) = 0;
};

/// Local naive Bayes student.
class BaselineTrainer final : public StudentTrainer {
public:
    Trained train(const std::vector<LabeledExample> &curated, const std::string &base_model, Task task) override;
};

/// Fine-tunes through a provider and classifies with the resulting model.
class GatewayTrainer final : public StudentTrainer {
public:
    explicit GatewayTrainer(std::shared_ptr<gateway::Provider> provider);
    Trained train(const std::vector<LabeledExample> &curated, const std::string &base_model, Task task) override;

private:
    std::shared_ptr<gateway::Provider> provider_;
};

/// One build-corpus / fine-tune / benchmark / evaluate step. The input
/// state is untouched, so a failed iteration leaves no trace. Throws
/// HoldoutOverlap if any holdout id appears in the training data.
LoopState run_iteration(const LoopState &state, StudentTrainer &trainer);

struct Thresholds {
    double deploy_macro_f1 = 0.85;
    double alpha_reliability = 0.667;
};

enum class Action { deploy, escalate_base_model, reframe_task, grow_corpus, audit_inconclusive };

std::string_view to_string(Action a);

struct Recommendation {
    Action action = Action::deploy;
    double macro_f1 = 0;
    std::optional<std::string> model;  // model to deploy, or the next base model to try
    std::optional<double> alpha;
    std::string detail;
};

/// Decision table behind escalate_or_reframe.
Recommendation recommend(double macro_f1, const std::string &current_model,
                         const std::optional<std::string> &larger_model, const std::optional<double> &alpha,
                         const Thresholds &t);

/// Below target: try the next larger base model if one is left, otherwise
/// audit human consistency with Krippendorff's alpha over the human labels.
Recommendation escalate_or_reframe(const LoopState &state, const Thresholds &t = {});

nlohmann::json to_json(const Recommendation &r);

/// Supplies human labels before each iteration (may return none).
using CorrectionSource = std::function<std::vector<LabeledExample>(const LoopState &)>;

struct LoopOutcome {
    LoopState state;
    StopDecision stop;
    Recommendation recommendation;
};

struct LoopOptions {
    StopPolicy policy;
    Thresholds thresholds;
    std::optional<std::filesystem::path> checkpoint;
    std::function<void(const LoopState &)> on_iteration;
};

/// Runs iterations until should_stop says so. Writes the checkpoint after
/// every iteration when one is configured.
LoopOutcome run_loop(LoopState state, StudentTrainer &trainer, const CorrectionSource &corrections,
                     const LoopOptions &options);

}  // namespace modgate::distill
