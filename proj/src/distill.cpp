// SPDX-License-Identifier: Apache-2.0
#include "modgate/distill.hpp"

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include <fmt/format.h>

#include "modgate/baseline.hpp"
#include "modgate/error.hpp"
#include "modgate/io.hpp"

namespace modgate::distill {

void StopPolicy::validate() const {
    if (epsilon < 0) throw Error(ErrorCode::InvalidValue, "epsilon must be >= 0");
    if (patience < 1) throw Error(ErrorCode::InvalidValue, "patience must be >= 1");
    if (max_iterations < 1) throw Error(ErrorCode::InvalidValue, "max_iterations must be >= 1");
}

StopDecision should_stop(const std::vector<eval::EvalReport> &history, const StopPolicy &policy) {
    policy.validate();
    const auto n = history.size();
    if (n >= static_cast<std::size_t>(policy.max_iterations)) {
        return {StopDecision::Kind::budget, fmt::format("iteration budget of {} reached", policy.max_iterations)};
    }
    const auto patience = static_cast<std::size_t>(policy.patience);
    if (n < patience + 1) return {};
    for (std::size_t i = n - patience; i < n; ++i) {
        const double gain = history[i].macro_f1() - history[i - 1].macro_f1();
        if (gain >= policy.epsilon) return {};
    }
    return {StopDecision::Kind::leveled,
            fmt::format("macro-F1 gained less than {} for {} consecutive iteration(s)", policy.epsilon, patience)};
}

// ---------------------------------------------------------------------------

namespace {

std::size_t uniform_below(std::mt19937_64 &rng, std::size_t n) {
    const std::uint64_t bound = n;
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x = 0;
    do {
        x = rng();
    } while (x >= limit);
    return static_cast<std::size_t>(x % bound);
}

std::set<std::string> ids_of(const std::vector<LabeledExample> &xs) {
    std::set<std::string> ids;
    for (const auto &x : xs) ids.insert(x.message_id);
    return ids;
}

}  // namespace

BootstrapResult bootstrap(const std::vector<ingest::ContextualMessage> &messages, gateway::Provider &teacher,
                          const gateway::PromptTemplate &tpl, std::size_t sample_size, std::uint64_t seed) {
    if (sample_size == 0) throw Error(ErrorCode::EmptySample, "bootstrap sample size must be positive");
    if (sample_size > messages.size()) {
        throw Error(ErrorCode::InvalidValue,
                    fmt::format("sample size {} exceeds the {} available messages", sample_size, messages.size()));
    }
    std::vector<std::size_t> idx(messages.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < sample_size; ++i) std::swap(idx[i], idx[i + uniform_below(rng, idx.size() - i)]);
    idx.resize(sample_size);
    std::sort(idx.begin(), idx.end());

    const auto &tax = TaxonomySpec::for_task(tpl.task);
    BootstrapResult result;
    std::vector<std::string> prompts;
    std::vector<std::size_t> prompt_owner;
    for (const auto i : idx) {
        const auto &cm = messages[i];
        try {
            prompts.push_back(gateway::render_prompt(tpl, tax, cm.context, cm.message.text));
            prompt_owner.push_back(i);
        } catch (const Error &e) {
            if (e.code() != ErrorCode::EmptyText) throw;
            result.excluded.push_back({cm.message.id, "empty text"});
        }
    }
    const auto outcomes = gateway::classify_batch(teacher, prompts, tax, teacher.ref().endpoint.max_parallel);
    for (std::size_t k = 0; k < outcomes.size(); ++k) {
        const auto &cm = messages[prompt_owner[k]];
        const auto &out = outcomes[k];
        if (out.error) {
            if (*out.error == ErrorCode::UnparseableCompletion) {
                result.excluded.push_back({cm.message.id, out.error_message});
                continue;
            }
            throw Error(*out.error, out.error_message);
        }
        LabeledExample ex;
        ex.message_id = cm.message.id;
        ex.context = cm.context;
        ex.text = cm.message.text;
        ex.label = out.result->label;
        ex.source = LabelSource::teacher_zero_shot;
        ex.iteration = 0;
        result.examples.push_back(std::move(ex));
    }
    return result;
}

MergeResult merge_corrections(const std::vector<LabeledExample> &predicted, const std::vector<LabeledExample> &human) {
    const auto known = ids_of(predicted);
    std::map<std::string, std::vector<const LabeledExample *>> by_message;
    for (const auto &h : human) {
        if (!known.count(h.message_id)) {
            throw Error(ErrorCode::DanglingReference,
                        fmt::format("human label refers to unknown message '{}'", h.message_id));
        }
        by_message[h.message_id].push_back(&h);
    }
    MergeResult out;
    for (const auto &p : predicted) {
        const auto it = by_message.find(p.message_id);
        if (it == by_message.end()) {
            out.curated.push_back(p);
            continue;
        }
        // Latest label per annotator wins; then majority across annotators.
        std::map<std::string, const LabeledExample *> per_annotator;
        for (const auto *h : it->second) per_annotator[h->annotator_id.value_or("")] = h;
        std::map<std::string, std::vector<std::string>> votes;
        std::uint32_t iteration = 0;
        for (const auto &[annotator, h] : per_annotator) {
            votes[h->label].push_back(annotator);
            iteration = std::max(iteration, h->iteration);
        }
        std::size_t best = 0;
        std::size_t best_count = 0;
        const std::string *winner = nullptr;
        for (const auto &[label, who] : votes) {
            if (who.size() > best) {
                best = who.size();
                best_count = 1;
                winner = &label;
            } else if (who.size() == best) {
                ++best_count;
            }
        }
        LabeledExample ex = p;
        ex.source = LabelSource::human;
        ex.iteration = iteration;
        if (best_count > 1) {
            ex.annotator_id.reset();
            ex.source = p.source;
            out.unresolved.push_back(std::move(ex));
            continue;
        }
        ex.label = *winner;
        std::string annotators;
        for (const auto &a : votes[*winner]) annotators += (annotators.empty() ? "" : ",") + a;
        ex.annotator_id = annotators;
        out.curated.push_back(std::move(ex));
    }
    return out;
}

LoopState apply_corrections(LoopState state, const std::vector<LabeledExample> &human) {
    state.human_labels.insert(state.human_labels.end(), human.begin(), human.end());
    auto merged = merge_corrections(state.teacher_labels, state.human_labels);
    state.curated = std::move(merged.curated);
    state.unresolved = std::move(merged.unresolved);
    return state;
}

// ---------------------------------------------------------------------------

StudentTrainer::Trained BaselineTrainer::train(const std::vector<LabeledExample> &curated, const std::string &,
                                               Task task) {
    auto model = baseline::train(curated, task);
    const auto ref = fmt::format("baseline:nb-{:016x}", fnv1a64(baseline::to_json(model).dump()));
    return {ref, std::make_shared<baseline::BaselineClassifier>(std::move(model))};
}

GatewayTrainer::GatewayTrainer(std::shared_ptr<gateway::Provider> provider) : provider_(std::move(provider)) {
    if (!provider_) throw Error(ErrorCode::ModelUnavailable, "gateway trainer needs a provider");
}

StudentTrainer::Trained GatewayTrainer::train(const std::vector<LabeledExample> &curated,
                                              const std::string &base_model, Task task) {
    gateway::PromptTemplate tpl;
    tpl.task = task;  // fine-tuned models see the bare message block
    const auto corpus = gateway::build_finetune_corpus(curated, tpl);
    const auto model_id = gateway::submit_finetune(*provider_, corpus, base_model);
    std::shared_ptr<gateway::Provider> tuned = provider_->with_model(model_id);
    return {model_id, std::make_shared<gateway::PromptedClassifier>(std::move(tuned), tpl)};
}

LoopState run_iteration(const LoopState &state, StudentTrainer &trainer) {
    const auto holdout_ids = ids_of(state.holdout);
    for (const auto &ex : state.curated) {
        if (holdout_ids.count(ex.message_id)) {
            throw Error(ErrorCode::HoldoutOverlap,
                        fmt::format("message '{}' is in both the holdout and the training data", ex.message_id));
        }
    }
    if (state.curated.empty()) throw Error(ErrorCode::EmptyCorpus, "no curated examples to train on");
    if (state.holdout.empty()) throw Error(ErrorCode::EmptyInput, "holdout benchmark is empty");

    auto trained = trainer.train(state.curated, state.base_model(), state.task);
    const auto &tax = TaxonomySpec::for_task(state.task);
    std::vector<std::string> gold, pred;
    gold.reserve(state.holdout.size());
    pred.reserve(state.holdout.size());
    for (const auto &ex : state.holdout) {
        gold.push_back(ex.label);
        pred.push_back(trained.classifier->classify(ex.context, ex.text).label);
    }
    auto report = eval::evaluate(gold, pred, tax);

    LoopState next = state;
    next.history.push_back(std::move(report));
    next.iteration = state.iteration + 1;
    next.current_model = trained.model_ref;
    return next;
}

// ---------------------------------------------------------------------------

std::string_view to_string(Action a) {
    switch (a) {
        case Action::deploy: return "deploy";
        case Action::escalate_base_model: return "escalate_base_model";
        case Action::reframe_task: return "reframe_task";
        case Action::grow_corpus: return "grow_corpus";
        case Action::audit_inconclusive: return "audit_inconclusive";
    }
    return "unknown";
}

Recommendation recommend(double macro_f1, const std::string &current_model,
                         const std::optional<std::string> &larger_model, const std::optional<double> &alpha,
                         const Thresholds &t) {
    Recommendation r;
    r.macro_f1 = macro_f1;
    r.alpha = alpha;
    if (macro_f1 >= t.deploy_macro_f1) {
        r.action = Action::deploy;
        r.model = current_model;
        r.detail = fmt::format("macro-F1 {:.4f} meets the {:.2f} target", macro_f1, t.deploy_macro_f1);
        return r;
    }
    if (larger_model) {
        r.action = Action::escalate_base_model;
        r.model = larger_model;
        r.detail = fmt::format("macro-F1 {:.4f} below {:.2f}; retry with base model '{}'", macro_f1,
                               t.deploy_macro_f1, *larger_model);
        return r;
    }
    if (!alpha) {
        r.action = Action::audit_inconclusive;
        r.detail = "no larger base model left and too few multiply-annotated messages to measure agreement";
        return r;
    }
    if (*alpha < t.alpha_reliability) {
        r.action = Action::reframe_task;
        r.detail = fmt::format("human agreement alpha {:.3f} is below {:.3f}; the labels are not reliable enough for "
                               "this to be treated as a classification task",
                               *alpha, t.alpha_reliability);
    } else {
        r.action = Action::grow_corpus;
        r.detail = fmt::format("human agreement alpha {:.3f} is reliable; collect more labeled data", *alpha);
    }
    return r;
}

Recommendation escalate_or_reframe(const LoopState &state, const Thresholds &t) {
    const double macro = state.history.empty() ? 0.0 : state.history.back().macro_f1();
    std::optional<std::string> larger;
    if (state.candidate_index + 1 < state.candidates.size()) larger = state.candidates[state.candidate_index + 1];
    std::optional<double> alpha;
    if (macro < t.deploy_macro_f1 && !larger) {
        try {
            alpha = eval::krippendorff_alpha(annotations_from(state.human_labels)).alpha;
        } catch (const Error &e) {
            if (e.code() != ErrorCode::NoPairableValues && e.code() != ErrorCode::DegenerateAgreement) throw;
        }
    }
    return recommend(macro, state.current_model, larger, alpha, t);
}

nlohmann::json to_json(const Recommendation &r) {
    nlohmann::json j{{"action", to_string(r.action)}, {"macro_f1", r.macro_f1}, {"detail", r.detail}};
    j["model"] = r.model ? nlohmann::json(*r.model) : nlohmann::json(nullptr);
    j["alpha"] = r.alpha ? nlohmann::json(*r.alpha) : nlohmann::json(nullptr);
    return j;
}

// ---------------------------------------------------------------------------

nlohmann::json to_json(const LoopState &s) {
    nlohmann::json history = nlohmann::json::array();
    for (const auto &r : s.history) history.push_back(eval::to_json(r));
    return {{"version", 1},
            {"task", to_string(s.task)},
            {"iteration", s.iteration},
            {"teacher_labels", s.teacher_labels},
            {"human_labels", s.human_labels},
            {"curated", s.curated},
            {"unresolved", s.unresolved},
            {"holdout", s.holdout},
            {"history", history},
            {"current_model", s.current_model},
            {"candidates", s.candidates},
            {"candidate_index", s.candidate_index}};
}

LoopState state_from_json(const nlohmann::json &j) {
    LoopState s;
    s.task = parse_task(j.at("task").get<std::string>());
    s.iteration = j.at("iteration").get<std::uint32_t>();
    s.teacher_labels = j.at("teacher_labels").get<std::vector<LabeledExample>>();
    s.human_labels = j.at("human_labels").get<std::vector<LabeledExample>>();
    s.curated = j.at("curated").get<std::vector<LabeledExample>>();
    s.unresolved = j.at("unresolved").get<std::vector<LabeledExample>>();
    s.holdout = j.at("holdout").get<std::vector<LabeledExample>>();
    for (const auto &r : j.at("history")) s.history.push_back(eval::report_from_json(r));
    s.current_model = j.at("current_model").get<std::string>();
    s.candidates = j.at("candidates").get<std::vector<std::string>>();
    s.candidate_index = j.at("candidate_index").get<std::size_t>();
    if (s.history.size() != s.iteration) throw Error(ErrorCode::InvalidValue, "checkpoint history/iteration mismatch");
    return s;
}

void save_checkpoint(const LoopState &state, const std::filesystem::path &path) {
    write_file_atomic(path, to_json(state).dump(1) + "\n");
}

LoopState load_checkpoint(const std::filesystem::path &path) {
    const auto j = nlohmann::json::parse(read_file(path), nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::InvalidValue, fmt::format("'{}' is not valid JSON", path.string()));
    return state_from_json(j);
}

LoopOutcome run_loop(LoopState state, StudentTrainer &trainer, const CorrectionSource &corrections,
                     const LoopOptions &options) {
    options.policy.validate();
    StopDecision decision = should_stop(state.history, options.policy);
    while (!decision.stop()) {
        if (corrections) state = apply_corrections(std::move(state), corrections(state));
        state = run_iteration(state, trainer);
        if (options.checkpoint) save_checkpoint(state, *options.checkpoint);
        if (options.on_iteration) options.on_iteration(state);
        decision = should_stop(state.history, options.policy);
    }
    auto rec = escalate_or_reframe(state, options.thresholds);
    return {std::move(state), decision, std::move(rec)};
}

}  // namespace modgate::distill
