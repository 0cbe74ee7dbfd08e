// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <set>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "modgate/analytics.hpp"
#include "modgate/baseline.hpp"
#include "modgate/distill.hpp"
#include "modgate/error.hpp"
#include "modgate/eval.hpp"
#include "modgate/gateway.hpp"
#include "modgate/http_api.hpp"
#include "modgate/ingest.hpp"
#include "modgate/io.hpp"
#include "modgate/service.hpp"
#include "modgate/synthetic.hpp"

namespace modgate::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kDefaultSeed = 20230601;
constexpr std::string_view kVersion = "0.3.0";

// Collected per run and written once, whatever the outcome.
struct Manifest {
    std::string command;
    std::vector<std::string> argv;
    json config = json::object();
    std::uint64_t seed = kDefaultSeed;
    std::vector<fs::path> inputs;
    std::vector<fs::path> outputs;
    json results = json::object();
    fs::path path;
};

void write_manifest(const Manifest &m, int exit_code, const std::string &error, double elapsed_ms,
                    TimestampMs started) {
    json inputs = json::array();
    for (const auto &p : m.inputs) {
        json entry{{"path", p.string()}};
        std::error_code ec;
        if (fs::is_regular_file(p, ec)) entry["sha256"] = sha256_hex(read_file(p));
        inputs.push_back(std::move(entry));
    }
    json outputs = json::array();
    for (const auto &p : m.outputs) outputs.push_back(p.string());
    json j{{"tool", "modgate"},
           {"version", kVersion},
           {"command", m.command},
           {"argv", m.argv},
           {"seed", m.seed},
           {"config", m.config},
           {"inputs", inputs},
           {"outputs", outputs},
           {"results", m.results},
           {"exit_code", exit_code},
           {"timings", {{"started_at", format_iso8601(started)}, {"elapsed_ms", elapsed_ms}}}};
    if (!error.empty()) j["error"] = error;
    if (m.path.has_parent_path()) fs::create_directories(m.path.parent_path());
    write_file_atomic(m.path, j.dump(2) + "\n");
}

template <typename T>
std::vector<T> load_rows(const fs::path &path) {
    std::vector<T> out;
    for (const auto &row : read_jsonl(path)) {
        try {
            out.push_back(row.get<T>());
        } catch (const json::exception &e) {
            throw Error(ErrorCode::InvalidValue, fmt::format("{}: bad row: {}", path.string(), e.what()));
        }
    }
    return out;
}

std::vector<LabeledExample> load_examples(const fs::path &path, const TaxonomySpec &tax) {
    auto rows = load_rows<LabeledExample>(path);
    for (auto &ex : rows) ex = validate_example(std::move(ex), tax);
    return rows;
}

std::size_t default_context_k(Task task) { return task == Task::contribution ? ingest::kDefaultContextWindow : 0; }

// Provider flags shared by every subcommand that talks to a model.
struct ProviderOptions {
    std::string provider;  // empty: MODGATE_PROVIDER, then mock
    std::string model_name = "gpt-3.5-turbo";
    std::string base_url = "https://api.openai.com";
    double noise = 0.0;
    int max_parallel = 4;

    void add_to(CLI::App *cmd) {
        cmd->add_option("--provider", provider, "mock or remote (default: $MODGATE_PROVIDER, then mock)")
            ->check(CLI::IsMember({"mock", "remote"}));
        cmd->add_option("--model-name", model_name, "provider model name")->capture_default_str();
        cmd->add_option("--base-url", base_url, "remote endpoint")->capture_default_str();
        cmd->add_option("--noise", noise, "mock provider error rate")->check(CLI::Range(0.0, 1.0));
        cmd->add_option("--max-parallel", max_parallel, "concurrent provider requests")->check(CLI::PositiveNumber);
    }

    gateway::ProviderRef ref() const {
        gateway::ProviderRef r;
        std::string kind = provider;
        if (kind.empty()) {
            const char *env = std::getenv("MODGATE_PROVIDER");
            kind = env && *env ? env : "mock";
        }
        r.kind = gateway::parse_provider_kind(kind);
        r.model_name = model_name;
        r.endpoint.base_url = base_url;
        r.endpoint.max_parallel = max_parallel;
        r.validate();
        return r;
    }

    json snapshot() const {
        const auto r = ref();
        return {{"provider", gateway::to_string(r.kind)},
                {"model_name", r.model_name},
                {"base_url", r.endpoint.base_url},
                {"noise", noise},
                {"max_parallel", max_parallel}};
    }

    std::shared_ptr<gateway::Provider> make(std::uint64_t seed,
                                            std::shared_ptr<gateway::MockModelRegistry> registry = nullptr) const {
        return gateway::make_provider(ref(), gateway::MockConfig{seed, noise, {}}, std::move(registry));
    }
};

// --model FILE loads a trained baseline; otherwise a prompted provider model.
std::shared_ptr<gateway::TextClassifier> make_classifier(const std::string &model_file, const ProviderOptions &po,
                                                         Task task, std::uint64_t seed, Manifest &m) {
    if (!model_file.empty()) {
        m.inputs.emplace_back(model_file);
        auto model = baseline::load(model_file);
        if (model.task != task) {
            throw Error(ErrorCode::MixedTasks, fmt::format("model {} is for task {}, not {}", model_file,
                                                           to_string(model.task), to_string(task)));
        }
        m.config["classifier"] = "baseline";
        return std::make_shared<baseline::BaselineClassifier>(std::move(model));
    }
    m.config["classifier"] = po.snapshot();
    return std::make_shared<gateway::PromptedClassifier>(po.make(seed), gateway::default_template(task));
}

void write_output(const fs::path &path, std::string_view bytes, Manifest &m) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    write_file_atomic(path, bytes);
    m.outputs.push_back(path);
}

fs::path manifest_beside(const std::string &out, const std::string &command) {
    if (out.empty()) return fs::path(fmt::format("modgate-{}.manifest.json", command));
    return fs::path(out + ".manifest.json");
}

// ---------------------------------------------------------------------------

struct IngestArgs {
    std::string input, format, bots, out, rejects, manifest;
};

void cmd_ingest(const IngestArgs &a, Manifest &m, std::ostream &out) {
    m.inputs.emplace_back(a.input);
    const auto fmt_kind = a.format.empty() ? ingest::format_for_path(a.input) : ingest::parse_format(a.format);
    auto parsed = ingest::parse_export_file(a.input, fmt_kind);
    std::set<std::string> bots;
    if (!a.bots.empty()) {
        m.inputs.emplace_back(a.bots);
        bots = ingest::load_bot_list(a.bots);
    }
    auto kept = ingest::filter_messages(parsed.messages, bots);
    ingest::sort_messages(kept);
    write_output(a.out, ingest::serialize_jsonl(kept), m);
    if (!a.rejects.empty()) {
        std::vector<json> rows;
        for (const auto &r : parsed.rejected) rows.push_back({{"line", r.line}, {"reason", r.reason}});
        write_output(a.rejects, to_jsonl(rows), m);
    }
    m.config = {{"format", fmt_kind == ingest::ExportFormat::csv ? "csv" : "jsonl"}, {"bot_ids", bots.size()}};
    m.results = {{"parsed", parsed.messages.size()},
                 {"kept", kept.size()},
                 {"filtered", parsed.messages.size() - kept.size()},
                 {"rejected", parsed.rejected.size()}};
    out << fmt::format("ingested {} messages ({} filtered, {} rejected lines) -> {}\n", kept.size(),
                       parsed.messages.size() - kept.size(), parsed.rejected.size(), a.out);
}

// ---------------------------------------------------------------------------

struct DistillArgs {
    std::string task = "intent";
    std::string messages, holdout, corrections, out, manifest, student = "baseline";
    std::string base_models = "ada,babbage,curie,davinci";
    std::size_t synthetic = 0;
    double holdout_fraction = 0.2;
    std::size_t fix_per_round = 40;
    std::size_t sample = 0;
    std::optional<std::size_t> context_k;
    std::uint64_t seed = kDefaultSeed;
    bool resume = false;
    distill::StopPolicy policy;
    distill::Thresholds thresholds;
    ProviderOptions teacher;
};

std::vector<std::string> split_csv(const std::string &s) {
    std::vector<std::string> out;
    std::string cur;
    for (const char c : s + ",") {
        if (c == ',') {
            if (!cur.empty()) out.push_back(cur);
            cur.clear();
        } else if (c != ' ') {
            cur += c;
        }
    }
    return out;
}

void cmd_distill(const DistillArgs &a, Manifest &m, std::ostream &out) {
    const Task task = parse_task(a.task);
    const auto &tax = TaxonomySpec::for_task(task);
    const fs::path dir(a.out);
    fs::create_directories(dir);
    const auto checkpoint = dir / "checkpoint.json";
    const std::size_t k = a.context_k.value_or(default_context_k(task));

    auto registry = std::make_shared<gateway::MockModelRegistry>();
    std::shared_ptr<gateway::Provider> teacher = a.teacher.make(a.seed, registry);

    std::vector<Message> messages;
    std::vector<LabeledExample> holdout;
    distill::CorrectionSource corrections;

    if (a.synthetic > 0) {
        if (task != Task::intent) throw Error(ErrorCode::InvalidValue, "--synthetic generates intent data only");
        const auto corpus = synthetic::intent_corpus(a.synthetic, a.seed);
        const auto n_holdout = static_cast<std::size_t>(static_cast<double>(corpus.size()) * a.holdout_fraction);
        std::map<std::string, std::string> gold;
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            messages.push_back(corpus[i].message);
            gold[corpus[i].message.id] = corpus[i].gold;
            if (i + n_holdout >= corpus.size()) {
                holdout.push_back({corpus[i].message.id, {}, corpus[i].message.text, corpus[i].gold,
                                   LabelSource::human, std::string("gold"), 0});
            }
        }
        corrections = synthetic::oracle_corrector(std::move(gold), a.fix_per_round);
        write_output(dir / "synthetic_messages.jsonl", ingest::serialize_jsonl(messages), m);
        std::vector<json> rows(holdout.begin(), holdout.end());
        write_output(dir / "synthetic_holdout.jsonl", to_jsonl(rows), m);
    } else {
        if (a.messages.empty() || a.holdout.empty()) {
            throw CLI::ValidationError("--messages/--holdout", "required unless --synthetic is given");
        }
        m.inputs.emplace_back(a.messages);
        m.inputs.emplace_back(a.holdout);
        messages = load_rows<Message>(a.messages);
        holdout = load_examples(a.holdout, tax);
        if (!a.corrections.empty()) {
            m.inputs.emplace_back(a.corrections);
            std::map<std::uint32_t, std::vector<LabeledExample>> by_round;
            for (auto &ex : load_examples(a.corrections, tax)) by_round[ex.iteration].push_back(std::move(ex));
            corrections = [by_round = std::move(by_round)](const distill::LoopState &s) {
                const auto it = by_round.find(s.iteration);
                return it == by_round.end() ? std::vector<LabeledExample>{} : it->second;
            };
        }
    }

    distill::LoopState state;
    if (a.resume && fs::exists(checkpoint)) {
        m.inputs.push_back(checkpoint);
        state = distill::load_checkpoint(checkpoint);
        if (state.task != task) throw Error(ErrorCode::MixedTasks, "checkpoint was written for another task");
        out << fmt::format("resuming at iteration {}\n", state.iteration);
    } else {
        std::set<std::string> held;
        for (const auto &h : holdout) held.insert(h.message_id);
        auto sorted = messages;
        ingest::sort_messages(sorted);
        std::vector<ingest::ContextualMessage> pool;
        for (auto &cm : ingest::build_context(sorted, k)) {
            if (!held.count(cm.message.id)) pool.push_back(std::move(cm));
        }
        const auto n = a.sample == 0 ? pool.size() : a.sample;
        const auto boot = distill::bootstrap(pool, *teacher, gateway::default_template(task), n, a.seed);
        std::vector<json> excluded;
        for (const auto &e : boot.excluded) excluded.push_back({{"message_id", e.message_id}, {"reason", e.reason}});
        write_output(dir / "bootstrap_excluded.jsonl", to_jsonl(excluded), m);
        std::vector<json> rows(boot.examples.begin(), boot.examples.end());
        write_output(dir / "teacher_labels.jsonl", to_jsonl(rows), m);

        state.task = task;
        state.teacher_labels = boot.examples;
        state.holdout = holdout;
        state.candidates = a.student == "baseline" ? std::vector<std::string>{"baseline"} : split_csv(a.base_models);
        if (state.candidates.empty()) throw Error(ErrorCode::InvalidValue, "--base-models lists no models");
        state = distill::apply_corrections(std::move(state), {});
        m.results["bootstrap"] = {{"sampled", n}, {"labeled", boot.examples.size()}, {"excluded", excluded.size()}};
    }

    std::unique_ptr<distill::StudentTrainer> trainer;
    if (a.student == "baseline") {
        trainer = std::make_unique<distill::BaselineTrainer>();
    } else {
        trainer = std::make_unique<distill::GatewayTrainer>(teacher);
    }

    distill::LoopOptions opts;
    opts.policy = a.policy;
    opts.thresholds = a.thresholds;
    opts.checkpoint = checkpoint;
    opts.on_iteration = [&out](const distill::LoopState &s) {
        out << fmt::format("iteration {}: model {} macro-F1 {:.4f} ({} curated, {} unresolved)\n", s.iteration,
                           s.current_model, s.history.back().macro_f1(), s.curated.size(), s.unresolved.size());
    };
    const auto outcome = distill::run_loop(std::move(state), *trainer, corrections, opts);
    m.outputs.push_back(checkpoint);

    const auto &fs_state = outcome.state;
    json reports = json::array();
    for (const auto &r : fs_state.history) reports.push_back(eval::to_json(r));
    m.results["iterations"] = reports;
    m.results["stop"] = outcome.stop.reason;
    m.results["recommendation"] = distill::to_json(outcome.recommendation);

    if (!fs_state.history.empty()) {
        write_output(dir / "report.json", eval::to_json(fs_state.history.back()).dump(2) + "\n", m);
        write_output(dir / "report.txt", eval::render_table(fs_state.history.back()), m);
    }
    write_output(dir / "recommendation.json", distill::to_json(outcome.recommendation).dump(2) + "\n", m);
    std::vector<json> curated(fs_state.curated.begin(), fs_state.curated.end());
    write_output(dir / "curated.jsonl", to_jsonl(curated), m);
    gateway::PromptTemplate bare;
    bare.task = task;
    write_output(dir / "corpus.jsonl", gateway::build_finetune_corpus(fs_state.curated, bare).bytes, m);
    if (a.student == "baseline") {
        const auto model = baseline::train(fs_state.curated, task);
        const auto path = dir / "student_model.json";
        baseline::save(model, path);
        m.outputs.push_back(path);
    }

    m.config["task"] = a.task;
    m.config["student"] = a.student;
    m.config["candidates"] = fs_state.candidates;
    m.config["context_k"] = k;
    m.config["synthetic"] = a.synthetic;
    m.config["policy"] = {{"epsilon", a.policy.epsilon},
                          {"patience", a.policy.patience},
                          {"max_iterations", a.policy.max_iterations}};
    m.config["thresholds"] = {{"deploy_macro_f1", a.thresholds.deploy_macro_f1},
                              {"alpha_reliability", a.thresholds.alpha_reliability}};
    m.config["teacher"] = a.teacher.snapshot();

    out << fmt::format("stopped: {}\nrecommendation: {} ({})\n", outcome.stop.reason,
                       distill::to_string(outcome.recommendation.action), outcome.recommendation.detail);
}

// ---------------------------------------------------------------------------

struct LabelArgs {
    std::string task = "intent", input, out, model, manifest;
    std::optional<std::size_t> context_k;
    std::uint64_t seed = kDefaultSeed;
    ProviderOptions provider;
};

void cmd_label(const LabelArgs &a, Manifest &m, std::ostream &out) {
    const Task task = parse_task(a.task);
    m.inputs.emplace_back(a.input);
    auto classifier = make_classifier(a.model, a.provider, task, a.seed, m);
    auto msgs = load_rows<Message>(a.input);
    ingest::sort_messages(msgs);
    const auto k = a.context_k.value_or(default_context_k(task));
    const auto source = a.model.empty() ? LabelSource::teacher_zero_shot : LabelSource::student_model;

    std::vector<json> rows;
    std::size_t skipped = 0;
    for (const auto &cm : ingest::build_context(msgs, k)) {
        try {
            const auto r = classifier->classify(cm.context, cm.message.text);
            LabeledExample ex{cm.message.id, cm.context, cm.message.text, r.label, source, std::nullopt, 0};
            json row = ex;
            row["author_id"] = cm.message.author_id;
            if (r.scores) row["scores"] = *r.scores;
            rows.push_back(std::move(row));
        } catch (const Error &e) {
            if (e.code() != ErrorCode::UnparseableCompletion && e.code() != ErrorCode::EmptyText) throw;
            ++skipped;
        }
    }
    write_output(a.out, to_jsonl(rows), m);
    m.config["task"] = a.task;
    m.config["context_k"] = k;
    m.results = {{"labeled", rows.size()}, {"skipped", skipped}};
    out << fmt::format("labeled {} messages ({} skipped) -> {}\n", rows.size(), skipped, a.out);
}

// ---------------------------------------------------------------------------

struct TrainArgs {
    std::string task = "intent", input, out, manifest;
    double smoothing = 1.0;
};

void cmd_train(const TrainArgs &a, Manifest &m, std::ostream &out) {
    const Task task = parse_task(a.task);
    m.inputs.emplace_back(a.input);
    const auto examples = load_examples(a.input, TaxonomySpec::for_task(task));
    const auto model = baseline::train(examples, task, a.smoothing);
    if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
    baseline::save(model, a.out);
    m.outputs.emplace_back(a.out);
    m.config = {{"task", a.task}, {"smoothing", a.smoothing}};
    m.results = {{"examples", examples.size()}, {"vocabulary", model.vocabulary.size()}};
    out << fmt::format("trained on {} examples ({} tokens) -> {}\n", examples.size(), model.vocabulary.size(), a.out);
}

// ---------------------------------------------------------------------------

struct EvalArgs {
    std::string task = "intent", gold, pred, json_out, table_out, manifest;
};

void cmd_eval(const EvalArgs &a, Manifest &m, std::ostream &out) {
    const auto &tax = TaxonomySpec::for_task(parse_task(a.task));
    m.inputs.emplace_back(a.gold);
    m.inputs.emplace_back(a.pred);
    const auto read_labels = [](const fs::path &p) {
        std::vector<std::pair<std::string, std::string>> rows;
        for (const auto &row : read_jsonl(p)) {
            if (!row.contains("message_id") || !row.contains("label")) {
                throw Error(ErrorCode::InvalidValue, fmt::format("{}: rows need message_id and label", p.string()));
            }
            rows.emplace_back(row.at("message_id").get<std::string>(),
                              canonical_label(row.at("label").get<std::string>()));
        }
        return rows;
    };
    const auto gold_rows = read_labels(a.gold);
    const auto pred_rows = read_labels(a.pred);
    std::map<std::string, std::string> pred_by_id(pred_rows.begin(), pred_rows.end());
    if (pred_by_id.size() != gold_rows.size()) {
        throw Error(ErrorCode::LengthMismatch,
                    fmt::format("{} gold rows but {} distinct predictions", gold_rows.size(), pred_by_id.size()));
    }
    std::vector<std::string> gold, pred;
    for (const auto &[id, label] : gold_rows) {
        const auto it = pred_by_id.find(id);
        if (it == pred_by_id.end()) throw Error(ErrorCode::LengthMismatch, fmt::format("no prediction for '{}'", id));
        gold.push_back(label);
        pred.push_back(it->second);
    }
    const auto report = eval::evaluate(gold, pred, tax);
    const auto table = eval::render_table(report);
    out << table;
    if (!a.json_out.empty()) write_output(a.json_out, eval::to_json(report).dump(2) + "\n", m);
    if (!a.table_out.empty()) write_output(a.table_out, table, m);
    m.config["task"] = a.task;
    m.results = {{"macro_f1", report.macro_f1()}, {"accuracy", report.aggregates.accuracy}, {"n", gold.size()}};
}

// ---------------------------------------------------------------------------

struct AgreementArgs {
    std::string input, out, manifest;
};

void cmd_agreement(const AgreementArgs &a, Manifest &m, std::ostream &out) {
    m.inputs.emplace_back(a.input);
    AnnotationMatrix am;
    for (const auto &row : read_jsonl(a.input)) {
        const auto pick = [&](const char *k1, const char *k2) -> std::string {
            if (row.contains(k1) && row.at(k1).is_string()) return row.at(k1).get<std::string>();
            if (row.contains(k2) && row.at(k2).is_string()) return row.at(k2).get<std::string>();
            throw Error(ErrorCode::InvalidValue, fmt::format("annotation row lacks '{}'", k1));
        };
        am.add(pick("unit", "message_id"), pick("annotator", "annotator_id"), canonical_label(pick("label", "label")));
    }
    const auto report = eval::krippendorff_alpha(am);
    const auto j = eval::to_json(report);
    if (!a.out.empty()) write_output(a.out, j.dump(2) + "\n", m);
    m.results = j;
    out << fmt::format("alpha = {:.3f} ({} pairable values over {} units, {} units dropped)\n", report.alpha,
                       report.pairable_values, report.units_used, report.units_dropped);
}

// ---------------------------------------------------------------------------

struct PersonasArgs {
    std::string input, out, manifest;
};

void cmd_personas(const PersonasArgs &a, Manifest &m, std::ostream &out) {
    m.inputs.emplace_back(a.input);
    std::vector<analytics::LabeledMessage> msgs;
    for (const auto &row : read_jsonl(a.input)) {
        if (!row.contains("author_id")) throw Error(ErrorCode::InvalidValue, "label rows need author_id");
        analytics::LabeledMessage lm{row.at("author_id").get<std::string>(), std::nullopt};
        if (row.contains("label") && row.at("label").is_string()) {
            lm.label = canonical_label(row.at("label").get<std::string>());
        }
        msgs.push_back(std::move(lm));
    }
    const auto profiles = analytics::build_profiles(msgs);
    const auto stats = analytics::community_stats(msgs, profiles);
    json j{{"stats", analytics::to_json(stats)}, {"profiles", analytics::to_json(profiles)}};
    if (!a.out.empty()) write_output(a.out, j.dump(2) + "\n", m);
    m.results = j["stats"];
    out << analytics::render_summary(stats);
    for (const auto &p : profiles) {
        std::string names;
        for (const auto persona : p.personas) names += (names.empty() ? "" : ",") + std::string(to_string(persona));
        out << fmt::format("{}\t{}\n", p.author_id, names);
    }
}

// ---------------------------------------------------------------------------

struct CalibrateArgs {
    std::string validation, model, out, manifest;
    double target_recall = 1.0;
    std::uint64_t seed = kDefaultSeed;
    ProviderOptions provider;
};

void cmd_calibrate(const CalibrateArgs &a, Manifest &m, std::ostream &out) {
    m.inputs.emplace_back(a.validation);
    const auto validation = load_examples(a.validation, TaxonomySpec::moderation());
    auto classifier = make_classifier(a.model, a.provider, Task::moderation, a.seed, m);
    const auto c = service::calibrate_threshold(*classifier, validation, a.target_recall);
    const auto j = service::to_json(c);
    if (!a.out.empty()) write_output(a.out, j.dump(2) + "\n", m);
    m.config["target_recall"] = a.target_recall;
    m.results = j;
    out << fmt::format("tau = {:.6f}: toxic recall {:.3f} ({} of {} missed), {} of {} benign flagged{}\n", c.tau,
                       c.toxic_recall, c.type_ii, c.toxic_total, c.type_i, c.benign_total,
                       c.target_met ? "" : " (target not met)");
}

// ---------------------------------------------------------------------------

struct ServeArgs {
    std::string event_log = "modgate-events.jsonl", model, token, persona_stats, eval_report, manifest;
    std::string host = "127.0.0.1";
    int port = 8080;
    double tau = 0.7;
    std::size_t context_k = ingest::kDefaultContextWindow;
    std::uint64_t seed = kDefaultSeed;
    ProviderOptions provider;
};

void cmd_serve(const ServeArgs &a, Manifest &m, std::ostream &out, const std::function<void()> &flush_manifest) {
    std::shared_ptr<gateway::TextClassifier> classifier;
    try {
        classifier = make_classifier(a.model, a.provider, Task::moderation, a.seed, m);
    } catch (const Error &e) {
        // Start anyway; every score request then fails closed.
        out << fmt::format("warning: no moderation model ({}); all messages will be flagged\n", e.what());
    }
    service::GatePolicy policy;
    policy.tau = a.tau;
    policy.validate();
    service::ModerationService svc(classifier, policy, a.event_log, now_ms, a.context_k);
    service::ApiConfig cfg;
    std::string token = a.token;
    if (token.empty()) {
        if (const char *env = std::getenv("MODGATE_API_TOKEN"); env && *env) token = env;
    }
    if (!token.empty()) cfg.bearer_token = token;
    if (!a.persona_stats.empty()) cfg.persona_stats = a.persona_stats;
    if (!a.eval_report.empty()) cfg.eval_report = a.eval_report;
    service::Api api(svc, cfg);
    service::HttpServer server(api);
    m.config = {{"host", a.host}, {"port", a.port}, {"tau", a.tau}, {"event_log", a.event_log},
                {"auth", !token.empty()}, {"context_k", a.context_k}};
    m.outputs.emplace_back(a.event_log);
    flush_manifest();
    out << fmt::format("serving on http://{}:{} (event log {})\n", a.host, a.port, a.event_log) << std::flush;
    server.listen_blocking(a.host, a.port);
}

// ---------------------------------------------------------------------------

struct ExportArgs {
    std::string event_log, since, out, manifest;
};

void cmd_export(const ExportArgs &a, Manifest &m, std::ostream &out) {
    if (!fs::exists(a.event_log)) {
        throw Error(ErrorCode::UnreadableSource, fmt::format("event log {} does not exist", a.event_log));
    }
    m.inputs.emplace_back(a.event_log);
    TimestampMs since = std::numeric_limits<TimestampMs>::min();
    if (!a.since.empty()) {
        const auto ts = parse_iso8601(a.since);
        if (!ts) throw CLI::ValidationError("--since", "must be an ISO-8601 instant");
        since = *ts;
    }
    // Opening replays the log read-only; nothing is appended without scoring.
    service::ModerationService svc(nullptr, {}, a.event_log);
    const auto corpus = svc.export_retraining_corpus(since);
    write_output(a.out, corpus.bytes, m);
    m.config = {{"since", a.since}};
    m.results = {{"count", corpus.count}};
    out << fmt::format("exported {} resolved verdicts -> {}\n", corpus.count, a.out);
}

}  // namespace

int run(const std::vector<std::string> &args, std::ostream &out, std::ostream &err) {
    CLI::App app{"Moderation model distillation and serving toolkit", "modgate"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    Manifest manifest;
    manifest.argv = args;
    std::function<void()> action;

    // ingest
    IngestArgs ia;
    auto *ingest_cmd = app.add_subcommand("ingest", "Parse a chat export into the message store");
    ingest_cmd->add_option("--input", ia.input, "export file (.jsonl or .csv)")->required()->check(CLI::ExistingFile);
    ingest_cmd->add_option("--format", ia.format, "jsonl or csv (default: by extension)")
        ->check(CLI::IsMember({"jsonl", "csv"}));
    ingest_cmd->add_option("--bots", ia.bots, "bot author ids, one per line")->check(CLI::ExistingFile);
    ingest_cmd->add_option("--out", ia.out, "message store (JSONL)")->required();
    ingest_cmd->add_option("--rejects", ia.rejects, "write rejected lines here");
    ingest_cmd->add_option("--manifest", ia.manifest);
    ingest_cmd->callback([&] {
        manifest.path = ia.manifest.empty() ? manifest_beside(ia.out, "ingest") : fs::path(ia.manifest);
        action = [&] { cmd_ingest(ia, manifest, out); };
    });

    // distill
    DistillArgs da;
    auto *distill_cmd = app.add_subcommand("distill", "Run the teacher/student distillation loop");
    distill_cmd->add_option("--task", da.task)->check(CLI::IsMember({"intent", "moderation", "contribution"}))
        ->capture_default_str();
    distill_cmd->add_option("--messages", da.messages, "message store (JSONL)")->check(CLI::ExistingFile);
    distill_cmd->add_option("--holdout", da.holdout, "human-labeled benchmark (JSONL)")->check(CLI::ExistingFile);
    distill_cmd->add_option("--corrections", da.corrections, "human corrections keyed by iteration")
        ->check(CLI::ExistingFile);
    distill_cmd->add_option("--synthetic", da.synthetic, "generate N labeled intent messages instead of reading files");
    distill_cmd->add_option("--holdout-fraction", da.holdout_fraction)->check(CLI::Range(0.01, 0.9));
    distill_cmd->add_option("--fix-per-round", da.fix_per_round, "synthetic reviewer throughput");
    distill_cmd->add_option("--sample", da.sample, "teacher sample size (default: all)");
    distill_cmd->add_option("--context-k", da.context_k, "preceding messages shown per example");
    distill_cmd->add_option("--student", da.student)->check(CLI::IsMember({"baseline", "gateway"}))
        ->capture_default_str();
    distill_cmd->add_option("--base-models", da.base_models, "fine-tune candidates, smallest first")
        ->capture_default_str();
    distill_cmd->add_option("--epsilon", da.policy.epsilon)->capture_default_str();
    distill_cmd->add_option("--patience", da.policy.patience)->capture_default_str();
    distill_cmd->add_option("--max-iterations", da.policy.max_iterations)->capture_default_str();
    distill_cmd->add_option("--target-f1", da.thresholds.deploy_macro_f1)->capture_default_str();
    distill_cmd->add_option("--alpha-threshold", da.thresholds.alpha_reliability)->capture_default_str();
    distill_cmd->add_option("--seed", da.seed)->capture_default_str();
    distill_cmd->add_flag("--resume", da.resume, "continue from the checkpoint in --out");
    distill_cmd->add_option("--out", da.out, "output directory")->required();
    distill_cmd->add_option("--manifest", da.manifest);
    da.teacher.add_to(distill_cmd);
    distill_cmd->callback([&] {
        manifest.seed = da.seed;
        manifest.path = da.manifest.empty() ? fs::path(da.out) / "manifest.json" : fs::path(da.manifest);
        action = [&] { cmd_distill(da, manifest, out); };
    });

    // label
    LabelArgs la;
    auto *label_cmd = app.add_subcommand("label", "Batch-classify a message store");
    label_cmd->add_option("--task", la.task)->check(CLI::IsMember({"intent", "moderation", "contribution"}))
        ->capture_default_str();
    label_cmd->add_option("--input", la.input, "message store (JSONL)")->required()->check(CLI::ExistingFile);
    label_cmd->add_option("--out", la.out, "labels (JSONL)")->required();
    label_cmd->add_option("--model", la.model, "trained baseline model file")->check(CLI::ExistingFile);
    label_cmd->add_option("--context-k", la.context_k);
    label_cmd->add_option("--seed", la.seed)->capture_default_str();
    label_cmd->add_option("--manifest", la.manifest);
    la.provider.add_to(label_cmd);
    label_cmd->callback([&] {
        manifest.seed = la.seed;
        manifest.path = la.manifest.empty() ? manifest_beside(la.out, "label") : fs::path(la.manifest);
        action = [&] { cmd_label(la, manifest, out); };
    });

    // train
    TrainArgs ta;
    auto *train_cmd = app.add_subcommand("train", "Train the naive Bayes baseline on labeled examples");
    train_cmd->add_option("--task", ta.task)->check(CLI::IsMember({"intent", "moderation", "contribution"}))
        ->capture_default_str();
    train_cmd->add_option("--input", ta.input, "labeled examples (JSONL)")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--out", ta.out, "model file")->required();
    train_cmd->add_option("--smoothing", ta.smoothing)->check(CLI::PositiveNumber)->capture_default_str();
    train_cmd->add_option("--manifest", ta.manifest);
    train_cmd->callback([&] {
        manifest.path = ta.manifest.empty() ? manifest_beside(ta.out, "train") : fs::path(ta.manifest);
        action = [&] { cmd_train(ta, manifest, out); };
    });

    // eval
    EvalArgs ea;
    auto *eval_cmd = app.add_subcommand("eval", "Score predictions against gold labels");
    eval_cmd->add_option("--task", ea.task)->check(CLI::IsMember({"intent", "moderation", "contribution"}))
        ->capture_default_str();
    eval_cmd->add_option("--gold", ea.gold)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--pred", ea.pred)->required()->check(CLI::ExistingFile);
    eval_cmd->add_option("--json", ea.json_out, "write the report as JSON");
    eval_cmd->add_option("--table", ea.table_out, "write the rendered table");
    eval_cmd->add_option("--manifest", ea.manifest);
    eval_cmd->callback([&] {
        const auto &anchor = !ea.json_out.empty() ? ea.json_out : ea.table_out;
        manifest.path = ea.manifest.empty() ? manifest_beside(anchor, "eval") : fs::path(ea.manifest);
        action = [&] { cmd_eval(ea, manifest, out); };
    });

    // agreement
    AgreementArgs aa;
    auto *agree_cmd = app.add_subcommand("agreement", "Krippendorff's alpha over an annotation matrix");
    agree_cmd->add_option("--input", aa.input, "rows of {unit, annotator, label}")->required()
        ->check(CLI::ExistingFile);
    agree_cmd->add_option("--out", aa.out, "write the report as JSON");
    agree_cmd->add_option("--manifest", aa.manifest);
    agree_cmd->callback([&] {
        manifest.path = aa.manifest.empty() ? manifest_beside(aa.out, "agreement") : fs::path(aa.manifest);
        action = [&] { cmd_agreement(aa, manifest, out); };
    });

    // personas
    PersonasArgs pa;
    auto *persona_cmd = app.add_subcommand("personas", "Persona assignment and community statistics");
    persona_cmd->add_option("--input", pa.input, "rows of {author_id, label}")->required()->check(CLI::ExistingFile);
    persona_cmd->add_option("--out", pa.out, "write stats and profiles as JSON");
    persona_cmd->add_option("--manifest", pa.manifest);
    persona_cmd->callback([&] {
        manifest.path = pa.manifest.empty() ? manifest_beside(pa.out, "personas") : fs::path(pa.manifest);
        action = [&] { cmd_personas(pa, manifest, out); };
    });

    // calibrate
    CalibrateArgs ca;
    auto *cal_cmd = app.add_subcommand("calibrate", "Pick the gate threshold on a validation set");
    cal_cmd->add_option("--validation", ca.validation, "gold moderation labels (JSONL)")->required()
        ->check(CLI::ExistingFile);
    cal_cmd->add_option("--model", ca.model, "trained baseline model file")->check(CLI::ExistingFile);
    cal_cmd->add_option("--target-recall", ca.target_recall)->check(CLI::Range(0.0, 1.0))->capture_default_str();
    cal_cmd->add_option("--out", ca.out, "write the result as JSON");
    cal_cmd->add_option("--seed", ca.seed)->capture_default_str();
    cal_cmd->add_option("--manifest", ca.manifest);
    ca.provider.add_to(cal_cmd);
    cal_cmd->callback([&] {
        manifest.seed = ca.seed;
        manifest.path = ca.manifest.empty() ? manifest_beside(ca.out, "calibrate") : fs::path(ca.manifest);
        action = [&] { cmd_calibrate(ca, manifest, out); };
    });

    // serve
    ServeArgs sa;
    auto *serve_cmd = app.add_subcommand("serve", "Run the moderation service");
    serve_cmd->add_option("--host", sa.host)->capture_default_str();
    serve_cmd->add_option("--port", sa.port)->check(CLI::Range(0, 65535))->capture_default_str();
    serve_cmd->add_option("--event-log", sa.event_log)->capture_default_str();
    serve_cmd->add_option("--model", sa.model, "trained moderation baseline")->check(CLI::ExistingFile);
    serve_cmd->add_option("--tau", sa.tau, "gate threshold")->check(CLI::Range(0.0, 1.0))->capture_default_str();
    serve_cmd->add_option("--context-k", sa.context_k)->capture_default_str();
    serve_cmd->add_option("--token", sa.token, "bearer token (default: $MODGATE_API_TOKEN)");
    serve_cmd->add_option("--persona-stats", sa.persona_stats, "JSON served at /v1/stats/personas");
    serve_cmd->add_option("--eval-report", sa.eval_report, "JSON served at /v1/reports/eval");
    serve_cmd->add_option("--seed", sa.seed)->capture_default_str();
    serve_cmd->add_option("--manifest", sa.manifest);
    sa.provider.add_to(serve_cmd);

    // export-corpus
    ExportArgs xa;
    auto *export_cmd = app.add_subcommand("export-corpus", "Export resolved verdicts as a fine-tune corpus");
    export_cmd->add_option("--event-log", xa.event_log)->required();
    export_cmd->add_option("--since", xa.since, "only verdicts resolved after this ISO-8601 instant");
    export_cmd->add_option("--out", xa.out, "corpus (JSONL)")->required();
    export_cmd->add_option("--manifest", xa.manifest);
    export_cmd->callback([&] {
        manifest.path = xa.manifest.empty() ? manifest_beside(xa.out, "export-corpus") : fs::path(xa.manifest);
        action = [&] { cmd_export(xa, manifest, out); };
    });

    const auto started = now_ms();
    const auto t0 = std::chrono::steady_clock::now();
    const auto elapsed = [&] {
        return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    };
    serve_cmd->callback([&] {
        manifest.seed = sa.seed;
        manifest.path = sa.manifest.empty() ? fs::path("modgate-serve.manifest.json") : fs::path(sa.manifest);
        action = [&] { cmd_serve(sa, manifest, out, [&] { write_manifest(manifest, 0, {}, elapsed(), started); }); };
    });

    std::vector<const char *> argv;
    for (const auto &a : args) argv.push_back(a.c_str());
    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError &e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitUsage;
    }

    for (const auto *sub : app.get_subcommands()) manifest.command = sub->get_name();
    int exit_code = kExitOk;
    std::string error;
    try {
        action();
    } catch (const CLI::ValidationError &e) {
        err << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const Error &e) {
        error = fmt::format("{}: {}", e.code_name(), e.what());
        exit_code = kExitDomainError;
    } catch (const std::exception &e) {
        error = e.what();
        exit_code = kExitDomainError;
    }
    if (!error.empty()) err << "error: " << error << "\n";
    try {
        write_manifest(manifest, exit_code, error, elapsed(), started);
    } catch (const std::exception &e) {
        err << "error: cannot write manifest: " << e.what() << "\n";
        if (exit_code == kExitOk) exit_code = kExitDomainError;
    }
    return exit_code;
}

}  // namespace modgate::cli
