// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <semaphore>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "modgate/domain.hpp"
#include "modgate/error.hpp"

namespace modgate::gateway {

/// Terminates every prompt; the completion follows it.
inline constexpr std::string_view kSeparator = "\n\n###\n\n";

enum class ProviderKind { remote, mock };

std::string_view to_string(ProviderKind kind);
ProviderKind parse_provider_kind(std::string_view name);

struct EndpointConfig {
    std::string base_url = "https://api.openai.com";
    std::string credential_env = "MODGATE_API_KEY";
    std::chrono::milliseconds timeout{30000};
    int max_attempts = 5;
    int max_parallel = 4;
};

struct ProviderRef {
    ProviderKind kind = ProviderKind::mock;
    std::string model_name = "ada";
    EndpointConfig endpoint;

    /// Throws InvalidValue unless max_parallel >= 1, timeout > 0 and max_attempts >= 1.
    void validate() const;
    std::string summary() const;
};

struct PromptTemplate {
    Task task = Task::intent;
    /// Instruction block. `{labels}` is required; `{definitions}` and
    /// `{task}` are optional.
    std::string preamble;
    std::vector<LabeledExample> few_shot;
};

PromptTemplate default_template(Task task);

/// `context` lines then `text`, newline-joined, then the separator. Embedded
/// newlines inside a message are flattened to spaces so that every message
/// occupies exactly one line.
std::string message_block(std::span<const std::string> context, std::string_view text);

/// Renders a classification prompt. Throws EmptyText for blank `text` and
/// TemplateError when the template is unusable for `tax`.
std::string render_prompt(const PromptTemplate &tpl, const TaxonomySpec &tax, std::span<const std::string> context,
                          std::string_view text);

/// Trim, lowercase, first whitespace-delimited token, exact taxonomy match.
std::optional<std::string> parse_completion(std::string_view raw, const TaxonomySpec &tax);

/// Focus text of a prompt: the last line before the trailing separator.
std::string focus_text(std::string_view prompt);

struct ClassificationResult {
    std::string label;
    std::optional<std::map<std::string, double>> scores;
    std::string raw_completion;
    std::chrono::microseconds latency{0};
    std::string provider;
};

// ---------------------------------------------------------------------------
// Fine-tune corpus wire format

struct CorpusBuild {
    std::string bytes;
    std::map<std::string, std::size_t> label_counts;
    std::size_t total = 0;
};

/// One `{"prompt": ..., "completion": " <label>\n"}` line per example.
/// Throws EmptyCorpus or MixedTasks (labels not all in the template task's
/// taxonomy).
CorpusBuild build_finetune_corpus(const std::vector<LabeledExample> &examples, const PromptTemplate &tpl);

struct CorpusLine {
    std::vector<std::string> context;
    std::string text;
    std::string label;
};

/// Reads a corpus back. Throws InvalidValue on a malformed line.
std::vector<CorpusLine> parse_corpus(std::string_view bytes);

// ---------------------------------------------------------------------------
// Providers

class Provider {
public:
    virtual ~Provider() = default;

    virtual const ProviderRef &ref() const = 0;
    virtual ClassificationResult classify(const std::string &prompt, const TaxonomySpec &tax) = 0;
    /// Returns the identifier of the fine-tuned model.
    virtual std::string submit_finetune(const std::string &corpus, const std::string &base_model) = 0;
    /// Same provider, addressing another model (e.g. a fine-tune result).
    virtual std::unique_ptr<Provider> with_model(const std::string &model_name) const = 0;
};

inline ClassificationResult classify(Provider &p, const std::string &prompt, const TaxonomySpec &tax) {
    return p.classify(prompt, tax);
}

/// Rejects an empty corpus before anything is sent.
std::string submit_finetune(Provider &p, const CorpusBuild &corpus, const std::string &base_model);

struct BatchOutcome {
    std::optional<ClassificationResult> result;
    std::optional<ErrorCode> error;
    std::string error_message;
};

/// Classifies prompts on up to `workers` threads. Output order matches input.
std::vector<BatchOutcome> classify_batch(Provider &p, const std::vector<std::string> &prompts,
                                         const TaxonomySpec &tax, int workers);

/// token -> label
using Lexicon = std::map<std::string, std::string>;

/// Built-in lexicon for the offline mock teacher.
Lexicon default_lexicon(Task task);

/// Shared store of mock "fine-tuned" models, keyed by model id.
class MockModelRegistry {
public:
    void put(const std::string &id, Lexicon lex);
    std::optional<Lexicon> get(const std::string &id) const;

private:
    mutable std::mutex mu_;
    std::map<std::string, Lexicon> models_;
};

struct MockConfig {
    std::uint64_t seed = 0;
    /// Probability of answering with a uniformly chosen wrong label.
    double noise = 0.0;
    /// Lexicon used for base (non fine-tuned) model names; empty means the
    /// task default is used at classify time.
    Lexicon lexicon;
};

/// Deterministic offline provider: a pure function of (seed, lexicon, prompt).
class MockProvider final : public Provider {
public:
    MockProvider(ProviderRef ref, MockConfig config, std::shared_ptr<MockModelRegistry> registry = nullptr);

    const ProviderRef &ref() const override { return ref_; }
    ClassificationResult classify(const std::string &prompt, const TaxonomySpec &tax) override;
    std::string submit_finetune(const std::string &corpus, const std::string &base_model) override;
    std::unique_ptr<Provider> with_model(const std::string &model_name) const override;

    const MockConfig &config() const { return config_; }

private:
    Lexicon lexicon_for(const TaxonomySpec &tax) const;

    ProviderRef ref_;
    MockConfig config_;
    std::shared_ptr<MockModelRegistry> registry_;
};

// Remote transport -----------------------------------------------------------

struct HttpResponse {
    int status = 0;  // 0 = transport failure
    std::string body;
    std::string error;
};

class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpResponse post_json(const std::string &path, const std::string &body) = 0;
    virtual HttpResponse get(const std::string &path) = 0;
    virtual HttpResponse upload_file(const std::string &path, const std::string &purpose, const std::string &filename,
                                     const std::string &bytes) = 0;
};

/// cpp-httplib backed transport with bearer auth.
std::unique_ptr<Transport> make_http_transport(const EndpointConfig &cfg, const std::string &api_key);

struct RetryPolicy {
    std::chrono::milliseconds initial_delay{1000};
    double factor = 2.0;
    double jitter = 0.2;
    int max_attempts = 5;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

/// Delay before retry number `retry` (1-based), with jitter drawn from `rng`.
std::chrono::milliseconds backoff_delay(const RetryPolicy &policy, int retry, std::mt19937_64 &rng);

class RemoteProvider final : public Provider {
public:
    RemoteProvider(ProviderRef ref, std::shared_ptr<Transport> transport, Sleeper sleeper = {},
                   std::uint64_t jitter_seed = 0);

    const ProviderRef &ref() const override { return ref_; }
    ClassificationResult classify(const std::string &prompt, const TaxonomySpec &tax) override;
    std::string submit_finetune(const std::string &corpus, const std::string &base_model) override;
    std::unique_ptr<Provider> with_model(const std::string &model_name) const override;

    void set_poll_interval(std::chrono::milliseconds interval) { poll_interval_ = interval; }

private:
    struct Shared;
    RemoteProvider(ProviderRef ref, std::shared_ptr<Shared> shared);

    HttpResponse send(const std::function<HttpResponse()> &request);

    ProviderRef ref_;
    std::shared_ptr<Shared> shared_;
    std::chrono::milliseconds poll_interval_{5000};
};

/// Provider from a ref, honouring MODGATE_PROVIDER / MODGATE_API_KEY.
std::unique_ptr<Provider> make_provider(ProviderRef ref, const MockConfig &mock = {},
                                        std::shared_ptr<MockModelRegistry> registry = nullptr);

// ---------------------------------------------------------------------------

/// Anything that labels a message given its preceding context.
class TextClassifier {
public:
    virtual ~TextClassifier() = default;
    virtual const TaxonomySpec &taxonomy() const = 0;
    virtual ClassificationResult classify(std::span<const std::string> context, std::string_view text) = 0;
};

/// TextClassifier over a Provider plus a prompt template.
class PromptedClassifier final : public TextClassifier {
public:
    PromptedClassifier(std::shared_ptr<Provider> provider, PromptTemplate tpl);

    const TaxonomySpec &taxonomy() const override { return TaxonomySpec::for_task(tpl_.task); }
    ClassificationResult classify(std::span<const std::string> context, std::string_view text) override;

private:
    std::shared_ptr<Provider> provider_;
    PromptTemplate tpl_;
};

}  // namespace modgate::gateway
