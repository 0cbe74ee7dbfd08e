// SPDX-License-Identifier: Apache-2.0
#include "modgate/gateway.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "modgate/io.hpp"

namespace modgate::gateway {

std::string_view to_string(ProviderKind kind) { return kind == ProviderKind::remote ? "remote" : "mock"; }

ProviderKind parse_provider_kind(std::string_view name) {
    if (name == "remote") return ProviderKind::remote;
    if (name == "mock") return ProviderKind::mock;
    throw Error(ErrorCode::InvalidValue, fmt::format("unknown provider '{}' (expected remote or mock)", name));
}

void ProviderRef::validate() const {
    if (endpoint.max_parallel < 1) throw Error(ErrorCode::InvalidValue, "max_parallel must be >= 1");
    if (endpoint.timeout.count() <= 0) throw Error(ErrorCode::InvalidValue, "timeout must be > 0");
    if (endpoint.max_attempts < 1) throw Error(ErrorCode::InvalidValue, "max_attempts must be >= 1");
    if (model_name.empty()) throw Error(ErrorCode::InvalidValue, "model_name must not be empty");
}

std::string ProviderRef::summary() const { return fmt::format("{}:{}", to_string(kind), model_name); }

PromptTemplate default_template(Task task) {
    PromptTemplate tpl;
    tpl.task = task;
    tpl.preamble =
        "Classify the community chat message below into exactly one {task} category.\n"
        "Category descriptions, in order:\n"
        "{definitions}\n"
        "The categories are named, in the same order: {labels}.\n"
        "Any preceding lines are earlier messages from the same channel; label only the last line.\n"
        "Answer with the category name only.\n\n";
    return tpl;
}

namespace {

std::string flatten(std::string_view s) {
    std::string out;
    out.reserve(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        const char c = s[i];
        if (c == '\r') {
            if (i + 1 < s.size() && s[i + 1] == '\n') continue;
            out += ' ';
        } else if (c == '\n') {
            out += ' ';
        } else {
            out += c;
        }
    }
    return out;
}

bool is_blank(std::string_view s) { return s.find_first_not_of(" \t\r\n") == std::string_view::npos; }

bool is_word_char(char c) {
    const auto u = static_cast<unsigned char>(c);
    return std::isalnum(u) || c == '_';
}

std::size_t count_whole_word(std::string_view haystack, std::string_view word) {
    std::size_t count = 0;
    for (std::size_t pos = haystack.find(word); pos != std::string_view::npos; pos = haystack.find(word, pos + 1)) {
        const bool left_ok = pos == 0 || !is_word_char(haystack[pos - 1]);
        const std::size_t end = pos + word.size();
        const bool right_ok = end == haystack.size() || !is_word_char(haystack[end]);
        if (left_ok && right_ok) ++count;
    }
    return count;
}

void replace_all(std::string &s, std::string_view from, std::string_view to) {
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
        s.replace(pos, from.size(), to);
    }
}

std::string render_instructions(const PromptTemplate &tpl, const TaxonomySpec &tax) {
    if (tpl.preamble.empty()) return {};
    if (tpl.preamble.find("{labels}") == std::string::npos) {
        throw Error(ErrorCode::TemplateError, "template preamble lacks the {labels} placeholder");
    }
    std::string definitions;
    for (std::size_t i = 0; i < tax.labels().size(); ++i) {
        if (i) definitions += '\n';
        definitions += fmt::format("{}. {}", i + 1, tax.definition(tax.labels()[i]));
    }
    std::string labels;
    for (std::size_t i = 0; i < tax.labels().size(); ++i) {
        if (i) labels += ", ";
        labels += tax.labels()[i];
    }
    std::string out = tpl.preamble;
    replace_all(out, "{definitions}", definitions);
    replace_all(out, "{task}", to_string(tax.task()));
    replace_all(out, "{labels}", labels);
    for (const auto &label : tax.labels()) {
        const auto n = count_whole_word(out, label);
        if (n != 1) {
            throw Error(ErrorCode::TemplateError,
                        fmt::format("label '{}' appears {} times in the instruction block (expected 1)", label, n));
        }
    }
    return out;
}

std::string completion_for(std::string_view label) { return fmt::format(" {}\n", label); }

}  // namespace

std::string message_block(std::span<const std::string> context, std::string_view text) {
    std::string out;
    for (const auto &line : context) {
        out += flatten(line);
        out += '\n';
    }
    out += flatten(text);
    out += kSeparator;
    return out;
}

std::string render_prompt(const PromptTemplate &tpl, const TaxonomySpec &tax, std::span<const std::string> context,
                          std::string_view text) {
    if (is_blank(text)) throw Error(ErrorCode::EmptyText, "cannot classify an empty message");
    if (tpl.task != tax.task()) {
        throw Error(ErrorCode::TemplateError, fmt::format("template is for task '{}' but taxonomy is '{}'",
                                                          to_string(tpl.task), to_string(tax.task())));
    }
    std::string out = render_instructions(tpl, tax);
    for (const auto &ex : tpl.few_shot) {
        if (!tax.contains(ex.label)) {
            throw Error(ErrorCode::TemplateError, fmt::format("few-shot label '{}' not in taxonomy", ex.label));
        }
        out += message_block(ex.context, ex.text);
        out += completion_for(ex.label);
        out += '\n';
    }
    out += message_block(context, text);
    return out;
}

std::optional<std::string> parse_completion(std::string_view raw, const TaxonomySpec &tax) {
    const std::string canon = canonical_label(raw);
    const auto end = canon.find_first_of(" \t\r\n");
    std::string first = canon.substr(0, end);
    if (tax.contains(first)) return first;
    return std::nullopt;
}

std::string focus_text(std::string_view prompt) {
    if (prompt.size() >= kSeparator.size() && prompt.substr(prompt.size() - kSeparator.size()) == kSeparator) {
        prompt.remove_suffix(kSeparator.size());
    }
    const auto nl = prompt.rfind('\n');
    return std::string(nl == std::string_view::npos ? prompt : prompt.substr(nl + 1));
}

// ---------------------------------------------------------------------------

CorpusBuild build_finetune_corpus(const std::vector<LabeledExample> &examples, const PromptTemplate &tpl) {
    if (examples.empty()) throw Error(ErrorCode::EmptyCorpus, "cannot build a corpus from zero examples");
    const auto &tax = TaxonomySpec::for_task(tpl.task);
    CorpusBuild build;
    for (const auto &ex : examples) {
        if (!tax.contains(ex.label)) {
            throw Error(ErrorCode::MixedTasks, fmt::format("example '{}' has label '{}' outside the {} taxonomy",
                                                           ex.message_id, ex.label, to_string(tpl.task)));
        }
        if (is_blank(ex.text)) throw Error(ErrorCode::EmptyText, fmt::format("example '{}' has no text", ex.message_id));
        nlohmann::ordered_json line;
        line["prompt"] = message_block(ex.context, ex.text);
        line["completion"] = completion_for(ex.label);
        build.bytes += line.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
        build.bytes += '\n';
        ++build.label_counts[ex.label];
        ++build.total;
    }
    return build;
}

std::vector<CorpusLine> parse_corpus(std::string_view bytes) {
    std::vector<CorpusLine> lines;
    std::size_t line_no = 0;
    std::size_t start = 0;
    while (start < bytes.size()) {
        auto end = bytes.find('\n', start);
        if (end == std::string_view::npos) end = bytes.size();
        const auto raw = bytes.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (is_blank(raw)) continue;
        const auto j = nlohmann::json::parse(raw, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("prompt") || !j.contains("completion") ||
            !j["prompt"].is_string() || !j["completion"].is_string()) {
            throw Error(ErrorCode::InvalidValue, fmt::format("corpus line {} is malformed", line_no));
        }
        std::string prompt = j["prompt"].get<std::string>();
        if (prompt.size() < kSeparator.size() || prompt.substr(prompt.size() - kSeparator.size()) != kSeparator) {
            throw Error(ErrorCode::InvalidValue, fmt::format("corpus line {} prompt lacks the separator", line_no));
        }
        prompt.resize(prompt.size() - kSeparator.size());
        const std::string completion = j["completion"].get<std::string>();
        if (completion.size() < 3 || completion.front() != ' ' || completion.back() != '\n') {
            throw Error(ErrorCode::InvalidValue, fmt::format("corpus line {} completion is malformed", line_no));
        }
        CorpusLine line;
        std::istringstream ss(prompt);
        std::string part;
        std::vector<std::string> parts;
        while (std::getline(ss, part)) parts.push_back(part);
        if (!prompt.empty() && prompt.back() == '\n') parts.emplace_back();
        if (parts.empty()) parts.emplace_back();
        line.text = parts.back();
        parts.pop_back();
        line.context = std::move(parts);
        line.label = completion.substr(1, completion.size() - 2);
        lines.push_back(std::move(line));
    }
    return lines;
}

std::string submit_finetune(Provider &p, const CorpusBuild &corpus, const std::string &base_model) {
    if (corpus.total == 0 || corpus.bytes.empty()) {
        throw Error(ErrorCode::EmptyCorpus, "refusing to submit an empty fine-tune corpus");
    }
    return p.submit_finetune(corpus.bytes, base_model);
}

std::vector<BatchOutcome> classify_batch(Provider &p, const std::vector<std::string> &prompts,
                                         const TaxonomySpec &tax, int workers) {
    std::vector<BatchOutcome> out(prompts.size());
    std::atomic<std::size_t> next{0};
    const auto work = [&] {
        for (std::size_t i = next++; i < prompts.size(); i = next++) {
            try {
                out[i].result = p.classify(prompts[i], tax);
            } catch (const Error &e) {
                out[i].error = e.code();
                out[i].error_message = e.what();
            }
        }
    };
    const auto n = static_cast<std::size_t>(std::max(1, workers));
    std::vector<std::thread> threads;
    for (std::size_t t = 1; t < std::min(n, prompts.size()); ++t) threads.emplace_back(work);
    work();
    for (auto &t : threads) t.join();
    return out;
}

// ---------------------------------------------------------------------------
// Mock provider

Lexicon default_lexicon(Task task) {
    Lexicon lex;
    const auto add = [&lex](std::string_view label, std::initializer_list<const char *> words) {
        for (const char *w : words) lex[w] = std::string(label);
    };
    switch (task) {
        case Task::intent:
            add("crypto", {"token", "tokens", "nft", "nfts", "wallet", "eth", "btc", "crypto", "coin", "coins",
                           "blockchain", "mint", "minting", "airdrop", "staking", "hodl", "pump", "dex", "gas",
                           "metamask", "opensea", "floor", "lambo", "defi", "web3", "burn", "burning"});
            add("fan", {"doctor", "tardis", "dalek", "daleks", "episode", "episodes", "companion", "regeneration",
                        "whovian", "season", "cybermen", "gallifrey", "sonic", "screwdriver", "timelord", "lore",
                        "villain", "actor", "series", "character", "characters"});
            add("casual", {"gm", "gn", "hello", "hey", "lol", "haha", "thanks", "morning", "night", "weekend",
                           "coffee", "lunch", "weather", "sleep", "hi"});
            break;
        case Task::moderation:
            add("toxic", {"idiot", "idiots", "moron", "morons", "stupid", "loser", "losers", "scum", "trash",
                          "kys", "hate", "dumb", "pathetic", "worthless", "shut"});
            add("spam", {"giveaway", "free", "claim", "click", "promo", "discount", "earn", "guaranteed", "profit",
                         "http", "https", "www", "dm", "invest", "bonus", "offer"});
            break;
        case Task::contribution:
            add("onboarding", {"welcome", "newcomer", "newcomers", "newbie", "faq", "roles", "intro", "guide"});
            add("knowledge_tcg", {"deck", "decks", "card", "cards", "tcg", "booster", "rarity", "foil"});
            add("knowledge_fan", {"lore", "tardis", "episode", "regeneration", "gallifrey", "doctor"});
            add("knowledge_crypto", {"wallet", "gas", "contract", "mint", "metamask", "bridge", "chain"});
            add("content", {"art", "drew", "drawing", "video", "meme", "fanart", "animation", "painted"});
            add("moderation", {"scam", "report", "rules", "warning", "banned", "phishing", "careful"});
            add("suggestion", {"suggest", "suggestion", "idea", "feature", "propose", "improve", "should"});
            break;
    }
    return lex;
}

void MockModelRegistry::put(const std::string &id, Lexicon lex) {
    std::lock_guard lock(mu_);
    models_[id] = std::move(lex);
}

std::optional<Lexicon> MockModelRegistry::get(const std::string &id) const {
    std::lock_guard lock(mu_);
    const auto it = models_.find(id);
    if (it == models_.end()) return std::nullopt;
    return it->second;
}

MockProvider::MockProvider(ProviderRef ref, MockConfig config, std::shared_ptr<MockModelRegistry> registry)
    : ref_(std::move(ref)), config_(std::move(config)), registry_(std::move(registry)) {
    ref_.validate();
    if (!registry_) registry_ = std::make_shared<MockModelRegistry>();
    if (config_.noise < 0.0 || config_.noise > 1.0) throw Error(ErrorCode::InvalidValue, "noise must be in [0,1]");
}

Lexicon MockProvider::lexicon_for(const TaxonomySpec &tax) const {
    if (auto lex = registry_->get(ref_.model_name)) return *lex;
    return config_.lexicon.empty() ? default_lexicon(tax.task()) : config_.lexicon;
}

ClassificationResult MockProvider::classify(const std::string &prompt, const TaxonomySpec &tax) {
    const auto start = std::chrono::steady_clock::now();
    const Lexicon lex = lexicon_for(tax);
    const auto &labels = tax.labels();
    std::vector<double> weights(labels.size(), 0.05);
    weights[static_cast<std::size_t>(tax.index_of(tax.default_label()))] += 1.0;
    for (const auto &tok : tokenize(focus_text(prompt))) {
        const auto it = lex.find(tok);
        if (it == lex.end()) continue;
        const int idx = tax.index_of(it->second);
        if (idx >= 0) weights[static_cast<std::size_t>(idx)] += 2.0;
    }
    const auto best = static_cast<std::size_t>(std::max_element(weights.begin(), weights.end()) - weights.begin());
    std::size_t chosen = best;

    const std::uint64_t h = fnv1a64(prompt, fnv1a64(ref_.model_name, splitmix64(config_.seed)));
    if (labels.size() > 1 && unit_interval(splitmix64(h)) < config_.noise) {
        const std::uint64_t pick = splitmix64(h ^ 0x5bd1e995ULL) % (labels.size() - 1);
        chosen = (best + 1 + pick) % labels.size();
        std::swap(weights[best], weights[chosen]);
    }
    double total = 0;
    for (double w : weights) total += w;
    std::map<std::string, double> scores;
    for (std::size_t i = 0; i < labels.size(); ++i) scores[labels[i]] = weights[i] / total;

    ClassificationResult r;
    r.label = labels[chosen];
    r.scores = std::move(scores);
    r.raw_completion = completion_for(r.label);
    r.provider = ref_.summary();
    r.latency = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start);
    return r;
}

std::string MockProvider::submit_finetune(const std::string &corpus, const std::string &base_model) {
    const auto lines = parse_corpus(corpus);
    if (lines.empty()) throw Error(ErrorCode::EmptyCorpus, "refusing to fine-tune on an empty corpus");

    // Base lexicon, overridden by each token's majority label in the corpus.
    Lexicon lex;
    if (auto base = registry_->get(base_model)) {
        lex = *base;
    } else if (!config_.lexicon.empty()) {
        lex = config_.lexicon;
    } else {
        // The corpus labels tell us the task.
        for (const Task t : {Task::intent, Task::moderation, Task::contribution}) {
            const auto &tax = TaxonomySpec::for_task(t);
            if (std::all_of(lines.begin(), lines.end(), [&](const CorpusLine &l) { return tax.contains(l.label); })) {
                lex = default_lexicon(t);
                break;
            }
        }
    }
    std::map<std::string, std::map<std::string, std::size_t>> votes;
    for (const auto &line : lines) {
        for (const auto &tok : tokenize(line.text)) ++votes[tok][line.label];
    }
    for (const auto &[tok, by_label] : votes) {
        const auto best = std::max_element(by_label.begin(), by_label.end(),
                                           [](const auto &a, const auto &b) { return a.second < b.second; });
        lex[tok] = best->first;
    }
    const std::string id =
        fmt::format("{}:ft-mock-{:016x}", base_model, fnv1a64(corpus, fnv1a64(base_model, splitmix64(config_.seed))));
    registry_->put(id, std::move(lex));
    return id;
}

std::unique_ptr<Provider> MockProvider::with_model(const std::string &model_name) const {
    ProviderRef ref = ref_;
    ref.model_name = model_name;
    return std::make_unique<MockProvider>(std::move(ref), config_, registry_);
}

// ---------------------------------------------------------------------------
// Remote provider

std::chrono::milliseconds backoff_delay(const RetryPolicy &policy, int retry, std::mt19937_64 &rng) {
    const double base = static_cast<double>(policy.initial_delay.count()) * std::pow(policy.factor, retry - 1);
    const double u = unit_interval(rng());
    const double scaled = base * (1.0 + policy.jitter * (2.0 * u - 1.0));
    return std::chrono::milliseconds(static_cast<long long>(std::llround(scaled)));
}

struct RemoteProvider::Shared {
    std::shared_ptr<Transport> transport;
    Sleeper sleeper;
    RetryPolicy policy;
    std::counting_semaphore<1024> slots;
    std::mutex rng_mu;
    std::mt19937_64 rng;

    Shared(std::shared_ptr<Transport> t, Sleeper s, RetryPolicy p, int parallel, std::uint64_t seed)
        : transport(std::move(t)), sleeper(std::move(s)), policy(p), slots(std::clamp(parallel, 1, 1024)), rng(seed) {}
};

RemoteProvider::RemoteProvider(ProviderRef ref, std::shared_ptr<Transport> transport, Sleeper sleeper,
                               std::uint64_t jitter_seed)
    : ref_(std::move(ref)) {
    ref_.validate();
    if (!transport) throw Error(ErrorCode::InvalidValue, "remote provider needs a transport");
    if (!sleeper) sleeper = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
    RetryPolicy policy;
    policy.max_attempts = ref_.endpoint.max_attempts;
    shared_ = std::make_shared<Shared>(std::move(transport), std::move(sleeper), policy, ref_.endpoint.max_parallel,
                                       jitter_seed);
}

RemoteProvider::RemoteProvider(ProviderRef ref, std::shared_ptr<Shared> shared)
    : ref_(std::move(ref)), shared_(std::move(shared)) {}

std::unique_ptr<Provider> RemoteProvider::with_model(const std::string &model_name) const {
    ProviderRef ref = ref_;
    ref.model_name = model_name;
    auto p = std::unique_ptr<RemoteProvider>(new RemoteProvider(std::move(ref), shared_));
    p->poll_interval_ = poll_interval_;
    return p;
}

HttpResponse RemoteProvider::send(const std::function<HttpResponse()> &request) {
    const auto &policy = shared_->policy;
    HttpResponse last;
    for (int attempt = 1; attempt <= policy.max_attempts; ++attempt) {
        {
            shared_->slots.acquire();
            struct Release {
                std::counting_semaphore<1024> &s;
                ~Release() { s.release(); }
            } release{shared_->slots};
            last = request();
        }
        if (last.status >= 200 && last.status < 300) return last;
        const bool transient = last.status == 0 || last.status == 429 || last.status >= 500;
        if (!transient) {
            throw Error(ErrorCode::ProviderUnavailable,
                        fmt::format("{} rejected the request with HTTP {}: {}", ref_.summary(), last.status, last.body));
        }
        if (attempt < policy.max_attempts) {
            std::chrono::milliseconds delay;
            {
                std::lock_guard lock(shared_->rng_mu);
                delay = backoff_delay(policy, attempt, shared_->rng);
            }
            shared_->sleeper(delay);
        }
    }
    if (last.status == 429) {
        throw Error(ErrorCode::RateLimited,
                    fmt::format("{} still rate limited after {} attempts", ref_.summary(), policy.max_attempts));
    }
    throw Error(ErrorCode::ProviderUnavailable,
                fmt::format("{} unavailable after {} attempts (last status {}{}{})", ref_.summary(),
                            policy.max_attempts, last.status, last.error.empty() ? "" : ", ", last.error));
}

namespace {

nlohmann::json parse_body(const HttpResponse &r, std::string_view what) {
    auto j = nlohmann::json::parse(r.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw Error(ErrorCode::ProviderUnavailable, fmt::format("{} response is not a JSON object", what));
    }
    return j;
}

bool is_chat_model(std::string_view model) { return model.rfind("gpt-", 0) == 0; }

}  // namespace

ClassificationResult RemoteProvider::classify(const std::string &prompt, const TaxonomySpec &tax) {
    const auto start = std::chrono::steady_clock::now();
    const bool chat = is_chat_model(ref_.model_name);
    nlohmann::json body{{"model", ref_.model_name}, {"max_tokens", 8}, {"temperature", 0}};
    if (chat) {
        body["messages"] = nlohmann::json::array({{{"role", "user"}, {"content", prompt}}});
    } else {
        body["prompt"] = prompt;
        body["stop"] = nlohmann::json::array({"\n"});
    }
    const std::string path = chat ? "/v1/chat/completions" : "/v1/completions";
    const std::string payload = body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
    const auto resp = send([&] { return shared_->transport->post_json(path, payload); });
    const auto j = parse_body(resp, "completion");

    std::string raw;
    try {
        const auto &choice = j.at("choices").at(0);
        raw = chat ? choice.at("message").at("content").get<std::string>() : choice.at("text").get<std::string>();
    } catch (const nlohmann::json::exception &) {
        throw Error(ErrorCode::ProviderUnavailable, "completion response lacks choices[0]");
    }
    const auto label = parse_completion(raw, tax);
    if (!label) {
        throw Error(ErrorCode::UnparseableCompletion,
                    fmt::format("completion '{}' does not name a {} label", raw, to_string(tax.task())));
    }
    ClassificationResult r;
    r.label = *label;
    r.raw_completion = raw;
    r.provider = ref_.summary();
    r.latency = std::chrono::duration_cast<std::chrono::microseconds>(std::chrono::steady_clock::now() - start);
    return r;
}

std::string RemoteProvider::submit_finetune(const std::string &corpus, const std::string &base_model) {
    if (corpus.empty()) throw Error(ErrorCode::EmptyCorpus, "refusing to submit an empty fine-tune corpus");
    const auto upload =
        send([&] { return shared_->transport->upload_file("/v1/files", "fine-tune", "corpus.jsonl", corpus); });
    const auto file_id = parse_body(upload, "file upload").value("id", std::string{});
    if (file_id.empty()) throw Error(ErrorCode::ProviderUnavailable, "file upload returned no id");

    const std::string job_body = nlohmann::json{{"training_file", file_id}, {"model", base_model}}.dump();
    const auto created = send([&] { return shared_->transport->post_json("/v1/fine_tuning/jobs", job_body); });
    const auto job_id = parse_body(created, "fine-tune job").value("id", std::string{});
    if (job_id.empty()) throw Error(ErrorCode::ProviderUnavailable, "fine-tune job returned no id");

    constexpr int kMaxPolls = 2000;
    for (int poll = 0; poll < kMaxPolls; ++poll) {
        const auto status_resp = send([&] { return shared_->transport->get("/v1/fine_tuning/jobs/" + job_id); });
        const auto j = parse_body(status_resp, "fine-tune status");
        const auto status = j.value("status", std::string{});
        if (status == "succeeded") {
            const auto model = j.value("fine_tuned_model", std::string{});
            if (model.empty()) throw Error(ErrorCode::JobFailed, "job succeeded without a fine_tuned_model");
            return model;
        }
        if (status == "failed" || status == "cancelled") {
            std::string message = status;
            if (j.contains("error") && j["error"].is_object()) message = j["error"].value("message", status);
            throw Error(ErrorCode::JobFailed, fmt::format("fine-tune job {} {}: {}", job_id, status, message));
        }
        shared_->sleeper(poll_interval_);
    }
    throw Error(ErrorCode::ProviderUnavailable, fmt::format("fine-tune job {} did not finish", job_id));
}

std::unique_ptr<Provider> make_provider(ProviderRef ref, const MockConfig &mock,
                                        std::shared_ptr<MockModelRegistry> registry) {
    if (ref.kind == ProviderKind::mock) return std::make_unique<MockProvider>(std::move(ref), mock, std::move(registry));
    const char *key = std::getenv(ref.endpoint.credential_env.c_str());
    if (!key || !*key) {
        throw Error(ErrorCode::ProviderUnavailable,
                    fmt::format("remote provider needs a credential in ${}", ref.endpoint.credential_env));
    }
    auto transport = std::shared_ptr<Transport>(make_http_transport(ref.endpoint, key));
    return std::make_unique<RemoteProvider>(std::move(ref), std::move(transport));
}

// ---------------------------------------------------------------------------

PromptedClassifier::PromptedClassifier(std::shared_ptr<Provider> provider, PromptTemplate tpl)
    : provider_(std::move(provider)), tpl_(std::move(tpl)) {
    if (!provider_) throw Error(ErrorCode::ModelUnavailable, "no provider configured");
}

ClassificationResult PromptedClassifier::classify(std::span<const std::string> context, std::string_view text) {
    const auto &tax = taxonomy();
    return provider_->classify(render_prompt(tpl_, tax, context, text), tax);
}

}  // namespace modgate::gateway
