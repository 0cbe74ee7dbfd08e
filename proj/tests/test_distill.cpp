#include <doctest.h>

#include <filesystem>

#include "modgate/distill.hpp"
#include "modgate/error.hpp"
#include "modgate/synthetic.hpp"

using namespace modgate;
using namespace modgate::distill;

namespace {

ErrorCode code_of(const std::function<void()> &f) {
    try {
        f();
    } catch (const Error &e) {
        return e.code();
    }
    FAIL("expected modgate::Error");
    return ErrorCode::BadRequest;
}

eval::EvalReport report_with_macro_f1(double f1) {
    eval::EvalReport r;
    r.aggregates.macro.f1 = f1;
    return r;
}

std::vector<eval::EvalReport> history(std::initializer_list<double> f1s) {
    std::vector<eval::EvalReport> out;
    for (double f : f1s) out.push_back(report_with_macro_f1(f));
    return out;
}

LabeledExample teacher(std::string id, std::string text, std::string label) {
    return {std::move(id), {}, std::move(text), std::move(label), LabelSource::teacher_zero_shot, std::nullopt, 0};
}

LabeledExample human(std::string id, std::string label, std::string annotator, std::uint32_t iteration = 0) {
    return {std::move(id), {}, "", std::move(label), LabelSource::human, std::move(annotator), iteration};
}

std::vector<ingest::ContextualMessage> contextual(const std::vector<synthetic::SyntheticMessage> &corpus) {
    std::vector<ingest::ContextualMessage> out;
    for (const auto &s : corpus) out.push_back({{}, s.message});
    return out;
}

std::shared_ptr<gateway::MockProvider> mock_teacher(double noise, std::uint64_t seed = 5) {
    return std::make_shared<gateway::MockProvider>(gateway::ProviderRef{}, gateway::MockConfig{seed, noise, {}});
}

// Returns an unparseable completion whenever the focus text mentions "garble".
class GarblingProvider final : public gateway::Provider {
public:
    const gateway::ProviderRef &ref() const override { return ref_; }
    gateway::ClassificationResult classify(const std::string &prompt, const TaxonomySpec &tax) override {
        if (gateway::focus_text(prompt).find("garble") != std::string::npos) {
            throw Error(ErrorCode::UnparseableCompletion, "completion ' ?!' does not name a label");
        }
        return inner_.classify(prompt, tax);
    }
    std::string submit_finetune(const std::string &c, const std::string &b) override {
        return inner_.submit_finetune(c, b);
    }
    std::unique_ptr<gateway::Provider> with_model(const std::string &m) const override { return inner_.with_model(m); }

private:
    gateway::ProviderRef ref_;
    gateway::MockProvider inner_{gateway::ProviderRef{}, gateway::MockConfig{}};
};

struct Fixture {
    std::vector<synthetic::SyntheticMessage> corpus = synthetic::intent_corpus(300, 17);
    std::map<std::string, std::string> gold;
    LoopState state;

    explicit Fixture(double noise = 0.3) {
        for (const auto &s : corpus) gold[s.message.id] = s.gold;
        std::vector<synthetic::SyntheticMessage> pool(corpus.begin(), corpus.begin() + 240);
        auto t = mock_teacher(noise);
        const auto boot = bootstrap(contextual(pool), *t, gateway::default_template(Task::intent), pool.size(), 9);
        state.task = Task::intent;
        state.teacher_labels = boot.examples;
        for (auto it = corpus.begin() + 240; it != corpus.end(); ++it) {
            state.holdout.push_back({it->message.id, {}, it->message.text, it->gold, LabelSource::human, "gold", 0});
        }
        state = apply_corrections(std::move(state), {});
    }
};

}  // namespace

TEST_CASE("stop rule") {
    const StopPolicy defaults;
    CHECK(defaults.epsilon == 0.01);
    CHECK(defaults.patience == 2);
    CHECK(defaults.max_iterations == 10);
    CHECK_FALSE(should_stop(history({0.5}), defaults).stop());
    StopPolicy p1{0.01, 1, 10};
    const auto d = should_stop(history({0.70, 0.84, 0.845}), p1);
    CHECK(d.kind == StopDecision::Kind::leveled);
    CHECK_FALSE(should_stop(history({0.70, 0.84, 0.845}), defaults).stop());
    CHECK(should_stop(history({0.70, 0.84, 0.845, 0.846}), defaults).kind == StopDecision::Kind::leveled);
    std::vector<eval::EvalReport> ten;
    for (int i = 0; i < 10; ++i) ten.push_back(report_with_macro_f1(0.1 * i));
    CHECK(should_stop(ten, defaults).kind == StopDecision::Kind::budget);
    CHECK_THROWS_AS(should_stop({}, StopPolicy{0.01, 0, 10}), Error);
}

TEST_CASE("bootstrap guards and determinism") {
    const auto corpus = synthetic::intent_corpus(20, 1);
    const auto msgs = contextual(corpus);
    auto t = mock_teacher(0.0);
    const auto tpl = gateway::default_template(Task::intent);
    CHECK(code_of([&] { bootstrap(msgs, *t, tpl, 0, 1); }) == ErrorCode::EmptySample);
    CHECK(code_of([&] { bootstrap(msgs, *t, tpl, 21, 1); }) == ErrorCode::InvalidValue);

    const auto a = bootstrap(msgs, *t, tpl, 10, 123);
    const auto b = bootstrap(msgs, *t, tpl, 10, 123);
    REQUIRE(a.examples.size() == 10);
    CHECK(a.examples == b.examples);
    std::set<std::string> ids;
    for (const auto &e : a.examples) {
        ids.insert(e.message_id);
        CHECK(e.source == LabelSource::teacher_zero_shot);
        CHECK_FALSE(e.annotator_id);
    }
    CHECK(ids.size() == 10);
    CHECK(std::is_sorted(a.examples.begin(), a.examples.end(),
                         [](const auto &x, const auto &y) { return x.message_id < y.message_id; }));
    const auto c = bootstrap(msgs, *t, tpl, 10, 124);
    CHECK_FALSE(c.examples == a.examples);
}

TEST_CASE("bootstrap noise: about 30 of 100 labels change") {
    const auto msgs = contextual(synthetic::intent_corpus(100, 2));
    const auto tpl = gateway::default_template(Task::intent);
    auto clean = mock_teacher(0.0, 77), noisy = mock_teacher(0.3, 77);
    const auto a = bootstrap(msgs, *clean, tpl, 100, 3);
    const auto b = bootstrap(msgs, *noisy, tpl, 100, 3);
    REQUIRE(a.examples.size() == 100);
    int differ = 0;
    for (std::size_t i = 0; i < 100; ++i) differ += a.examples[i].label != b.examples[i].label;
    CHECK(differ >= 15);
    CHECK(differ <= 45);
}

TEST_CASE("bootstrap excludes unparseable completions and records why") {
    auto msgs = contextual(synthetic::intent_corpus(10, 4));
    msgs[3].message.text = "garble garble";
    msgs[6].message.text = "   ";
    GarblingProvider p;
    const auto r = bootstrap(msgs, p, gateway::default_template(Task::intent), 10, 1);
    CHECK(r.examples.size() == 8);
    REQUIRE(r.excluded.size() == 2);
    std::set<std::string> excluded{r.excluded[0].message_id, r.excluded[1].message_id};
    CHECK(excluded == std::set<std::string>{msgs[3].message.id, msgs[6].message.id});
}

TEST_CASE("merge corrections") {
    const std::vector<LabeledExample> predicted{teacher("1", "a", "casual"), teacher("2", "b", "fan"),
                                                teacher("3", "c", "casual")};
    SUBCASE("no corrections is the identity") {
        const auto r = merge_corrections(predicted, {});
        CHECK(r.curated == predicted);
        CHECK(r.unresolved.empty());
    }
    SUBCASE("a single human overrides the teacher") {
        const auto r = merge_corrections(predicted, {human("1", "crypto", "ann")});
        CHECK(r.curated[0].label == "crypto");
        CHECK(r.curated[0].source == LabelSource::human);
        CHECK(r.curated[0].annotator_id == "ann");
        CHECK(r.curated[0].text == "a");
    }
    SUBCASE("a tie between humans leaves the message unresolved") {
        const auto r = merge_corrections(predicted, {human("2", "fan", "a"), human("2", "crypto", "b")});
        CHECK(r.curated.size() == 2);
        REQUIRE(r.unresolved.size() == 1);
        CHECK(r.unresolved[0].message_id == "2");
    }
    SUBCASE("majority wins and each annotator's latest label counts once") {
        const auto r = merge_corrections(predicted, {human("3", "fan", "a"), human("3", "crypto", "b"),
                                                     human("3", "crypto", "a", 1), human("3", "fan", "c")});
        REQUIRE(r.curated.size() == 3);
        CHECK(r.curated[2].label == "crypto");
        CHECK(r.curated[2].annotator_id == "a,b");
        CHECK(r.curated[2].iteration == 1);
    }
    SUBCASE("a correction for an unknown message is rejected") {
        CHECK(code_of([&] { merge_corrections(predicted, {human("99", "fan", "a")}); }) ==
              ErrorCode::DanglingReference);
    }
}

TEST_CASE("run_iteration bookkeeping and guards") {
    Fixture f;
    BaselineTrainer trainer;
    const auto next = run_iteration(f.state, trainer);
    CHECK(next.history.size() == f.state.history.size() + 1);
    CHECK(next.iteration == 1);
    CHECK(next.current_model.starts_with("baseline:nb-"));
    CHECK(next.history.back().aggregates.total == 60);

    auto overlapping = f.state;
    overlapping.holdout.push_back(f.state.curated.front());
    CHECK(code_of([&] { run_iteration(overlapping, trainer); }) == ErrorCode::HoldoutOverlap);
    auto empty = f.state;
    empty.curated.clear();
    CHECK(code_of([&] { run_iteration(empty, trainer); }) == ErrorCode::EmptyCorpus);
    auto no_holdout = f.state;
    no_holdout.holdout.clear();
    CHECK(code_of([&] { run_iteration(no_holdout, trainer); }) == ErrorCode::EmptyInput);
}

TEST_CASE("corrections that fix known-wrong labels never lower macro-F1") {
    Fixture f(0.45);
    BaselineTrainer trainer;
    const auto fix = synthetic::oracle_corrector(f.gold, 30);
    auto s = f.state;
    double last = -1;
    for (int i = 0; i < 3; ++i) {
        s = apply_corrections(std::move(s), fix(s));
        s = run_iteration(s, trainer);
        const double now = s.history.back().macro_f1();
        CHECK(now >= last);
        last = now;
    }
    CHECK(s.human_labels.size() == 90);
}

TEST_CASE("recommendation decision table") {
    const Thresholds t;
    CHECK(t.deploy_macro_f1 == 0.85);
    CHECK(t.alpha_reliability == 0.667);
    CHECK(recommend(0.91, "ada:ft-1", std::nullopt, std::nullopt, t).action == Action::deploy);
    CHECK(recommend(0.91, "ada:ft-1", std::string("curie"), 0.1, t).action == Action::deploy);
    CHECK(recommend(0.54, "ada:ft-1", std::nullopt, 0.254, t).action == Action::reframe_task);
    const auto esc = recommend(0.54, "ada:ft-1", std::string("curie"), 0.9, t);
    CHECK(esc.action == Action::escalate_base_model);
    CHECK(esc.model == "curie");
    CHECK(recommend(0.54, "m", std::nullopt, 0.9, t).action == Action::grow_corpus);
    CHECK(recommend(0.54, "m", std::nullopt, std::nullopt, t).action == Action::audit_inconclusive);
}

TEST_CASE("escalate_or_reframe audits human agreement once models are exhausted") {
    LoopState s;
    s.history = history({0.54});
    s.candidates = {"ada"};
    for (int u = 0; u < 6; ++u) {
        const auto id = std::to_string(u);
        s.human_labels.push_back(human(id, u % 2 ? "fan" : "crypto", "a"));
        s.human_labels.push_back(human(id, u % 3 ? "fan" : "casual", "b"));
    }
    const auto r = escalate_or_reframe(s);
    REQUIRE(r.alpha);
    CHECK(*r.alpha < 0.667);
    CHECK(r.action == Action::reframe_task);

    s.candidates = {"ada", "babbage"};
    CHECK(escalate_or_reframe(s).action == Action::escalate_base_model);
    CHECK_FALSE(escalate_or_reframe(s).alpha);
}

TEST_CASE("checkpoints round trip and resumed runs match uninterrupted ones") {
    const auto dir = std::filesystem::temp_directory_path() / "modgate_test_distill";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);

    Fixture f;
    BaselineTrainer trainer;
    const auto fix = synthetic::oracle_corrector(f.gold, 10);

    LoopOptions straight;
    straight.policy = {0.0, 1, 4};  // never levels, always runs the full budget
    straight.checkpoint = dir / "straight.json";
    const auto full = run_loop(f.state, trainer, fix, straight);
    CHECK(full.stop.kind == StopDecision::Kind::budget);
    CHECK(full.state.iteration == 4);

    LoopOptions first = straight;
    first.policy.max_iterations = 2;
    first.checkpoint = dir / "resumed.json";
    run_loop(f.state, trainer, fix, first);
    auto resumed = load_checkpoint(dir / "resumed.json");
    CHECK(resumed.iteration == 2);
    LoopOptions second = straight;
    second.checkpoint = dir / "resumed.json";
    const auto rest = run_loop(std::move(resumed), trainer, fix, second);
    CHECK(nlohmann::json(to_json(rest.state)) == to_json(full.state));

    const auto bytes_a = to_json(load_checkpoint(dir / "straight.json")).dump();
    const auto bytes_b = to_json(load_checkpoint(dir / "resumed.json")).dump();
    CHECK(bytes_a == bytes_b);
    std::filesystem::remove_all(dir);
}

TEST_CASE("the loop always terminates within the budget and is deterministic") {
    for (const int budget : {1, 3, 10}) {
        Fixture f(0.5);
        BaselineTrainer trainer;
        LoopOptions opts;
        opts.policy.max_iterations = budget;
        int calls = 0;
        opts.on_iteration = [&](const LoopState &) { ++calls; };
        const auto a = run_loop(f.state, trainer, synthetic::oracle_corrector(f.gold, 5), opts);
        const auto b = run_loop(f.state, trainer, synthetic::oracle_corrector(f.gold, 5), opts);
        CHECK(a.state.iteration <= static_cast<std::uint32_t>(budget));
        CHECK(calls == static_cast<int>(a.state.iteration) * 2);
        CHECK(to_json(a.state) == to_json(b.state));
    }
}

TEST_CASE("gateway student fine-tunes through the provider") {
    Fixture f;
    auto provider = mock_teacher(0.0);
    GatewayTrainer trainer(provider);
    auto s = f.state;
    s.candidates = {"ada", "curie"};
    const auto next = run_iteration(s, trainer);
    CHECK(next.current_model.starts_with("ada:ft-mock-"));
    CHECK(next.history.back().macro_f1() > 0.5);
    CHECK(escalate_or_reframe(next).action ==
          (next.history.back().macro_f1() >= 0.85 ? Action::deploy : Action::escalate_base_model));
}
