#include <doctest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <thread>

#include "modgate/error.hpp"
#include "modgate/io.hpp"
#include "modgate/service.hpp"

using namespace modgate;
using namespace modgate::service;
namespace fs = std::filesystem;

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

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string &name) : path(fs::temp_directory_path() / ("modgate_test_" + name)) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    fs::path operator/(const std::string &f) const { return path / f; }
};

std::shared_ptr<gateway::TextClassifier> mock_model() {
    auto provider = std::shared_ptr<gateway::Provider>(
        std::make_unique<gateway::MockProvider>(gateway::ProviderRef{}, gateway::MockConfig{}));
    return std::make_shared<gateway::PromptedClassifier>(provider, gateway::default_template(Task::moderation));
}

// Safe score is looked up by text; unknown texts get 0.95.
class TableModel final : public gateway::TextClassifier {
public:
    std::map<std::string, double> safe;
    const TaxonomySpec &taxonomy() const override { return TaxonomySpec::moderation(); }
    gateway::ClassificationResult classify(std::span<const std::string>, std::string_view text) override {
        const auto it = safe.find(std::string(text));
        const double s = it == safe.end() ? 0.95 : it->second;
        gateway::ClassificationResult r;
        r.label = s >= 0.5 ? "not_toxic_not_spam" : "toxic";
        r.scores = std::map<std::string, double>{{"not_toxic_not_spam", s}, {"toxic", 1 - s}, {"spam", 0.0}};
        r.provider = "table";
        return r;
    }
};

class BrokenModel final : public gateway::TextClassifier {
public:
    const TaxonomySpec &taxonomy() const override { return TaxonomySpec::moderation(); }
    gateway::ClassificationResult classify(std::span<const std::string>, std::string_view) override {
        throw Error(ErrorCode::ProviderUnavailable, "upstream down");
    }
};

Message msg(std::string id, std::string text, std::string channel = "general") {
    return {std::move(id), std::move(channel), "author-" + id, 1'700'000'000'000, std::move(text), false};
}

Clock ticking(TimestampMs start = 1'700'000'000'000) {
    auto t = std::make_shared<TimestampMs>(start);
    return [t] { return *t += 1000; };
}

}  // namespace

TEST_CASE("slurs are flagged, benign chat passes") {
    TempDir dir("svc_basic");
    ModerationService svc(mock_model(), {}, dir / "events.jsonl", ticking());
    const auto bad = svc.score_message(msg("m1", "you absolute moron"));
    CHECK(bad.flagged);
    REQUIRE(bad.flag);
    CHECK(bad.flag->predicted_label == "toxic");
    CHECK(bad.flag->status == FlagStatus::pending);
    CHECK(bad.flag->reason == "predicted toxic");

    const auto ok = svc.score_message(msg("m2", "gm everyone, great stream"));
    CHECK_FALSE(ok.flagged);
    CHECK_FALSE(ok.flag);
    REQUIRE(ok.prediction);
    CHECK(ok.prediction->label == "not_toxic_not_spam");

    const auto again = svc.score_message(msg("m1", "you absolute moron"));
    CHECK(again.flag->id == bad.flag->id);
    CHECK(svc.list_flags(std::nullopt).total == 1);
    const auto c = svc.counters();
    CHECK(c.scored == 2);
    CHECK(c.flagged == 1);
    CHECK(c.passed == 1);
}

TEST_CASE("a low safe score below tau flags a non-toxic prediction") {
    TempDir dir("svc_tau");
    auto model = std::make_shared<TableModel>();
    model->safe = {{"borderline", 0.6}, {"fine", 0.8}};
    ModerationService svc(model, {}, dir / "events.jsonl", ticking());
    const auto o = svc.score_message(msg("a", "borderline"));
    CHECK(o.flagged);
    CHECK(o.flag->reason == "not_toxic_not_spam score 0.6000 below tau 0.7000");
    CHECK_FALSE(svc.score_message(msg("b", "fine")).flagged);
    CHECK(code_of([] { GatePolicy{1.5}.validate(); }) == ErrorCode::InvalidValue);
    CHECK(code_of([] { GatePolicy{0.5, {"crypto"}}.validate(); }) == ErrorCode::UnknownLabel);
}

TEST_CASE("same-channel history becomes the flag's context") {
    TempDir dir("svc_ctx");
    ModerationService svc(mock_model(), {}, dir / "events.jsonl", ticking(), 2);
    svc.score_message(msg("1", "hello all"));
    svc.score_message(msg("2", "other room", "random"));
    svc.score_message(msg("3", "nice play"));
    svc.score_message(msg("4", "lovely weather"));
    const auto o = svc.score_message(msg("5", "you absolute moron"));
    CHECK(o.flag->context == std::vector<std::string>{"nice play", "lovely weather"});
}

TEST_CASE("listing is ordered, filtered and paginated") {
    TempDir dir("svc_list");
    auto model = std::make_shared<TableModel>();
    for (int i = 0; i < 7; ++i) model->safe["t" + std::to_string(i)] = 0.1;
    ModerationService svc(model, {}, dir / "events.jsonl", ticking());
    // ids are scored out of lexical order to show ordering follows time
    for (int i : {3, 0, 6, 1, 5, 2, 4}) svc.score_message(msg("m" + std::to_string(i), "t" + std::to_string(i)));

    const auto all = svc.list_flags(std::nullopt, 1, 50);
    REQUIRE(all.items.size() == 7);
    for (std::size_t i = 1; i < all.items.size(); ++i) CHECK(all.items[i - 1].created_at < all.items[i].created_at);
    CHECK(all.items.front().message.id == "m3");

    const auto p2 = svc.list_flags(FlagStatus::pending, 2, 3);
    CHECK(p2.total == 7);
    REQUIRE(p2.items.size() == 3);
    CHECK(p2.items[0].id == all.items[3].id);
    CHECK(svc.list_flags(FlagStatus::pending, 3, 3).items.size() == 1);
    CHECK(svc.list_flags(FlagStatus::pending, 9, 3).items.empty());

    svc.resolve_flag(all.items[1].id, "toxic", "mod-a");
    CHECK(svc.list_flags(FlagStatus::pending).total == 6);
    CHECK(svc.list_flags(FlagStatus::resolved).items.at(0).id == all.items[1].id);
    CHECK(code_of([&] { svc.list_flags(std::nullopt, 0, 10); }) == ErrorCode::BadRequest);
}

TEST_CASE("resolving flags") {
    TempDir dir("svc_resolve");
    ModerationService svc(mock_model(), {}, dir / "events.jsonl", ticking());
    const auto f = *svc.score_message(msg("m1", "free giveaway click here")).flag;
    CHECK(f.predicted_label == "spam");
    CHECK(code_of([&] { svc.resolve_flag("flag-nope", "spam", "mod"); }) == ErrorCode::UnknownFlag);
    CHECK(code_of([&] { svc.resolve_flag(f.id, "crypto", "mod"); }) == ErrorCode::UnknownLabel);
    CHECK(code_of([&] { svc.resolve_flag(f.id, "spam", ""); }) == ErrorCode::MissingAnnotator);

    const auto r = svc.resolve_flag(f.id, "Not_Toxic_Not_Spam", "mod-1");
    CHECK(r.status == FlagStatus::resolved);
    CHECK(r.verdict == "not_toxic_not_spam");
    CHECK(r.moderator_id == "mod-1");
    CHECK(r.resolved_at);
    CHECK(code_of([&] { svc.resolve_flag(f.id, "spam", "mod-2"); }) == ErrorCode::AlreadyResolved);

    const auto log = svc.retraining_log();
    REQUIRE(log.size() == 1);
    CHECK(log[0].label == "not_toxic_not_spam");
    CHECK(log[0].source == LabelSource::human);
}

TEST_CASE("export uses the verdict, not the prediction") {
    TempDir dir("svc_export");
    ModerationService svc(mock_model(), {}, dir / "events.jsonl", ticking());
    const auto a = *svc.score_message(msg("m1", "you absolute moron")).flag;
    const auto b = *svc.score_message(msg("m2", "free giveaway click here")).flag;
    CHECK(svc.export_retraining_corpus(0).count == 0);
    svc.resolve_flag(a.id, "spam", "mod");
    const auto first = svc.export_retraining_corpus(0);
    CHECK(first.count == 1);
    CHECK(first.bytes == R"({"prompt":"you absolute moron\n\n###\n\n","completion":" spam\n"})"
                         "\n");
    const auto cut = *svc.find(a.id)->resolved_at;
    svc.resolve_flag(b.id, "not_toxic_not_spam", "mod");
    CHECK(svc.export_retraining_corpus(0).count == 2);
    const auto later = svc.export_retraining_corpus(cut);
    CHECK(later.count == 1);
    CHECK(later.bytes.find(R"(" not_toxic_not_spam\n")") != std::string::npos);
}

TEST_CASE("restart replays the log into identical state") {
    TempDir dir("svc_replay");
    const auto log = dir / "events.jsonl";
    std::vector<FlagRecord> before;
    std::vector<LabeledExample> retraining;
    {
        ModerationService svc(mock_model(), {}, log, ticking());
        for (int i = 0; i < 5; ++i) svc.score_message(msg("x" + std::to_string(i), "you absolute moron " + std::to_string(i)));
        svc.score_message(msg("ok", "gm everyone"));
        const auto page = svc.list_flags(std::nullopt);
        svc.resolve_flag(page.items[2].id, "toxic", "m1");
        svc.resolve_flag(page.items[0].id, "spam", "m2");
        before = svc.list_flags(std::nullopt).items;
        retraining = svc.retraining_log();
    }
    ModerationService again(mock_model(), {}, log, ticking(1'800'000'000'000));
    CHECK(again.list_flags(std::nullopt).items == before);
    CHECK(again.retraining_log() == retraining);
    // sequence numbering continues after replay
    const auto next = again.score_message(msg("x9", "you absolute moron 9"));
    CHECK(next.flag->id == "flag-00000006");
}

TEST_CASE("a torn final line is truncated; damage elsewhere is CorruptLog") {
    TempDir dir("svc_torn");
    const auto log = dir / "events.jsonl";
    {
        ModerationService svc(mock_model(), {}, log, ticking());
        svc.score_message(msg("a", "you absolute moron"));
        svc.score_message(msg("b", "free giveaway click here"));
    }
    const auto intact = read_file(log);
    {
        std::ofstream out(log, std::ios::app | std::ios::binary);
        out << R"({"event":"flag_resolved","flag_id":"fl)";
    }
    {
        ModerationService svc(mock_model(), {}, log, ticking());
        CHECK(svc.list_flags(std::nullopt).total == 2);
        CHECK(svc.list_flags(FlagStatus::pending).total == 2);
    }
    CHECK(read_file(log) == intact);

    {
        std::ofstream out(log, std::ios::trunc | std::ios::binary);
        out << "not json\n" << intact;
    }
    CHECK(code_of([&] { ModerationService(mock_model(), {}, log, ticking()); }) == ErrorCode::CorruptLog);
    {
        std::ofstream out(log, std::ios::trunc | std::ios::binary);
        out << R"({"event":"mystery"})" << "\n";
    }
    CHECK(code_of([&] { ModerationService(mock_model(), {}, log, ticking()); }) == ErrorCode::CorruptLog);
}

TEST_CASE("without a working model every message is flagged") {
    TempDir dir("svc_failclosed");
    ModerationService missing(nullptr, {}, dir / "a.jsonl", ticking());
    ModerationService broken(std::make_shared<BrokenModel>(), {}, dir / "b.jsonl", ticking());
    for (int i = 0; i < 50; ++i) {
        const auto m = msg("m" + std::to_string(i), "gm everyone " + std::to_string(i));
        for (auto *svc : {&missing, &broken}) {
            const auto o = svc->score_message(m);
            CHECK(o.flagged);
            REQUIRE(o.flag);
            CHECK(o.flag->reason.starts_with("model unavailable"));
            CHECK_FALSE(o.flag->predicted_label);
        }
    }
    CHECK(missing.counters().fail_closed == 50);
    CHECK(broken.counters().fail_closed == 50);
    CHECK(broken.list_flags(std::nullopt).items.front().reason == "model unavailable: upstream down");
}

TEST_CASE("concurrent scoring never duplicates a flag") {
    TempDir dir("svc_concurrent");
    ModerationService svc(mock_model(), {}, dir / "events.jsonl");
    std::vector<std::thread> threads;
    for (int t = 0; t < 8; ++t) {
        threads.emplace_back([&svc, t] {
            for (int i = 0; i < 40; ++i) {
                // every thread races on the same ids
                const int id = (i + t) % 40;
                svc.score_message(msg("m" + std::to_string(id), "you absolute moron"));
            }
        });
    }
    for (auto &th : threads) th.join();
    const auto all = svc.list_flags(std::nullopt, 1, 1000);
    CHECK(all.total == 40);
    std::set<std::string> ids, messages;
    for (const auto &f : all.items) {
        ids.insert(f.id);
        messages.insert(f.message.id);
    }
    CHECK(ids.size() == 40);
    CHECK(messages.size() == 40);
    ModerationService replay(mock_model(), {}, dir / "events.jsonl");
    CHECK(replay.list_flags(std::nullopt, 1, 1000).total == 40);
}

TEST_CASE("calibration finds the smallest tau reaching full toxic recall") {
    auto model = std::make_shared<TableModel>();
    model->safe = {{"t1", 0.2}, {"t2", 0.72}, {"t3", 0.81}, {"b1", 0.9}, {"b2", 0.85}, {"b3", 0.6}};
    const auto ex = [](std::string text, std::string label) {
        return LabeledExample{text, {}, text, std::move(label), LabelSource::human, "gold", 0};
    };
    const std::vector<LabeledExample> validation{ex("t1", "toxic"),
                                                 ex("t2", "toxic"),
                                                 ex("t3", "toxic"),
                                                 ex("b1", "not_toxic_not_spam"),
                                                 ex("b2", "not_toxic_not_spam"),
                                                 ex("b3", "not_toxic_not_spam")};
    const auto r = calibrate_threshold(*model, validation, 1.0);
    CHECK(r.target_met);
    CHECK(r.toxic_recall == 1.0);
    CHECK(r.type_ii == 0);
    CHECK(r.tau > 0.81);
    CHECK(r.tau < 0.85);
    CHECK(r.type_i == 1);  // b3 at 0.6

    GatePolicy p;
    p.tau = r.tau;
    for (const auto &e : validation) {
        if (e.label == "toxic") CHECK(should_flag(model->classify({}, e.text), p));
    }
    const auto partial = calibrate_threshold(*model, validation, 0.6);
    CHECK(partial.toxic_recall == doctest::Approx(2.0 / 3));
    CHECK(partial.tau < r.tau);
    CHECK(code_of([&] { calibrate_threshold(*model, {ex("b1", "not_toxic_not_spam")}, 1.0); }) == ErrorCode::EmptyInput);
}

TEST_CASE("flag records round trip through JSON") {
    FlagRecord f;
    f.id = "flag-00000001";
    f.message = msg("m", "hi");
    f.context = {"a", "b"};
    f.predicted_label = "spam";
    f.scores = {{"spam", 0.5}};
    f.reason = "predicted spam";
    f.status = FlagStatus::resolved;
    f.verdict = "toxic";
    f.moderator_id = "mod";
    f.created_at = 1'700'000'000'123;
    f.resolved_at = 1'700'000'100'000;
    CHECK(nlohmann::json(f).get<FlagRecord>() == f);
}
