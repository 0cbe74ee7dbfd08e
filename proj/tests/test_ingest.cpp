#include <doctest.h>

#include <random>
#include <sstream>

#include "modgate/error.hpp"
#include "modgate/ingest.hpp"

using namespace modgate;
using namespace modgate::ingest;

namespace {

ParseResult parse(const std::string &s, ExportFormat f) {
    std::istringstream in(s);
    return parse_export(in, f);
}

Message msg(std::string id, std::string ch, std::string author, TimestampMs ts, std::string text) {
    return {std::move(id), std::move(ch), std::move(author), ts, std::move(text), false};
}

const char *kThreeLines =
    R"({"id":"1","channel_id":"general","author_id":"u1","timestamp":"2023-03-01T10:00:00Z","content":"gm all"}
{"id":"2","channel_id":"general","author_id":"u2","timestamp":"2023-03-01T10:00:05.250Z","content":"who is the doctor","is_bot":false}
{"id":"3","channel_id":"nft","author_id":"bot7","timestamp":"2023-03-01T10:01:00+02:00","content":"new mint live","is_bot":true}
)";

std::vector<Message> random_messages(std::mt19937_64 &rng, std::size_t n) {
    const std::vector<std::string> words{"gm", "wen", "lambo", "tardis", "\"quoted\"", "comma,here", "multi\nline",
                                         "caf\xc3\xa9", "   ", ""};
    std::vector<Message> out;
    for (std::size_t i = 0; i < n; ++i) {
        std::string text;
        for (std::size_t w = rng() % 4; w > 0; --w) text += words[rng() % words.size()] + " ";
        out.push_back({"id" + std::to_string(i), "ch" + std::to_string(rng() % 3), "u" + std::to_string(rng() % 5),
                       static_cast<TimestampMs>(rng() % 2'000'000'000'000ULL), text, rng() % 7 == 0});
    }
    return out;
}

}  // namespace

TEST_CASE("empty input parses to nothing") {
    for (auto f : {ExportFormat::jsonl, ExportFormat::csv}) {
        const auto r = parse("", f);
        CHECK(r.messages.empty());
        CHECK(r.rejected.empty());
    }
}

TEST_CASE("three-line JSONL fixture matches hand-parsed values") {
    const auto r = parse(kThreeLines, ExportFormat::jsonl);
    REQUIRE(r.messages.size() == 3);
    CHECK(r.rejected.empty());
    CHECK(r.messages[0] == msg("1", "general", "u1", 1'677'664'800'000, "gm all"));
    CHECK(r.messages[1] == msg("2", "general", "u2", 1'677'664'805'250, "who is the doctor"));
    auto third = msg("3", "nft", "bot7", 1'677'664'860'000 - 2 * 3'600'000, "new mint live");
    third.is_bot = true;
    CHECK(r.messages[2] == third);
}

TEST_CASE("a truncated line is rejected with its line number and the rest survive") {
    std::string s = kThreeLines;
    const auto nl1 = s.find('\n');
    const auto nl2 = s.find('\n', nl1 + 1);
    s.erase(nl1 + 30, nl2 - (nl1 + 30));
    const auto r = parse(s, ExportFormat::jsonl);
    CHECK(r.messages.size() == 2);
    REQUIRE(r.rejected.size() == 1);
    CHECK(r.rejected[0].line == 2);
    CHECK(r.messages[0].id == "1");
    CHECK(r.messages[1].id == "3");
}

TEST_CASE("JSONL rejection reasons") {
    const auto r = parse(R"({"id":"1"}
[1,2]
{"id":"2","channel_id":"c","author_id":"a","timestamp":"not a time","content":"x"}
{"id":"3","channel_id":"c","author_id":"a","timestamp":"2023-01-01T00:00:00Z","content":7}
)",
                         ExportFormat::jsonl);
    CHECK(r.messages.empty());
    REQUIRE(r.rejected.size() == 4);
    CHECK(r.rejected[0].reason.find("channel_id") != std::string::npos);
    CHECK(r.rejected[2].reason.find("timestamp") != std::string::npos);
    CHECK(r.rejected[3].line == 4);
}

TEST_CASE("CSV with quoted multi-line fields and optional is_bot column") {
    const auto r = parse("id,channel_id,author_id,timestamp,content\r\n"
                         "1,general,u1,2023-03-01T10:00:00Z,\"hello, \"\"world\"\"\nsecond line\"\r\n"
                         "2,general,u2,2023-03-01T10:00:01Z,plain\r\n"
                         "3,general,u2,2023-03-01T10:00:02Z\r\n",
                         ExportFormat::csv);
    REQUIRE(r.messages.size() == 2);
    CHECK(r.messages[0].text == "hello, \"world\"\nsecond line");
    CHECK(r.messages[1].text == "plain");
    REQUIRE(r.rejected.size() == 1);
    CHECK(r.rejected[0].line == 5);
}

TEST_CASE("CSV without a complete header is an UnknownFormat error") {
    CHECK_THROWS_AS(parse("id,content\n1,hi\n", ExportFormat::csv), Error);
    CHECK_THROWS_AS(parse_format("xml"), Error);
    CHECK(format_for_path("a/b.csv") == ExportFormat::csv);
    CHECK_THROWS_AS(parse_export_file("/nonexistent/file.jsonl", ExportFormat::jsonl), Error);
}

TEST_CASE("serialize then parse round-trips exactly") {
    std::mt19937_64 rng(11);
    for (int round = 0; round < 50; ++round) {
        const auto msgs = random_messages(rng, 1 + rng() % 20);
        CHECK(parse(serialize_jsonl(msgs), ExportFormat::jsonl).messages == msgs);
        const auto csv = parse(serialize_csv(msgs), ExportFormat::csv);
        CHECK(csv.rejected.empty());
        CHECK(csv.messages == msgs);
    }
}

TEST_CASE("filter drops blank and bot-authored messages, in order") {
    const std::vector<Message> five{msg("1", "c", "u1", 1, "hello"), msg("2", "c", "u2", 2, ""),
                                    msg("3", "c", "bot", 3, "beep"), msg("4", "c", "u3", 4, " \t\n"),
                                    msg("5", "c", "u1", 5, "bye")};
    const auto kept = filter_messages(five, {"bot"});
    REQUIRE(kept.size() == 2);
    CHECK(kept[0].id == "1");
    CHECK(kept[1].id == "5");

    const std::vector<Message> clean{five[0], five[4]};
    CHECK(filter_messages(clean, {}) == clean);
}

TEST_CASE("filter is idempotent and never grows the list") {
    std::mt19937_64 rng(5);
    for (int round = 0; round < 200; ++round) {
        const auto msgs = random_messages(rng, rng() % 30);
        std::set<std::string> bots;
        for (int b = 0; b < 5; ++b) {
            if (rng() % 3 == 0) bots.insert("u" + std::to_string(b));
        }
        const auto once = filter_messages(msgs, bots);
        CHECK(once.size() <= msgs.size());
        CHECK(filter_messages(once, bots) == once);
    }
}

TEST_CASE("bot list parsing skips comments and blanks") {
    std::istringstream in("# known bots\nmee6\n\n  carl-bot  # moderation\n#all commented\n");
    CHECK(parse_bot_list(in) == std::set<std::string>{"mee6", "carl-bot"});
}

TEST_CASE("build_context windows") {
    std::vector<Message> msgs{msg("a1", "a", "u", 1, "m1"), msg("a2", "a", "u", 2, "m2"), msg("a3", "a", "u", 3, "m3"),
                              msg("b1", "b", "u", 1, "n1")};
    for (const auto &cm : build_context(msgs, 0)) CHECK(cm.context.empty());
    const auto out = build_context(msgs, 2);
    REQUIRE(out.size() == 4);
    CHECK(out[0].context.empty());
    CHECK(out[2].context == std::vector<std::string>{"m1", "m2"});
    CHECK(out[3].context.empty());
    CHECK(build_context(msgs, 1)[2].context == std::vector<std::string>{"m2"});

    std::swap(msgs[0], msgs[1]);
    CHECK_THROWS_AS(build_context(msgs, 2), Error);
}

TEST_CASE("context windows never exceed k and only hold earlier same-channel texts") {
    std::mt19937_64 rng(9);
    for (int round = 0; round < 100; ++round) {
        auto msgs = random_messages(rng, rng() % 40);
        for (std::size_t i = 0; i < msgs.size(); ++i) msgs[i].text = "t" + std::to_string(i);
        sort_messages(msgs);
        const std::size_t k = rng() % 6;
        const auto out = build_context(msgs, k);
        REQUIRE(out.size() == msgs.size());
        for (std::size_t i = 0; i < out.size(); ++i) {
            CHECK(out[i].message == msgs[i]);
            CHECK(out[i].context.size() <= k);
            // Oracle: the last k earlier messages of the same channel.
            std::vector<std::string> expect;
            for (std::size_t j = 0; j < i; ++j) {
                if (msgs[j].channel_id == msgs[i].channel_id) expect.push_back(msgs[j].text);
            }
            if (expect.size() > k) expect.erase(expect.begin(), expect.end() - static_cast<long>(k));
            CHECK(out[i].context == expect);
        }
    }
}
