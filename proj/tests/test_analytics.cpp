#include <doctest.h>

#include <random>

#include "modgate/analytics.hpp"
#include "modgate/error.hpp"

using namespace modgate;
using namespace modgate::analytics;

namespace {

using P = Persona;

std::vector<LabeledMessage> repeat(const std::string &author, const std::string &label, int n) {
    return std::vector<LabeledMessage>(static_cast<std::size_t>(n), LabeledMessage{author, label});
}

}  // namespace

TEST_CASE("persona examples") {
    CHECK(assign_personas({{"crypto", 3}, {"fan", 0}, {"casual", 10}}) == std::set<P>{P::crypto_enthusiast});
    CHECK(assign_personas({{"crypto", 2}, {"fan", 2}, {"casual", 0}}) == std::set<P>{P::casual});
    CHECK(assign_personas({{"crypto", 5}, {"fan", 3}, {"casual", 1}}) == std::set<P>{P::crypto_enthusiast, P::fan});
    CHECK(assign_personas({}) == std::set<P>{P::casual});
}

TEST_CASE("persona rules on randomized count vectors") {
    std::mt19937_64 rng(10'000);
    for (int i = 0; i < 10'000; ++i) {
        IntentCounts c{{"crypto", rng() % 7}, {"fan", rng() % 7}, {"casual", rng() % 50}};
        const auto ps = assign_personas(c);
        CHECK_FALSE(ps.empty());
        CHECK(ps.count(P::casual) == (ps.count(P::crypto_enthusiast) == 0 && ps.count(P::fan) == 0));
        // Casual counts never matter.
        auto other = c;
        other["casual"] = rng() % 1000;
        CHECK(assign_personas(other) == ps);
        // More crypto or fan messages never remove those personas.
        auto more = c;
        ++more[rng() % 2 ? "crypto" : "fan"];
        const auto ps2 = assign_personas(more);
        if (ps.count(P::crypto_enthusiast)) CHECK(ps2.count(P::crypto_enthusiast));
        if (ps.count(P::fan)) CHECK(ps2.count(P::fan));
    }
}

TEST_CASE("three-user fixture") {
    std::vector<LabeledMessage> msgs;
    for (const auto &part : {repeat("alice", "crypto", 3), repeat("alice", "casual", 10), repeat("bob", "crypto", 2),
                             repeat("bob", "fan", 2), repeat("carol", "crypto", 5), repeat("carol", "fan", 3),
                             repeat("carol", "casual", 1)}) {
        msgs.insert(msgs.end(), part.begin(), part.end());
    }
    msgs.push_back({"bob", std::nullopt});
    const auto profiles = build_profiles(msgs);
    REQUIRE(profiles.size() == 3);
    CHECK(profiles[0].author_id == "alice");
    CHECK(profiles[0].personas == std::set<P>{P::crypto_enthusiast});
    CHECK(profiles[1].personas == std::set<P>{P::casual});
    CHECK(profiles[2].personas == std::set<P>{P::crypto_enthusiast, P::fan});

    const auto s = community_stats(msgs, profiles);
    CHECK(s.total_messages == 27);
    CHECK(s.unclassified == 1);
    CHECK(s.active_users == 3);
    CHECK(s.persona_counts.at(P::crypto_enthusiast) == 2);
    CHECK(s.persona_counts.at(P::fan) == 1);
    CHECK(s.persona_counts.at(P::casual) == 1);
}

TEST_CASE("label shares") {
    const std::vector<LabeledMessage> four{{"u", "casual"}, {"u", "casual"}, {"v", "fan"}, {"w", "crypto"}};
    const auto s = community_stats(four, build_profiles(four));
    CHECK(s.label_shares.at("casual") == 0.5);
    CHECK(s.label_shares.at("fan") == 0.25);
    CHECK(s.label_shares.at("crypto") == 0.25);
    CHECK(s.unclassified_share == 0.0);

    const auto all_crypto = repeat("u", "crypto", 9);
    CHECK(community_stats(all_crypto, build_profiles(all_crypto)).label_shares.at("crypto") == 1.0);
    CHECK_THROWS_AS(community_stats({}, {}), Error);
}

TEST_CASE("population identities on generated communities") {
    std::mt19937_64 rng(31);
    const std::vector<std::optional<std::string>> labels{"crypto", "fan", "casual", std::nullopt};
    for (int round = 0; round < 200; ++round) {
        std::vector<LabeledMessage> msgs;
        const auto users = 1 + rng() % 40;
        for (std::size_t i = 0, n = 1 + rng() % 400; i < n; ++i) {
            msgs.push_back({"user" + std::to_string(rng() % users), labels[rng() % labels.size()]});
        }
        const auto profiles = build_profiles(msgs);
        const auto s = community_stats(msgs, profiles);
        std::uint64_t union_size = 0;
        for (const auto &p : profiles) {
            if (p.personas.count(P::crypto_enthusiast) || p.personas.count(P::fan)) ++union_size;
        }
        CHECK(s.persona_counts.at(P::casual) == s.active_users - union_size);
        double sum = s.unclassified_share;
        for (const auto &[l, share] : s.label_shares) sum += share;
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(sum - s.unclassified_share <= 1.0 + 1e-9);
    }
}

TEST_CASE("published persona counts imply an overlap of 181 users") {
    const int crypto = 343, fan = 243, casual = 716, active = 1121;
    const int crypto_or_fan = active - casual;
    CHECK(crypto_or_fan == 405);
    CHECK(crypto + fan - crypto_or_fan == 181);
    CHECK(crypto + fan + casual > active);
}

TEST_CASE("summary text and JSON") {
    const std::vector<LabeledMessage> msgs{{"u", "casual"}, {"u", "casual"}, {"v", "fan"}, {"w", std::nullopt}};
    const auto s = community_stats(msgs, build_profiles(msgs));
    const auto text = render_summary(s);
    CHECK(text.find("50% casual, 25% fan, 0% crypto, 25% unclassified") != std::string::npos);
    CHECK(text.find("3 casuals (100%)") != std::string::npos);
    CHECK(text.find("Conversation mix") < text.find("Personas"));
    const auto j = to_json(s);
    CHECK(j.at("unclassified").at("messages") == 1);
    CHECK(j.at("personas").at("casual").at("users") == 3);
}
