// SPDX-License-Identifier: Apache-2.0
#include "modgate/analytics.hpp"

#include <cmath>

#include <fmt/format.h>

#include "modgate/error.hpp"

namespace modgate::analytics {

std::string_view to_string(Persona p) {
    switch (p) {
        case Persona::crypto_enthusiast: return "crypto_enthusiast";
        case Persona::fan: return "fan";
        case Persona::casual: return "casual";
    }
    return "unknown";
}

namespace {

std::uint64_t count_of(const IntentCounts &counts, const std::string &label) {
    const auto it = counts.find(label);
    return it == counts.end() ? 0 : it->second;
}

}  // namespace

std::set<Persona> assign_personas(const IntentCounts &counts) {
    std::set<Persona> out;
    if (count_of(counts, "crypto") >= kPersonaThreshold) out.insert(Persona::crypto_enthusiast);
    if (count_of(counts, "fan") >= kPersonaThreshold) out.insert(Persona::fan);
    if (out.empty()) out.insert(Persona::casual);
    return out;
}

std::vector<PersonaProfile> build_profiles(const std::vector<LabeledMessage> &msgs) {
    std::map<std::string, IntentCounts> by_author;
    for (const auto &m : msgs) {
        auto &counts = by_author[m.author_id];
        if (m.label) ++counts[*m.label];
    }
    std::vector<PersonaProfile> out;
    out.reserve(by_author.size());
    for (auto &[author, counts] : by_author) {
        PersonaProfile p;
        p.author_id = author;
        p.personas = assign_personas(counts);
        p.counts = std::move(counts);
        out.push_back(std::move(p));
    }
    return out;
}

CommunityStats community_stats(const std::vector<LabeledMessage> &msgs, const std::vector<PersonaProfile> &profiles) {
    if (msgs.empty()) throw Error(ErrorCode::EmptyInput, "no messages to summarise");
    CommunityStats s;
    s.total_messages = msgs.size();
    for (const auto &m : msgs) {
        if (m.label) {
            ++s.label_counts[*m.label];
        } else {
            ++s.unclassified;
        }
    }
    const auto total = static_cast<double>(s.total_messages);
    for (const auto &[label, n] : s.label_counts) s.label_shares[label] = static_cast<double>(n) / total;
    s.unclassified_share = static_cast<double>(s.unclassified) / total;

    s.active_users = profiles.size();
    for (const auto p : {Persona::crypto_enthusiast, Persona::fan, Persona::casual}) s.persona_counts[p] = 0;
    for (const auto &profile : profiles) {
        for (const auto p : profile.personas) ++s.persona_counts[p];
    }
    for (const auto &[p, n] : s.persona_counts) {
        s.persona_shares[p] = s.active_users ? static_cast<double>(n) / static_cast<double>(s.active_users) : 0.0;
    }
    return s;
}

nlohmann::json to_json(const CommunityStats &stats) {
    nlohmann::json personas = nlohmann::json::object();
    for (const auto &[p, n] : stats.persona_counts) {
        personas[std::string(to_string(p))] = {{"users", n}, {"share", stats.persona_shares.at(p)}};
    }
    nlohmann::json labels = nlohmann::json::object();
    for (const auto &[label, n] : stats.label_counts) {
        labels[label] = {{"messages", n}, {"share", stats.label_shares.at(label)}};
    }
    return {{"total_messages", stats.total_messages},
            {"labels", labels},
            {"unclassified", {{"messages", stats.unclassified}, {"share", stats.unclassified_share}}},
            {"active_users", stats.active_users},
            {"personas", personas}};
}

nlohmann::json to_json(const std::vector<PersonaProfile> &profiles) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto &p : profiles) {
        nlohmann::json personas = nlohmann::json::array();
        for (const auto persona : p.personas) personas.push_back(to_string(persona));
        out.push_back({{"author_id", p.author_id}, {"counts", p.counts}, {"personas", personas}});
    }
    return out;
}

std::string render_summary(const CommunityStats &stats) {
    const auto pct = [](double share) { return static_cast<long long>(std::llround(share * 100.0)); };
    const auto share = [&](const std::string &label) {
        const auto it = stats.label_shares.find(label);
        return it == stats.label_shares.end() ? 0.0 : it->second;
    };
    std::string out = fmt::format("{} messages from {} active users.\n", stats.total_messages, stats.active_users);
    out += fmt::format("Conversation mix: {}% casual, {}% fan, {}% crypto, {}% unclassified.\n", pct(share("casual")),
                       pct(share("fan")), pct(share("crypto")), pct(stats.unclassified_share));
    const auto users = [&](Persona p) { return stats.persona_counts.at(p); };
    const auto pshare = [&](Persona p) { return pct(stats.persona_shares.at(p)); };
    out += fmt::format("Personas: {} crypto enthusiasts ({}%), {} fans ({}%), {} casuals ({}%).\n",
                       users(Persona::crypto_enthusiast), pshare(Persona::crypto_enthusiast), users(Persona::fan),
                       pshare(Persona::fan), users(Persona::casual), pshare(Persona::casual));
    return out;
}

}  // namespace modgate::analytics
