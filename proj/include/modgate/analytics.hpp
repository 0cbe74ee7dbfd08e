// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace modgate::analytics {

enum class Persona { crypto_enthusiast, fan, casual };

std::string_view to_string(Persona p);

/// Messages needed under one intent label to earn its persona.
inline constexpr std::uint64_t kPersonaThreshold = 3;

using IntentCounts = std::map<std::string, std::uint64_t>;

/// crypto_enthusiast iff counts[crypto] >= 3, fan iff counts[fan] >= 3,
/// casual iff neither. The result is never empty.
std::set<Persona> assign_personas(const IntentCounts &counts);

struct PersonaProfile {
    std::string author_id;
    IntentCounts counts;
    std::set<Persona> personas;
};

/// One classified (or unclassified) message attributed to an author.
struct LabeledMessage {
    std::string author_id;
    std::optional<std::string> label;  // nullopt = unclassified
};

/// One profile per active author, ordered by author id.
std::vector<PersonaProfile> build_profiles(const std::vector<LabeledMessage> &msgs);

struct CommunityStats {
    std::uint64_t total_messages = 0;
    std::map<std::string, std::uint64_t> label_counts;
    std::map<std::string, double> label_shares;
    std::uint64_t unclassified = 0;
    double unclassified_share = 0;
    std::uint64_t active_users = 0;
    std::map<Persona, std::uint64_t> persona_counts;
    std::map<Persona, double> persona_shares;
};

/// Throws EmptyInput when there are no messages.
CommunityStats community_stats(const std::vector<LabeledMessage> &msgs, const std::vector<PersonaProfile> &profiles);

nlohmann::json to_json(const CommunityStats &stats);
nlohmann::json to_json(const std::vector<PersonaProfile> &profiles);
/// Prose summary: conversation mix first, then the persona breakdown.
std::string render_summary(const CommunityStats &stats);

}  // namespace modgate::analytics
