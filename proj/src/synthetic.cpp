// SPDX-License-Identifier: Apache-2.0
#include "modgate/synthetic.hpp"

#include <algorithm>
#include <array>
#include <random>
#include <set>

#include <fmt/format.h>

namespace modgate::synthetic {

namespace {

// The first `kMarked` entries of each topical list are in the mock teacher's
// lexicon; the rest are only learnable from labels.
constexpr std::size_t kMarked = 8;

const std::array<std::vector<std::string>, 3> kTopical = {{
    {"token", "wallet", "nft", "mint", "airdrop", "staking", "gas", "blockchain", "ledger", "validator", "liquidity",
     "yield", "presale", "whitelist"},
    {"doctor", "tardis", "dalek", "episode", "companion", "regeneration", "season", "gallifrey", "finale",
     "cliffhanger", "showrunner", "rewatch", "spinoff", "cosplay"},
    {"hello", "morning", "coffee", "weekend", "lol", "thanks", "lunch", "weather", "pizza", "traffic", "holiday",
     "tired", "music", "movie"},
}};
const std::array<std::string, 3> kLabels = {"crypto", "fan", "casual"};
const std::vector<std::string> kFiller = {"the", "is", "so", "really", "just", "think", "today", "we",
                                          "this", "that", "what", "about", "anyone", "new", "big", "right"};

std::size_t draw(std::mt19937_64 &rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }

}  // namespace

std::vector<SyntheticMessage> intent_corpus(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<SyntheticMessage> out;
    out.reserve(n);
    TimestampMs ts = 1'672'531'200'000;  // 2023-01-01T00:00:00Z
    for (std::size_t i = 0; i < n; ++i) {
        const auto r = draw(rng, 100);
        const std::size_t cls = r < 25 ? 0 : (r < 55 ? 1 : 2);
        const auto &topical = kTopical[cls];
        std::vector<std::string> words;
        words.push_back(topical[draw(rng, kMarked)]);
        words.push_back(topical[draw(rng, topical.size())]);
        if (draw(rng, 2) == 0) words.push_back(topical[kMarked + draw(rng, topical.size() - kMarked)]);
        const auto fillers = 2 + draw(rng, 3);
        for (std::size_t f = 0; f < fillers; ++f) words.push_back(kFiller[draw(rng, kFiller.size())]);
        for (std::size_t k = words.size(); k > 1; --k) std::swap(words[k - 1], words[draw(rng, k)]);

        std::string text;
        for (const auto &w : words) text += (text.empty() ? "" : " ") + w;
        ts += 1000 * static_cast<TimestampMs>(5 + draw(rng, 120));

        SyntheticMessage sm;
        sm.message.id = fmt::format("m{:05d}", i + 1);
        sm.message.channel_id = fmt::format("channel-{}", 1 + draw(rng, 4));
        sm.message.author_id = fmt::format("user-{:03d}", 1 + draw(rng, 60));
        sm.message.timestamp = ts;
        sm.message.text = std::move(text);
        sm.gold = kLabels[cls];
        out.push_back(std::move(sm));
    }
    return out;
}

distill::CorrectionSource oracle_corrector(std::map<std::string, std::string> gold, std::size_t per_round,
                                           std::string annotator) {
    return [gold = std::move(gold), per_round, annotator = std::move(annotator)](const distill::LoopState &state) {
        std::set<std::string> already;
        for (const auto &h : state.human_labels) already.insert(h.message_id);
        std::vector<LabeledExample> fixes;
        for (const auto &ex : state.teacher_labels) {
            if (fixes.size() >= per_round) break;
            const auto it = gold.find(ex.message_id);
            if (it == gold.end() || it->second == ex.label || already.count(ex.message_id)) continue;
            LabeledExample fix = ex;
            fix.label = it->second;
            fix.source = LabelSource::human;
            fix.annotator_id = annotator;
            fix.iteration = state.iteration;
            fixes.push_back(std::move(fix));
        }
        return fixes;
    };
}

}  // namespace modgate::synthetic
