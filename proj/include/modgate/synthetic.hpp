// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "modgate/distill.hpp"
#include "modgate/domain.hpp"

namespace modgate::synthetic {

struct SyntheticMessage {
    Message message;
    std::string gold;  // intent label
};

/// Seeded community chat with known intent labels. Deterministic in
/// (n, seed).
std::vector<SyntheticMessage> intent_corpus(std::size_t n, std::uint64_t seed);

/// Corrections as a human reviewer who knows `gold` would make them: each
/// round fixes up to `per_round` teacher labels that are still wrong, in
/// message-id order.
distill::CorrectionSource oracle_corrector(std::map<std::string, std::string> gold, std::size_t per_round,
                                           std::string annotator = "reviewer-1");

}  // namespace modgate::synthetic
