#pragma once

// ROVER fusion at the character level: systems are aligned one after another
// into a word transition network (WTN), then each slot is decided by vote.

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vsr/hypotheses.hpp"

namespace vsr {

struct WtnEntry {
    std::optional<std::string> token;  // nullopt is NULL
    std::size_t system = 0;
    double confidence = 1.0;
};

struct Wtn {
    std::vector<std::vector<WtnEntry>> slots;
    std::size_t systems = 0;
};

// Aligns hyp as system `wtn.systems` and appends it; returns the alignment
// cost. A token costs 0 against a slot holding it and 1 otherwise, a NULL
// costs 0 against a slot holding NULL and 1 otherwise, and a new slot costs
// 1. Ties prefer match > substitution > deletion > insertion.
std::size_t align_into_wtn(Wtn& wtn, std::span<const std::string> hyp, double confidence = 1.0);

struct RoverOptions {
    // score(t) = (1 - w) * frequency(t) / systems + w * mean confidence(t)
    double confidence_weight = 0.0;
    double null_confidence = 0.7;

    void validate() const;
};

// Winning token per slot, NULL winners dropped. Ties prefer a non-NULL token,
// then the token first contributed by the earliest system.
std::vector<std::string> rover_vote(const Wtn& wtn, const RoverOptions& options);

// Per-system confidence of a scored hypothesis: exp(combined / (length + 1)).
double hypothesis_confidence(const HypothesisLine& line);

// Systems in the given order, the first being the base. Requires >= 2
// systems (UsageError) with identical id sets (DataError listing the
// symmetric difference). Confidence voting requires n-best inputs.
std::map<std::string, std::string> rover_fuse(const std::vector<HypothesisSet>& systems, const RoverOptions& options);

}  // namespace vsr
