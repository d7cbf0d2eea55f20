#pragma once

// Hypothesis files: "utterance_id<TAB>text" (one-best) and
// "utterance_id<TAB>rank<TAB>combined<TAB>att<TAB>ctc<TAB>lm<TAB>text" (n-best).

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vsr/decoding.hpp"

namespace vsr {

struct HypothesisLine {
    std::string text;
    std::optional<double> combined;  // present when read from an n-best file
};

using HypothesisSet = std::map<std::string, HypothesisLine>;

// Reads either format; for n-best files only rank-1 lines are kept.
// Duplicate ids or malformed lines raise DataError.
HypothesisSet read_hypotheses(const std::filesystem::path& path);
std::string format_hypotheses(const std::map<std::string, std::string>& texts);

struct NBestEntry {
    std::string id;
    NBestList hyps;
    std::vector<std::string> texts;  // per hypothesis
};

std::string format_nbest(const std::vector<NBestEntry>& entries);

}  // namespace vsr
