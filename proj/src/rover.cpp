#include "vsr/rover.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "vsr/error.hpp"
#include "vsr/metrics.hpp"

namespace vsr {

namespace {

bool slot_has(const std::vector<WtnEntry>& slot, const std::optional<std::string>& token) {
    return std::any_of(slot.begin(), slot.end(), [&](const WtnEntry& e) { return e.token == token; });
}

}  // namespace

std::size_t align_into_wtn(Wtn& wtn, std::span<const std::string> hyp, double confidence) {
    const std::size_t system = wtn.systems++;
    if (system == 0) {
        for (const std::string& t : hyp) wtn.slots.push_back({WtnEntry{t, 0, confidence}});
        return 0;
    }
    const std::size_t n = wtn.slots.size(), m = hyp.size();
    std::vector<std::size_t> d((n + 1) * (m + 1));
    auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
    std::vector<std::size_t> sub(n * std::max<std::size_t>(m, 1)), del(n);
    for (std::size_t i = 0; i < n; ++i) {
        del[i] = slot_has(wtn.slots[i], std::nullopt) ? 0 : 1;
        for (std::size_t j = 0; j < m; ++j) sub[i * m + j] = slot_has(wtn.slots[i], hyp[j]) ? 0 : 1;
    }
    at(0, 0) = 0;
    for (std::size_t i = 1; i <= n; ++i) at(i, 0) = at(i - 1, 0) + del[i - 1];
    for (std::size_t j = 1; j <= m; ++j) at(0, j) = j;
    for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t j = 1; j <= m; ++j)
            at(i, j) = std::min({at(i - 1, j - 1) + sub[(i - 1) * m + j - 1], at(i - 1, j) + del[i - 1], at(i, j - 1) + 1});

    // Backtrace into (slot index or none, hyp token or NULL) pairs, built in reverse.
    struct Step {
        std::optional<std::size_t> slot;
        std::optional<std::string> token;
    };
    std::vector<Step> path;
    std::size_t i = n, j = m;
    while (i > 0 || j > 0) {
        if (i > 0 && j > 0 && at(i, j) == at(i - 1, j - 1) + sub[(i - 1) * m + j - 1]) {
            path.push_back({i - 1, hyp[j - 1]});
            --i;
            --j;
        } else if (i > 0 && at(i, j) == at(i - 1, j) + del[i - 1]) {
            path.push_back({i - 1, std::nullopt});
            --i;
        } else {
            path.push_back({std::nullopt, hyp[j - 1]});
            --j;
        }
    }
    const std::size_t cost = at(n, m);
    std::reverse(path.begin(), path.end());

    std::vector<std::vector<WtnEntry>> slots;
    slots.reserve(path.size());
    for (Step& s : path) {
        if (s.slot) {
            slots.push_back(std::move(wtn.slots[*s.slot]));
        } else {
            slots.emplace_back();
            for (std::size_t k = 0; k < system; ++k) slots.back().push_back(WtnEntry{std::nullopt, k, 1.0});
        }
        slots.back().push_back(WtnEntry{std::move(s.token), system, confidence});
    }
    wtn.slots = std::move(slots);
    return cost;
}

void RoverOptions::validate() const {
    if (!(confidence_weight >= 0.0 && confidence_weight <= 1.0))
        throw ConfigError("rover: confidence weight must be in [0,1]");
    if (!(null_confidence >= 0.0 && null_confidence <= 1.0)) throw ConfigError("rover: null confidence must be in [0,1]");
}

std::vector<std::string> rover_vote(const Wtn& wtn, const RoverOptions& options) {
    options.validate();
    std::vector<std::string> out;
    const double n = static_cast<double>(wtn.systems);
    for (const auto& slot : wtn.slots) {
        struct Tally {
            std::optional<std::string> token;
            std::size_t count = 0;
            double confidence = 0.0;
            std::size_t first_system = 0;
        };
        std::vector<Tally> tallies;
        for (const WtnEntry& e : slot) {
            auto it = std::find_if(tallies.begin(), tallies.end(), [&](const Tally& t) { return t.token == e.token; });
            if (it == tallies.end()) {
                tallies.push_back({e.token, 0, 0.0, e.system});
                it = tallies.end() - 1;
            }
            ++it->count;
            it->confidence += e.token ? e.confidence : options.null_confidence;
            it->first_system = std::min(it->first_system, e.system);
        }
        const Tally* best = nullptr;
        double best_score = 0.0;
        for (const Tally& t : tallies) {
            const double c = static_cast<double>(t.count);
            double score = c / n;
            if (options.confidence_weight > 0.0)
                score = (1.0 - options.confidence_weight) * score + options.confidence_weight * (t.confidence / c);
            bool better = !best || score > best_score;
            if (best && score == best_score) {
                if (t.token.has_value() != best->token.has_value())
                    better = t.token.has_value();
                else
                    better = t.first_system < best->first_system;
            }
            if (better) {
                best = &t;
                best_score = score;
            }
        }
        if (best && best->token) out.push_back(*best->token);
    }
    return out;
}

double hypothesis_confidence(const HypothesisLine& line) {
    if (!line.combined) throw UsageError("confidence voting needs n-best hypothesis files with combined scores");
    const double len = static_cast<double>(cer_units(line.text).size());
    return std::min(1.0, std::exp(*line.combined / (len + 1.0)));
}

std::map<std::string, std::string> rover_fuse(const std::vector<HypothesisSet>& systems, const RoverOptions& options) {
    options.validate();
    if (systems.size() < 2) throw UsageError("rover: at least 2 systems are required");
    std::set<std::string> all;
    for (const auto& s : systems)
        for (const auto& [id, h] : s) all.insert(id);
    std::string diff;
    std::size_t shown = 0;
    for (const std::string& id : all) {
        for (std::size_t k = 0; k < systems.size(); ++k)
            if (!systems[k].contains(id)) {
                if (shown < 20) diff += (diff.empty() ? "" : ", ") + id + " (missing in system " + std::to_string(k + 1) + ")";
                ++shown;
                break;
            }
    }
    if (shown > 0) {
        if (shown > 20) diff += ", ... " + std::to_string(shown - 20) + " more";
        throw DataError("rover: utterance id sets differ: " + diff);
    }
    const bool scored = options.confidence_weight > 0.0;
    std::map<std::string, std::string> out;
    for (const auto& [id, base] : systems[0]) {
        Wtn wtn;
        for (const auto& s : systems) {
            const HypothesisLine& h = s.at(id);
            align_into_wtn(wtn, cer_units(h.text), scored ? hypothesis_confidence(h) : 1.0);
        }
        std::string text;
        for (const std::string& t : rover_vote(wtn, options)) text += t;
        out.emplace(id, std::move(text));
    }
    return out;
}

}  // namespace vsr
