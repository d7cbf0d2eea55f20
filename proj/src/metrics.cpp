#include "vsr/metrics.hpp"

#include <cstdio>
#include <limits>
#include <sstream>

#include "vsr/text.hpp"

namespace vsr {

EditOps edit_ops(std::span<const std::string> ref, std::span<const std::string> hyp) {
    const std::size_t n = ref.size(), m = hyp.size();
    std::vector<std::size_t> d((n + 1) * (m + 1));
    auto at = [&](std::size_t i, std::size_t j) -> std::size_t& { return d[i * (m + 1) + j]; };
    for (std::size_t i = 0; i <= n; ++i) at(i, 0) = i;
    for (std::size_t j = 0; j <= m; ++j) at(0, j) = j;
    for (std::size_t i = 1; i <= n; ++i)
        for (std::size_t j = 1; j <= m; ++j)
            at(i, j) = std::min({at(i - 1, j - 1) + (ref[i - 1] == hyp[j - 1] ? 0 : 1), at(i - 1, j) + 1, at(i, j - 1) + 1});
    EditOps ops;
    std::size_t i = n, j = m;
    while (i > 0 || j > 0) {
        if (i > 0 && j > 0) {
            const bool same = ref[i - 1] == hyp[j - 1];
            if (at(i, j) == at(i - 1, j - 1) + (same ? 0 : 1)) {
                if (!same) ++ops.substitutions;
                --i;
                --j;
                continue;
            }
        }
        if (i > 0 && at(i, j) == at(i - 1, j) + 1) {
            ++ops.deletions;
            --i;
        } else {
            ++ops.insertions;
            --j;
        }
    }
    return ops;
}

std::vector<std::string> cer_units(std::string_view text) {
    std::vector<std::string> out;
    for (std::string& ch : utf8_chars(text)) {
        const bool space = ch == " " || ch == "\t" || ch == "\n" || ch == "\r" || ch == "\v" || ch == "\f" ||
                           ch == "\xC2\xA0" || ch == "\xE3\x80\x80";
        if (!space) out.push_back(std::move(ch));
    }
    return out;
}

CerResult cer(std::string_view reference, std::string_view hypothesis) {
    const auto r = cer_units(reference), h = cer_units(hypothesis);
    CerResult out;
    out.ops = edit_ops(r, h);
    out.ref_len = r.size();
    if (r.empty())
        out.rate = h.empty() ? 0.0 : std::numeric_limits<double>::infinity();
    else
        out.rate = static_cast<double>(out.ops.distance()) / static_cast<double>(r.size());
    return out;
}

CorpusScore corpus_score(const std::map<std::string, std::string>& references,
                         const std::map<std::string, std::string>& hypotheses) {
    CorpusScore out;
    for (const auto& [id, ref] : references) {
        UtteranceScore u;
        u.id = id;
        const auto it = hypotheses.find(id);
        if (it == hypotheses.end()) {
            u.missing = true;
            out.missing.push_back(id);
        }
        u.result = cer(ref, u.missing ? std::string_view{} : std::string_view(it->second));
        out.errors += u.result.ops.distance();
        out.ref_len += u.result.ref_len;
        out.utterances.push_back(std::move(u));
    }
    for (const auto& [id, hyp] : hypotheses)
        if (!references.contains(id)) out.extra.push_back(id);
    out.cer = out.ref_len == 0 ? 0.0 : static_cast<double>(out.errors) / static_cast<double>(out.ref_len);
    return out;
}

std::string format_score_report(const CorpusScore& score) {
    std::ostringstream os;
    char buf[32];
    for (const UtteranceScore& u : score.utterances) {
        std::snprintf(buf, sizeof buf, "%.6f", u.result.rate);
        os << u.id << '\t' << u.result.ops.substitutions << '\t' << u.result.ops.deletions << '\t'
           << u.result.ops.insertions << '\t' << u.result.ref_len << '\t' << buf << '\n';
    }
    return os.str();
}

}  // namespace vsr
