#pragma once

// Character error rate and corpus scoring.

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vsr {

struct EditOps {
    std::size_t substitutions = 0;
    std::size_t deletions = 0;
    std::size_t insertions = 0;

    std::size_t distance() const { return substitutions + deletions + insertions; }
};

// Minimal edit alignment of hyp against ref; among minimal alignments the
// backtrace prefers match > substitution > deletion > insertion.
EditOps edit_ops(std::span<const std::string> ref, std::span<const std::string> hyp);

// Unicode characters with whitespace removed.
std::vector<std::string> cer_units(std::string_view text);

struct CerResult {
    EditOps ops;
    std::size_t ref_len = 0;
    double rate = 0.0;  // +inf for an empty reference with a nonempty hypothesis
};

CerResult cer(std::string_view reference, std::string_view hypothesis);

struct UtteranceScore {
    std::string id;
    CerResult result;
    bool missing = false;  // no hypothesis; scored as all deletions
};

struct CorpusScore {
    std::vector<UtteranceScore> utterances;  // sorted by id
    std::size_t errors = 0;
    std::size_t ref_len = 0;
    double cer = 0.0;  // errors / ref_len, 0 when ref_len == 0
    std::vector<std::string> missing;
    std::vector<std::string> extra;  // hypothesis ids without a reference
};

CorpusScore corpus_score(const std::map<std::string, std::string>& references,
                         const std::map<std::string, std::string>& hypotheses);

// Lines "utterance_id<TAB>S<TAB>D<TAB>I<TAB>ref_len<TAB>cer".
std::string format_score_report(const CorpusScore& score);

}  // namespace vsr
