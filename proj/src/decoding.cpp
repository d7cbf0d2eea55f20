#include "vsr/decoding.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "vsr/error.hpp"

namespace vsr {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double log_add(double a, double b) {
    if (a == kNegInf) return b;
    if (b == kNegInf) return a;
    const double m = std::max(a, b);
    return m + std::log1p(std::exp(-std::abs(a - b)));
}

std::vector<double> to_vector(const Tensor& t) { return std::vector<double>(t.data().begin(), t.data().end()); }

}  // namespace

CtcPrefixScorer::CtcPrefixScorer(Tensor log_probs, int blank, int eos)
    : log_probs_(std::move(log_probs)), blank_(blank), eos_(eos) {
    if (log_probs_.rank() != 2 || log_probs_.dim(0) == 0 || log_probs_.dim(1) == 0)
        throw DimensionError("ctc prefix scorer: expected log-probs [T,V], got " + shape_str(log_probs_.shape()));
    if (blank_ < 0 || static_cast<std::size_t>(blank_) >= log_probs_.dim(1))
        throw ConfigError("ctc prefix scorer: blank id out of range");
    if (eos_ == blank_) throw ConfigError("ctc prefix scorer: eos equals blank");
}

CtcPrefixState CtcPrefixScorer::initial() const {
    const std::size_t t_len = frames(), v = vocab_size();
    CtcPrefixState s;
    s.r_nb.assign(t_len, kNegInf);
    s.r_b.resize(t_len);
    double acc = 0.0;
    for (std::size_t t = 0; t < t_len; ++t) {
        acc += log_probs_[t * v + static_cast<std::size_t>(blank_)];
        s.r_b[t] = acc;
    }
    return s;
}

std::pair<double, CtcPrefixState> CtcPrefixScorer::step(std::span<const int> prefix, int next,
                                                        const CtcPrefixState& state) const {
    if (prefix.empty() || state.length + 1 != prefix.size() || state.r_nb.size() != frames())
        throw UsageError("ctc prefix scorer: state covers " + std::to_string(state.length) +
                         " tokens but the prefix has " + std::to_string(prefix.empty() ? 0 : prefix.size() - 1));
    const std::size_t t_len = frames(), v = vocab_size();
    CtcPrefixState out;
    out.length = state.length + 1;
    if (next == eos_) {
        out.psi = log_add(state.r_nb[t_len - 1], state.r_b[t_len - 1]);
        out.r_nb = state.r_nb;
        out.r_b = state.r_b;
    } else {
        if (next < 0 || static_cast<std::size_t>(next) >= v || next == blank_)
            throw DataError("ctc prefix scorer: token id " + std::to_string(next) + " cannot extend a prefix");
        const int last = state.length == 0 ? -1 : prefix.back();
        const auto y = [&](std::size_t t, int k) { return static_cast<double>(log_probs_[t * v + static_cast<std::size_t>(k)]); };
        out.r_nb.assign(t_len, kNegInf);
        out.r_b.assign(t_len, kNegInf);
        if (state.length == 0) out.r_nb[0] = y(0, next);
        double psi = out.r_nb[0];
        for (std::size_t t = 1; t < t_len; ++t) {
            const double phi = next == last ? state.r_b[t - 1] : log_add(state.r_b[t - 1], state.r_nb[t - 1]);
            out.r_nb[t] = log_add(out.r_nb[t - 1], phi) + y(t, next);
            out.r_b[t] = log_add(out.r_b[t - 1], out.r_nb[t - 1]) + y(t, blank_);
            psi = log_add(psi, phi + y(t, next));
        }
        out.psi = psi;
    }
    const double delta = state.psi == kNegInf ? kNegInf : out.psi - state.psi;
    return {delta, std::move(out)};
}

double CtcPrefixScorer::sequence_score(std::span<const int> label) const {
    std::vector<int> prefix{eos_};
    CtcPrefixState s = initial();
    for (int y : label) {
        s = step(prefix, y, s).second;
        prefix.push_back(y);
    }
    return step(prefix, eos_, s).second.psi;
}

DecoderScorer::DecoderScorer(const ParamMap& params, const DecoderConfig& config, const Tensor& encoder_states)
    : params_(params), config_(config), memory_(decoder_memory(params, config, encoder_states)) {}

ScorerState DecoderScorer::initial() const { return std::make_shared<const KvCache>(); }

std::pair<std::vector<double>, ScorerState> DecoderScorer::score(std::span<const int> prefix,
                                                                 const ScorerState& state) const {
    auto cache = std::make_shared<KvCache>(*std::static_pointer_cast<const KvCache>(state));
    if (prefix.empty() || cache->length + 1 != prefix.size())
        throw UsageError("decoder scorer: cache does not match the prefix");
    const Tensor logp = decoder_step(params_, config_, memory_, *cache, prefix.back());
    return {to_vector(logp), std::move(cache)};
}

LmScorer::LmScorer(const ParamMap& params, const LmConfig& config, int sos) : params_(params), config_(config), sos_(sos) {}

ScorerState LmScorer::initial() const { return std::make_shared<const LmState>(); }

std::pair<std::vector<double>, ScorerState> LmScorer::score(std::span<const int> prefix, const ScorerState& state) const {
    auto [logp, next] = lm_score_step(prefix, *std::static_pointer_cast<const LmState>(state), params_, config_, sos_);
    return {to_vector(logp), std::make_shared<const LmState>(std::move(next))};
}

void DecodeParams::validate() const {
    if (beam_size == 0) throw ConfigError("decode: beam_size must be at least 1");
    if (!(ctc_weight >= 0.0 && ctc_weight <= 1.0)) throw ConfigError("decode: ctc_weight must be in [0,1]");
    if (!(lm_weight >= 0.0)) throw ConfigError("decode: lm_weight must be non-negative");
    if (!(max_len_ratio > 0.0)) throw ConfigError("decode: max_len_ratio must be positive");
    if (nbest == 0) throw ConfigError("decode: nbest must be at least 1");
    if (!std::isfinite(length_bonus)) throw ConfigError("decode: length_bonus must be finite");
}

double combine_scores(double att, double ctc, double lm, std::size_t length, const DecodeParams& p) {
    double s = 0.0;
    if (p.ctc_weight < 1.0) s += (1.0 - p.ctc_weight) * att;
    if (p.ctc_weight > 0.0) s += p.ctc_weight * ctc;
    if (p.lm_weight > 0.0) s += p.lm_weight * lm;
    if (p.length_bonus != 0.0) s += p.length_bonus * static_cast<double>(length);
    return s;
}

namespace {

struct Live {
    Hypothesis hyp;
    CtcPrefixState ctc_state;
    ScorerState att_state;
    ScorerState lm_state;
};

struct Candidate {
    std::size_t parent;
    int token;
    bool eos;
    Hypothesis hyp;
    CtcPrefixState ctc_state;
    ScorerState att_state;
    ScorerState lm_state;
};

// Token sequence as ranked for ties: the hypothesis tokens plus eos when ended.
bool lex_less(const Hypothesis& a, bool a_eos, const Hypothesis& b, bool b_eos, int eos) {
    std::vector<int> x = a.tokens, y = b.tokens;
    if (a_eos) x.push_back(eos);
    if (b_eos) y.push_back(eos);
    return std::lexicographical_compare(x.begin(), x.end(), y.begin(), y.end());
}

void sort_finished(NBestList& list, int eos) {
    std::stable_sort(list.begin(), list.end(), [eos](const Hypothesis& a, const Hypothesis& b) {
        if (a.combined != b.combined) return a.combined > b.combined;
        return lex_less(a, true, b, true, eos);
    });
}

}  // namespace

NBestList beam_search_joint(const Tensor& ctc_log_probs, const TokenScorer* attention, const TokenScorer* lm,
                            const DecodeParams& params, int blank, int sos_eos) {
    params.validate();
    if (ctc_log_probs.rank() != 2 || ctc_log_probs.dim(0) == 0)
        throw DimensionError("beam search: empty encoder output");
    if (!attention && params.ctc_weight != 1.0) throw UsageError("beam search: attention scorer required");
    if (!lm && params.lm_weight != 0.0) throw UsageError("beam search: language model required when lm_weight > 0");
    const CtcPrefixScorer ctc(ctc_log_probs, blank, sos_eos);
    const std::size_t t_len = ctc.frames(), v = ctc.vocab_size();
    const auto max_len = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(params.max_len_ratio * static_cast<double>(t_len) - 1e-9)));

    DecodeParams search = params;
    if (params.rescoring) search.ctc_weight = 0.0;
    const bool use_att = attention && search.ctc_weight < 1.0;
    const bool use_lm = lm && params.lm_weight > 0.0;

    std::vector<int> regular;
    for (std::size_t c = 0; c < v; ++c)
        if (static_cast<int>(c) != blank && static_cast<int>(c) != sos_eos) regular.push_back(static_cast<int>(c));

    std::vector<Live> live(1);
    live[0].hyp.tokens = {sos_eos};
    live[0].ctc_state = ctc.initial();
    if (use_att) live[0].att_state = attention->initial();
    if (use_lm) live[0].lm_state = lm->initial();
    NBestList finished;
    std::vector<Live> last_live;

    for (std::size_t step = 0; step <= max_len && !live.empty(); ++step) {
        std::vector<Candidate> cands;
        for (std::size_t i = 0; i < live.size(); ++i) {
            const Live& L = live[i];
            std::vector<double> att_lp, lm_lp;
            ScorerState att_next, lm_next;
            if (use_att) std::tie(att_lp, att_next) = attention->score(L.hyp.tokens, L.att_state);
            if (use_lm) std::tie(lm_lp, lm_next) = lm->score(L.hyp.tokens, L.lm_state);
            auto expand = [&](int c, bool eos) {
                const auto index = static_cast<std::size_t>(c);
                if ((use_att && index >= att_lp.size()) || (use_lm && index >= lm_lp.size()))
                    throw DimensionError("beam search: scorer vocabulary smaller than token id " + std::to_string(c));
                Candidate cand{i, c, eos, L.hyp, {}, att_next, lm_next};
                auto [delta, cs] = ctc.step(L.hyp.tokens, c, L.ctc_state);
                cand.hyp.ctc = cs.psi;
                cand.ctc_state = std::move(cs);
                if (use_att) cand.hyp.att += att_lp[index];
                if (use_lm) cand.hyp.lm += lm_lp[index];
                const std::size_t length = L.hyp.tokens.size() - 1 + (eos ? 0 : 1);
                cand.hyp.combined = combine_scores(cand.hyp.att, cand.hyp.ctc, cand.hyp.lm, length, search);
                if (cand.hyp.combined == kNegInf || std::isnan(cand.hyp.combined)) return;
                if (!eos) cand.hyp.tokens.push_back(c);
                cands.push_back(std::move(cand));
            };
            if (step < max_len)
                for (int c : regular) expand(c, false);
            expand(sos_eos, true);
        }
        std::stable_sort(cands.begin(), cands.end(), [sos_eos](const Candidate& a, const Candidate& b) {
            if (a.hyp.combined != b.hyp.combined) return a.hyp.combined > b.hyp.combined;
            return lex_less(a.hyp, a.eos, b.hyp, b.eos, sos_eos);
        });
        if (cands.size() > params.beam_size) cands.resize(params.beam_size);

        last_live = std::move(live);
        live.clear();
        for (Candidate& c : cands) {
            if (c.eos) {
                c.hyp.finished = true;
                finished.push_back(std::move(c.hyp));
            } else {
                live.push_back({std::move(c.hyp), std::move(c.ctc_state), std::move(c.att_state), std::move(c.lm_state)});
            }
        }
        if (!live.empty() && finished.size() >= params.nbest && params.length_bonus <= 0.0) {
            sort_finished(finished, sos_eos);
            const double threshold = finished[params.nbest - 1].combined;
            double best_live = kNegInf;
            for (const Live& L : live) best_live = std::max(best_live, L.hyp.combined);
            if (best_live <= threshold) break;
        }
        if (!live.empty()) last_live.clear();
    }

    if (finished.empty()) {
        const std::vector<Live>& pool = live.empty() ? last_live : live;
        if (pool.empty()) return {};
        Hypothesis best = pool.front().hyp;
        for (const Live& L : pool)
            if (L.hyp.combined > best.combined) best = L.hyp;
        best.forced = true;
        return {best};
    }
    if (params.rescoring) {
        for (Hypothesis& h : finished) {
            h.ctc = ctc.sequence_score(std::span<const int>(h.tokens).subspan(1));
            h.combined = combine_scores(h.att, h.ctc, h.lm, h.tokens.size() - 1, params);
        }
    }
    sort_finished(finished, sos_eos);
    if (finished.size() > params.nbest) finished.resize(params.nbest);
    return finished;
}

}  // namespace vsr
