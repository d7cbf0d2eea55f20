#include "vsr/pipeline.hpp"

#include <atomic>
#include <charconv>
#include <cstdio>
#include <set>
#include <thread>

#include "vsr/error.hpp"
#include "vsr/rng.hpp"

namespace vsr {

namespace {

std::vector<ManifestEntry> synth_split(const DataConfig& data, const Vocabulary& vocab, std::uint64_t seed,
                                       const std::filesystem::path& out_dir, const std::string& split,
                                       std::size_t count) {
    std::vector<ManifestEntry> entries;
    const std::vector<int> regular = vocab.regular_ids();
    for (std::size_t i = 0; i < count; ++i) {
        char id[64];
        std::snprintf(id, sizeof id, "%s_%04zu", split.c_str(), i);
        Rng rng(stream_seed(seed, id));
        const std::size_t len = data.min_tokens + rng.index(data.max_tokens - data.min_tokens + 1);
        std::vector<int> tokens(len);
        for (int& t : tokens) t = regular[rng.index(regular.size())];
        auto [video, text] = synth_generate(tokens, vocab, data.synth, rng);
        const std::filesystem::path rel = std::filesystem::path("clips") / (std::string(id) + ".vten");
        save_video(out_dir / rel, video);
        entries.push_back({id, rel, text});
    }
    write_manifest(out_dir / (split + ".tsv"), entries);
    for (auto& e : entries) e.path = out_dir / e.path;
    return entries;
}

}  // namespace

SynthCorpus synth_corpus(const DataConfig& data, std::uint64_t seed, const std::filesystem::path& out_dir) {
    data.validate();
    const Vocabulary vocab = data.vocab();
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "clips", ec);
    if (ec) throw DataError("cannot create " + (out_dir / "clips").string() + ": " + ec.message());
    SynthCorpus c;
    c.train = synth_split(data, vocab, seed, out_dir, "train", data.train_count);
    c.dev = synth_split(data, vocab, seed, out_dir, "dev", data.dev_count);
    return c;
}

std::string speed_suffix(double rate) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, rate);
    std::string s(buf, r.ptr);
    if (s.find('.') == std::string::npos && s.find('e') == std::string::npos) s += ".0";
    return "_sp" + s;
}

std::vector<ManifestEntry> augment_corpus(const std::vector<ManifestEntry>& entries, const AugmentConfig& config,
                                          std::uint64_t seed, const std::filesystem::path& out_dir,
                                          const std::string& name) {
    config.validate();
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "clips", ec);
    if (ec) throw DataError("cannot create " + (out_dir / "clips").string() + ": " + ec.message());
    std::vector<ManifestEntry> out, written;
    std::set<std::string> seen;
    for (const ManifestEntry& e : entries) {
        if (!std::filesystem::exists(e.path)) throw DataError("missing clip " + e.path.string() + " for " + e.id);
        const VideoTensor video = load_video(e.path);
        for (double rate : config.speed_rates) {
            const std::string id = e.id + speed_suffix(rate);
            if (!seen.insert(id).second) throw DataError("augment: duplicate output id " + id);
            Rng rng(stream_seed(seed, id));
            const VideoTensor v = augment(speed_perturb(video, rate), config.policy, rng);
            const std::filesystem::path rel = std::filesystem::path("clips") / (id + ".vten");
            save_video(out_dir / rel, v);
            written.push_back({id, rel, e.transcript});
            out.push_back({id, out_dir / rel, e.transcript});
        }
    }
    write_manifest(out_dir / (name + ".tsv"), written);
    return out;
}

std::vector<TrainSample> load_samples(const std::vector<ManifestEntry>& entries, const ModelConfig& model) {
    const Vocabulary vocab = model.vocab();
    std::vector<TrainSample> out;
    std::set<std::string> seen;
    for (const ManifestEntry& e : entries) {
        if (!seen.insert(e.id).second) throw DataError("duplicate utterance id " + e.id);
        TrainSample s;
        s.id = e.id;
        s.input = model_input(load_video(e.path), model);
        s.tokens = vocab.encode(e.transcript);
        if (s.tokens.empty()) throw DataError("empty transcript for " + e.id);
        out.push_back(std::move(s));
    }
    return out;
}

NBestList decode_input(const ModelCheckpoint& ckpt, const Tensor& input, const DecodeParams& params) {
    const ModelConfig& cfg = ckpt.config;
    const Vocabulary vocab = cfg.vocab();
    const Tensor states = encode(ckpt.params, cfg, input);
    const Tensor lp = ctc_log_probs(ckpt.params, states);
    std::unique_ptr<DecoderScorer> att;
    std::unique_ptr<LmScorer> lm;
    if (params.ctc_weight < 1.0) att = std::make_unique<DecoderScorer>(ckpt.params, cfg.decoder, states);
    if (params.lm_weight > 0.0) {
        if (!cfg.use_lm) throw UsageError("decode: lm_weight > 0 but the checkpoint has no language model");
        lm = std::make_unique<LmScorer>(ckpt.params, cfg.lm, vocab.sos_eos());
    }
    return beam_search_joint(lp, att.get(), lm.get(), params, vocab.blank(), vocab.sos_eos());
}

BatchDecodeResult batch_decode(const std::vector<ManifestEntry>& entries, const ModelCheckpoint& ckpt,
                               const DecodeParams& params, std::size_t jobs, const Logger& log) {
    params.validate();
    if (params.lm_weight > 0.0 && !ckpt.config.use_lm)
        throw UsageError("decode: lm_weight > 0 but the checkpoint has no language model");
    std::vector<const ManifestEntry*> order;
    std::set<std::string> seen;
    for (const ManifestEntry& e : entries) {
        if (!seen.insert(e.id).second) throw DataError("duplicate utterance id " + e.id);
        order.push_back(&e);
    }
    std::sort(order.begin(), order.end(), [](const ManifestEntry* a, const ManifestEntry* b) { return a->id < b->id; });

    const Vocabulary vocab = ckpt.config.vocab();
    std::vector<NBestList> results(order.size());
    std::vector<std::string> errors(order.size());
    auto work = [&](std::size_t i) {
        try {
            const Tensor input = model_input(load_video(order[i]->path), ckpt.config);
            results[i] = decode_input(ckpt, input, params);
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    };
    jobs = std::max<std::size_t>(1, std::min(jobs, order.size()));
    if (jobs == 1) {
        for (std::size_t i = 0; i < order.size(); ++i) work(i);
    } else {
        std::atomic<std::size_t> next{0};
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < jobs; ++w)
            pool.emplace_back([&] {
                for (std::size_t i = next++; i < order.size(); i = next++) work(i);
            });
        for (auto& t : pool) t.join();
    }

    BatchDecodeResult out;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const std::string& id = order[i]->id;
        NBestEntry entry{id, {}, {}};
        if (!errors[i].empty()) {
            ++out.failures;
            if (log) log("decode: " + id + ": " + errors[i]);
            out.texts.emplace(id, "");
        } else {
            entry.hyps = results[i];
            for (const Hypothesis& h : entry.hyps)
                entry.texts.push_back(vocab.decode(std::span<const int>(h.tokens).subspan(1)));
            if (!entry.hyps.empty() && entry.hyps[0].forced && log) log("decode: " + id + ": no hypothesis ended; using the best live one");
            out.texts.emplace(id, entry.texts.empty() ? "" : entry.texts[0]);
        }
        out.nbest.push_back(std::move(entry));
    }
    return out;
}

}  // namespace vsr
