#pragma once

// Corpus-level orchestration shared by the command-line tool: synthetic data,
// offline augmentation, sample loading and batch decoding.

#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "vsr/checkpoint.hpp"
#include "vsr/config.hpp"
#include "vsr/hypotheses.hpp"

namespace vsr {

using Logger = std::function<void(const std::string&)>;

struct SynthCorpus {
    std::vector<ManifestEntry> train;
    std::vector<ManifestEntry> dev;
};

// Writes <out>/train.tsv, <out>/dev.tsv and clips under <out>/clips/. Ids
// are "train_NNNN" / "dev_NNNN"; each utterance draws its length, tokens and
// noise from stream_seed(seed, id).
SynthCorpus synth_corpus(const DataConfig& data, std::uint64_t seed, const std::filesystem::path& out_dir);

// Id suffix for a speed rate, e.g. "_sp0.9", "_sp1.0".
std::string speed_suffix(double rate);

// For every entry and rate (rate-major within an entry): speed perturbation,
// then the clip policy seeded by stream_seed(seed, new id). Writes
// <out>/<name>.tsv and clips under <out>/clips/; returns the new entries.
std::vector<ManifestEntry> augment_corpus(const std::vector<ManifestEntry>& entries, const AugmentConfig& config,
                                          std::uint64_t seed, const std::filesystem::path& out_dir,
                                          const std::string& name);

// Loads clips as model inputs with encoded transcripts. Duplicate ids raise DataError.
std::vector<TrainSample> load_samples(const std::vector<ManifestEntry>& entries, const ModelConfig& model);

struct BatchDecodeResult {
    std::map<std::string, std::string> texts;  // by id; failed utterances map to ""
    std::vector<NBestEntry> nbest;             // sorted by id
    std::size_t failures = 0;
};

// Decodes one model input to an n-best list.
NBestList decode_input(const ModelCheckpoint& ckpt, const Tensor& input, const DecodeParams& params);

// Per-utterance failures are logged and give empty text; the batch never aborts.
BatchDecodeResult batch_decode(const std::vector<ManifestEntry>& entries, const ModelCheckpoint& ckpt,
                               const DecodeParams& params, std::size_t jobs, const Logger& log = {});

}  // namespace vsr
