#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <unistd.h>

#include "CLI11.hpp"
#include "vsr/checkpoint.hpp"
#include "vsr/config.hpp"
#include "vsr/error.hpp"
#include "vsr/metrics.hpp"
#include "vsr/pipeline.hpp"
#include "vsr/rover.hpp"
#include "vsr/tensor_io.hpp"

namespace fs = std::filesystem;
using namespace vsr;

namespace {

void log_line(const std::string& msg) { std::cerr << msg << '\n'; }

// Files are produced in a private sibling directory and moved into place
// only after the command succeeds; the directory is removed either way.
class Staging {
public:
    explicit Staging(const fs::path& target) : target_(target) {
        dir_ = target;
        dir_ += ".staging-" + std::to_string(::getpid());
        fs::remove_all(dir_);
        std::error_code ec;
        fs::create_directories(dir_, ec);
        if (ec) throw DataError("cannot create " + dir_.string() + ": " + ec.message());
    }
    ~Staging() {
        std::error_code ec;
        fs::remove_all(dir_, ec);
    }
    const fs::path& dir() const { return dir_; }

    void commit() {
        std::error_code ec;
        fs::create_directories(target_, ec);
        if (ec) throw DataError("cannot create " + target_.string() + ": " + ec.message());
        std::vector<fs::path> files;
        for (const auto& e : fs::recursive_directory_iterator(dir_))
            if (e.is_regular_file()) files.push_back(e.path());
        std::sort(files.begin(), files.end());
        for (const fs::path& f : files) {
            const fs::path dest = target_ / fs::relative(f, dir_);
            fs::create_directories(dest.parent_path());
            fs::rename(f, dest);
        }
    }

private:
    fs::path target_;
    fs::path dir_;
};

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;

    RunConfig load() const {
        RunConfig c = config_path.empty() ? RunConfig() : load_run_config(config_path);
        if (seed) {
            c.seed = *seed;
            c.train.seed = *seed;
            c.augment.policy.rng_seed = *seed;
        }
        if (jobs) c.train.jobs = *jobs;
        c.validate();
        return c;
    }
};

void add_common(CLI::App* cmd, Common& common) {
    cmd->add_option("--config", common.config_path, "JSON run configuration")->check(CLI::ExistingFile);
    cmd->add_option("--seed", common.seed, "Global seed (overrides the config)");
    cmd->add_option("--jobs", common.jobs, "Worker threads")->check(CLI::PositiveNumber);
}

std::map<std::string, std::string> references(const std::vector<ManifestEntry>& entries) {
    std::map<std::string, std::string> out;
    for (const auto& e : entries)
        if (!out.emplace(e.id, e.transcript).second) throw DataError("duplicate utterance id " + e.id);
    return out;
}

std::string shape_text(const Shape& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Visual speech recognition toolkit"};
    app.require_subcommand(1);
    Common common;

    auto* synth = app.add_subcommand("synth-data", "Generate a synthetic train/dev corpus");
    add_common(synth, common);
    std::string synth_out;
    std::optional<std::size_t> train_count, dev_count;
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--train-count", train_count, "Training utterances");
    synth->add_option("--dev-count", dev_count, "Development utterances");

    auto* aug = app.add_subcommand("augment", "Speed-perturb and augment a manifest");
    add_common(aug, common);
    std::string aug_manifest, aug_out, aug_name;
    std::vector<double> aug_rates;
    aug->add_option("--manifest", aug_manifest, "Input manifest")->required();
    aug->add_option("--out", aug_out, "Output directory")->required();
    aug->add_option("--rates", aug_rates, "Speed rates (default from config)")->delimiter(',');
    aug->add_option("--name", aug_name, "Output manifest name (default: input name)");

    auto* train = app.add_subcommand("train-toy", "Train the toy recognizer and language model");
    add_common(train, common);
    std::string train_manifest, train_out, train_curve;
    std::optional<std::size_t> train_steps, train_batch, log_every;
    train->add_option("--train", train_manifest, "Training manifest")->required();
    train->add_option("--out", train_out, "Checkpoint path")->required();
    train->add_option("--curve", train_curve, "Loss curve path");
    train->add_option("--steps", train_steps, "Optimizer steps");
    train->add_option("--batch-size", train_batch, "Utterances per step")->check(CLI::PositiveNumber);
    train->add_option("--log-every", log_every, "Progress interval on stderr (0 = silent)");

    auto* dec = app.add_subcommand("decode", "Decode a manifest with a checkpoint");
    add_common(dec, common);
    std::string dec_manifest, dec_ckpt, dec_out, dec_nbest_out;
    std::optional<std::size_t> beam, nbest;
    std::optional<double> ctc_weight, lm_weight, max_len_ratio, length_bonus;
    bool rescoring = false;
    dec->add_option("--manifest", dec_manifest, "Manifest to decode")->required();
    dec->add_option("--ckpt", dec_ckpt, "Checkpoint")->required();
    dec->add_option("--out", dec_out, "Hypothesis file")->required();
    dec->add_option("--nbest-out", dec_nbest_out, "N-best file");
    dec->add_option("--beam", beam, "Beam size (default 48)")->check(CLI::PositiveNumber);
    dec->add_option("--ctc-weight", ctc_weight, "CTC weight (default 0.5)");
    dec->add_option("--lm-weight", lm_weight, "LM weight (default 0.4)");
    dec->add_option("--nbest", nbest, "Hypotheses kept per utterance")->check(CLI::PositiveNumber);
    dec->add_option("--max-len-ratio", max_len_ratio, "Output length cap as a multiple of the frame count");
    dec->add_option("--length-bonus", length_bonus, "Additive score per emitted token");
    dec->add_flag("--rescoring", rescoring, "Apply CTC only to finished hypotheses");

    auto* fuse = app.add_subcommand("fuse", "ROVER fusion of hypothesis files (best system first)");
    add_common(fuse, common);
    std::vector<std::string> fuse_inputs;
    std::string fuse_out;
    std::optional<double> conf_weight;
    fuse->add_option("inputs", fuse_inputs, "Hypothesis or n-best files, best system first")->required();
    fuse->add_option("--out", fuse_out, "Fused hypothesis file")->required();
    fuse->add_option("--confidence-weight", conf_weight, "Confidence weight in [0,1] (needs n-best inputs)");

    auto* score = app.add_subcommand("score", "Character error rate of a hypothesis file");
    add_common(score, common);
    std::string score_ref, score_hyp, score_report;
    score->add_option("--ref", score_ref, "Reference manifest")->required();
    score->add_option("--hyp", score_hyp, "Hypothesis file")->required();
    score->add_option("--report", score_report, "Per-utterance report path");

    auto* inspect = app.add_subcommand("inspect-ckpt", "Print a checkpoint's config and parameter table");
    std::string inspect_path;
    inspect->add_option("checkpoint", inspect_path, "Checkpoint")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        std::cerr << "error: usage: " << msg << '\n';
        return static_cast<int>(ErrorKind::usage);
    }

    try {
        if (*synth) {
            RunConfig c = common.load();
            if (train_count) c.data.train_count = *train_count;
            if (dev_count) c.data.dev_count = *dev_count;
            Staging stage(synth_out);
            const SynthCorpus corpus = synth_corpus(c.data, c.seed, stage.dir());
            stage.commit();
            log_line("synth-data: " + std::to_string(corpus.train.size()) + " train, " + std::to_string(corpus.dev.size()) +
                     " dev utterances in " + synth_out);
        } else if (*aug) {
            RunConfig c = common.load();
            if (!aug_rates.empty()) c.augment.speed_rates = aug_rates;
            if (aug_name.empty()) aug_name = fs::path(aug_manifest).stem().string();
            const auto entries = read_manifest(aug_manifest);
            Staging stage(aug_out);
            const auto out = augment_corpus(entries, c.augment, c.seed, stage.dir(), aug_name);
            stage.commit();
            log_line("augment: " + std::to_string(out.size()) + " utterances in " + (fs::path(aug_out) / (aug_name + ".tsv")).string());
        } else if (*train) {
            RunConfig c = common.load();
            if (train_steps) c.train.steps = *train_steps;
            if (train_batch) c.train.batch_size = *train_batch;
            const std::size_t every = log_every.value_or(50);
            const auto samples = load_samples(read_manifest(train_manifest), c.model);
            Rng init_rng(stream_seed(c.seed, "model-init"));
            ParamMap init = init_model(c.model, init_rng);
            const TrainResult r = train_toy(c.model, samples, c.train, std::move(init), [&](const LossRecord& rec) {
                if (every > 0 && (rec.step % every == 0 || rec.step == 1)) {
                    char buf[160];
                    std::snprintf(buf, sizeof buf, "train-toy: step %zu ctc %.4f ce %.4f joint %.4f", rec.step, rec.ctc,
                                  rec.ce, rec.joint);
                    log_line(buf);
                }
            });
            const std::string ckpt_bytes = serialize_checkpoint({c.model, r.params});
            if (!train_curve.empty()) write_file_atomic(train_curve, format_loss_curve(r.curve));
            write_file_atomic(train_out, ckpt_bytes);
            if (r.skipped > 0) log_line("train-toy: skipped " + std::to_string(r.skipped) + " samples with infeasible CTC alignments");
        } else if (*dec) {
            RunConfig c = common.load();
            DecodeParams p = c.decode;
            if (beam) p.beam_size = *beam;
            if (ctc_weight) p.ctc_weight = *ctc_weight;
            if (lm_weight) p.lm_weight = *lm_weight;
            if (nbest) p.nbest = *nbest;
            if (max_len_ratio) p.max_len_ratio = *max_len_ratio;
            if (length_bonus) p.length_bonus = *length_bonus;
            if (rescoring) p.rescoring = true;
            p.validate();
            const ModelCheckpoint ckpt = load_checkpoint(dec_ckpt);
            const auto entries = read_manifest(dec_manifest);
            const BatchDecodeResult r = batch_decode(entries, ckpt, p, c.train.jobs, log_line);
            if (!dec_nbest_out.empty()) write_file_atomic(dec_nbest_out, format_nbest(r.nbest));
            write_file_atomic(dec_out, format_hypotheses(r.texts));
            if (r.failures > 0) log_line("decode: " + std::to_string(r.failures) + " utterances failed");
        } else if (*fuse) {
            RunConfig c = common.load();
            if (conf_weight) c.rover.confidence_weight = *conf_weight;
            if (fuse_inputs.size() < 2) throw UsageError("fuse: at least 2 systems are required");
            std::vector<HypothesisSet> systems;
            for (const auto& f : fuse_inputs) systems.push_back(read_hypotheses(f));
            write_file_atomic(fuse_out, format_hypotheses(rover_fuse(systems, c.rover)));
        } else if (*score) {
            (void)common.load();
            std::map<std::string, std::string> hyps;
            for (auto& [id, h] : read_hypotheses(score_hyp)) hyps.emplace(id, h.text);
            const CorpusScore s = corpus_score(references(read_manifest(score_ref)), hyps);
            for (const auto& id : s.missing) log_line("score: warning: no hypothesis for " + id + "; counted as deletions");
            for (const auto& id : s.extra) log_line("score: warning: hypothesis " + id + " has no reference; ignored");
            if (!score_report.empty()) write_file_atomic(score_report, format_score_report(s));
            char buf[128];
            std::snprintf(buf, sizeof buf, "CER %.6f (%zu errors / %zu reference characters)", s.cer, s.errors, s.ref_len);
            std::cout << buf << '\n';
        } else if (*inspect) {
            const ModelCheckpoint ckpt = load_checkpoint(inspect_path);
            std::size_t total = 0;
            std::cout << "config " << model_config_to_json(ckpt.config) << '\n';
            for (const auto& [name, t] : ckpt.params) {
                std::cout << name << '\t' << shape_text(t.shape()) << '\n';
                total += t.numel();
            }
            std::cout << "parameters " << ckpt.params.size() << " tensors, " << total << " values\n";
        }
    } catch (const Error& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        const std::string kind = e.kind() == ErrorKind::usage ? "usage" : e.kind() == ErrorKind::data ? "data" : "numeric";
        if (msg.rfind(kind + " error: ", 0) == 0) msg = msg.substr(kind.size() + 8);
        std::cerr << "error: " << kind << ": " << msg << '\n';
        return static_cast<int>(e.kind());
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: data: " << e.what() << '\n';
        return static_cast<int>(ErrorKind::data);
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
