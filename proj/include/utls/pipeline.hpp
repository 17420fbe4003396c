#pragma once

// Stage orchestration behind the `utls` command-line tool. A run directory
// collects every artifact:
//   pages/ gt/        synthetic corpus (or external pages via run.pages_dir)
//   pairs/            self-labelled patch pairs
//   checkpoint/       trained weights and training history
//   detect/           pseudo-RGB renderings and blob-line masks
//   labels/           line label maps and polygons
//   report/           evaluation tables and overlays
// Each stage writes the effective configuration as config.ini next to its
// outputs.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "utls/evaluator.hpp"
#include "utls/imaging.hpp"
#include "utls/pair_sampler.hpp"
#include "utls/siamese_net.hpp"
#include "utls/synthetic.hpp"

namespace utls::pipeline {

namespace fs = std::filesystem;

/// Environment variable naming the default configuration file.
inline constexpr const char* kConfigEnv = "UTLS_CONFIG";

struct PipelineConfig {
    // [run]
    std::string run_dir = "run";
    std::string pages_dir;  ///< empty: <run_dir>/pages
    std::string gt_dir;     ///< empty: <run_dir>/gt
    std::uint64_t seed = 1;
    int jobs = 1;
    int max_pages = 0;      ///< 0: every page

    // [synth]
    int synth_pages = 20;
    synth::SyntheticPageSpec synth;

    // [imaging]
    imaging::BinarizeParams binarize;
    int patch_height = 0;   ///< 0: patch_multiplier x estimated character height
    int patch_width = 0;    ///< 0: same as the patch height
    int inner = 10;
    double patch_multiplier = 3.0;

    // [sampler]
    sampler::SamplerConfig sampler;

    // [model], [train]
    nn::ModelSpec model = nn::ModelSpec::standard();
    nn::TrainConfig train;

    // [detect]
    int min_blob_area = -1;  ///< -1: 2 x inner x inner

    // [extract]
    int k = 4;
    int max_sweeps = 10;

    // [evaluate]
    double icdar2013_threshold = 0.90;
    double icdar2017_threshold = 0.75;
    bool overlays = true;

    // [ablate]
    std::vector<double> ablate_t_sim{0.7};
    std::vector<double> ablate_t_diff{0.4};
    std::vector<double> ablate_multipliers{1.0, 3.0, 8.0};
    int ablate_pages = 0;  ///< 0: every page

    /// Sets `section.key` from its text form. Throws on unknown keys or
    /// malformed values.
    void set(const std::string& dotted_key, const std::string& value);
    /// Every key in `section.key` form, in file order.
    static std::vector<std::string> keys();
    std::string get(const std::string& dotted_key) const;

    /// INI text with one section per module; doubles use their shortest
    /// round-trip form so that parse(to_text()) reproduces the config exactly.
    std::string to_text() const;
    static PipelineConfig parse(const std::string& text);
    void validate() const;

    fs::path run_path() const { return run_dir; }
    fs::path pages_path() const { return pages_dir.empty() ? run_path() / "pages" : fs::path(pages_dir); }
    fs::path gt_path() const { return gt_dir.empty() ? run_path() / "gt" : fs::path(gt_dir); }
    std::size_t effective_min_blob_area() const {
        return static_cast<std::size_t>(min_blob_area >= 0 ? min_blob_area : 2 * inner * inner);
    }
    /// Module configs with their seeds derived from `seed`.
    sampler::SamplerConfig sampler_config() const;
    nn::TrainConfig train_config() const;
    synth::SyntheticPageSpec synth_spec() const;
};

PipelineConfig load_config(const fs::path& path);
/// Writes `dir/config.ini` atomically.
void write_config_snapshot(const fs::path& dir, const PipelineConfig& cfg);

using Logger = std::function<void(const std::string&)>;
/// Default logger: one line to stderr.
void log_stderr(const std::string& line);

struct Corpus {
    std::vector<std::string> ids;  ///< file stems, sorted
    std::vector<imaging::BinarizedPage> pages;
};

/// Reads and binarizes every image in the pages directory (sorted by name,
/// truncated to max_pages when set).
Corpus load_corpus(const PipelineConfig& cfg);

/// Median character height over all pages of the corpus.
double corpus_character_height(const Corpus& corpus);
/// Explicit patch_height/patch_width when set, otherwise
/// patch_multiplier x corpus character height.
imaging::PatchGeometry corpus_geometry(const PipelineConfig& cfg, const Corpus& corpus);

struct DetectSummary {
    std::vector<std::string> ids;
    std::vector<int> blob_counts;
    std::vector<std::array<double, 3>> explained_variance;
};

struct AblationCell {
    double t_sim = 0.0;
    double t_diff = 0.0;
    double multiplier = 0.0;
    int patch_height = 0;
    eval::CorpusReport report;
    double mean_blob_error = 0.0;  ///< mean |blob count - gt line count|
};

struct AblationTable {
    std::vector<AblationCell> cells;
};

void cmd_synth(const PipelineConfig& cfg, const Logger& log = log_stderr);
sampler::PairDataset cmd_pairs(const PipelineConfig& cfg, const Logger& log = log_stderr);
nn::Checkpoint cmd_train(const PipelineConfig& cfg, const Logger& log = log_stderr);
DetectSummary cmd_detect(const PipelineConfig& cfg, const Logger& log = log_stderr);
void cmd_extract(const PipelineConfig& cfg, const Logger& log = log_stderr);
eval::CorpusReport cmd_evaluate(const PipelineConfig& cfg, const Logger& log = log_stderr);
/// One pairs/train/detect/extract/evaluate run per grid cell under
/// <run_dir>/ablate/cell_NN, reading the main run's pages and ground truth.
/// Writes ablate/table.tsv and ablate/plot.png.
AblationTable cmd_ablate(const PipelineConfig& cfg, const Logger& log = log_stderr);

/// Runs fn(i) for i in [0, n) on up to `jobs` threads. The exception of the
/// lowest failing index is rethrown.
void parallel_for(int n, int jobs, const std::function<void(int)>& fn);

}  // namespace utls::pipeline
