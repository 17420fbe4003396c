#pragma once

// Self-labelled patch pairs. Two crops are labelled similar or different
// purely from their foreground pixel counts, or from one of them being
// (almost) blank paper.

#include <array>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "utls/imaging.hpp"

namespace utls::sampler {

enum class Strategy { similar_by_count, different_by_count, different_by_background };
enum class PairLabel { similar, different };

std::string_view to_string(Strategy s);
std::string_view to_string(PairLabel l);
Strategy strategy_from_string(std::string_view s);
PairLabel label_from_string(std::string_view s);

struct Patch {
    GrayImage pixels;
    int origin_row = 0;
    int origin_col = 0;
    int fg_count = 0;
};

struct PatchPair {
    Patch left;
    Patch right;
    double score = 0.0;
    PairLabel label = PairLabel::similar;
    Strategy strategy = Strategy::similar_by_count;
    std::size_t page_index = 0;
    std::string source_id;
};

struct SamplerConfig {
    double t_sim = 0.7;
    double t_diff = 0.4;
    double bg_fraction = 0.01;
    int n_pairs = 30000;
    std::array<double, 3> strategy_mix{0.5, 0.25, 0.25};
    std::uint64_t rng_seed = 1;
    int max_attempts = 10000;

    void validate() const;
};

/// min(a1, a2) / max(a1, a2); two empty patches score 1.
double similarity_score(std::int64_t a1, std::int64_t a2);

/// Crops and foreground counts for one page. Counting uses a summed-area
/// table of the mask; crops are taken from the grayscale image.
class PageSampler {
public:
    PageSampler(const imaging::BinarizedPage& page, imaging::PatchGeometry geom);

    /// Rejection-samples crop pairs until the strategy's condition holds.
    /// Throws "strategy unsatisfiable on page" once cfg.max_attempts is spent.
    PatchPair sample(Strategy strategy, const SamplerConfig& cfg, std::mt19937_64& rng) const;

    int fg_count(int row, int col) const;
    Patch crop(int row, int col) const;

private:
    const imaging::BinarizedPage* page_;
    imaging::PatchGeometry geom_;
    std::vector<std::int32_t> integral_;
};

PatchPair sample_pair(const imaging::BinarizedPage& page, const imaging::PatchGeometry& geom,
                      Strategy strategy, const SamplerConfig& cfg, std::mt19937_64& rng);

/// Per-strategy counts: n x mix rounded by largest remainder (ties to the
/// earlier strategy), summing to exactly n.
std::array<int, 3> split_counts(int n, const std::array<double, 3>& mix);

/// Deterministic generator for pair `index` under `seed`.
std::mt19937_64 pair_stream(std::uint64_t seed, std::uint64_t index);

struct PairDataset {
    std::vector<PatchPair> pairs;
    std::array<int, 3> strategy_counts{};
    std::vector<std::string> source_ids;  ///< indexed by page_index
    imaging::PatchGeometry geometry;
};

PairDataset build_pair_dataset(const std::vector<imaging::BinarizedPage>& pages,
                               const imaging::PatchGeometry& geom, const SamplerConfig& cfg);

/// `dir/patches/*.png`, `dir/manifest.jsonl` (one JSON record per pair) and
/// `dir/summary.json` (per-strategy counts, geometry, sources).
void write_pair_dataset(const std::filesystem::path& dir, const PairDataset& dataset);
PairDataset read_pair_dataset(const std::filesystem::path& dir);

/// Hex SHA-256 of `dir/manifest.jsonl`.
std::string manifest_digest(const std::filesystem::path& dir);

}  // namespace utls::sampler
