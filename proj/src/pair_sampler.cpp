#include "utls/pair_sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <set>
#include <sstream>

#include "utls/digest.hpp"
#include "utls/image_io.hpp"

namespace utls::sampler {
namespace fs = std::filesystem;
using nlohmann::json;

std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::similar_by_count: return "similar_by_count";
        case Strategy::different_by_count: return "different_by_count";
        case Strategy::different_by_background: return "different_by_background";
    }
    return "?";
}

std::string_view to_string(PairLabel l) { return l == PairLabel::similar ? "similar" : "different"; }

Strategy strategy_from_string(std::string_view s) {
    if (s == "similar_by_count") return Strategy::similar_by_count;
    if (s == "different_by_count") return Strategy::different_by_count;
    if (s == "different_by_background") return Strategy::different_by_background;
    throw Error("unknown sampling strategy: " + std::string(s));
}

PairLabel label_from_string(std::string_view s) {
    if (s == "similar") return PairLabel::similar;
    if (s == "different") return PairLabel::different;
    throw Error("unknown pair label: " + std::string(s));
}

void SamplerConfig::validate() const {
    if (!(0.0 <= t_diff && t_diff < t_sim && t_sim <= 1.0))
        throw Error("sampler: thresholds must satisfy 0 <= t_diff < t_sim <= 1");
    if (!(0.0 <= bg_fraction && bg_fraction < 0.5)) throw Error("sampler: bg_fraction must lie in [0, 0.5)");
    if (n_pairs < 0) throw Error("sampler: n_pairs must be non-negative");
    if (max_attempts < 1) throw Error("sampler: max_attempts must be positive");
    double sum = 0.0;
    for (double m : strategy_mix) {
        if (!(m >= 0.0)) throw Error("sampler: strategy_mix entries must be non-negative");
        sum += m;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw Error("sampler: strategy_mix must sum to 1");
}

double similarity_score(std::int64_t a1, std::int64_t a2) {
    if (a1 < 0 || a2 < 0) throw Error("similarity_score: counts must be non-negative");
    const auto hi = std::max(a1, a2);
    if (hi == 0) return 1.0;
    return static_cast<double>(std::min(a1, a2)) / static_cast<double>(hi);
}

PageSampler::PageSampler(const imaging::BinarizedPage& page, imaging::PatchGeometry geom)
    : page_(&page), geom_(geom) {
    if (page.rows() < geom.h_p || page.cols() < geom.w_p)
        throw Error("page " + page.source_id + " is smaller than the patch size");
    const int rows = page.rows();
    const int cols = page.cols();
    integral_.assign(static_cast<std::size_t>(rows + 1) * (cols + 1), 0);
    for (int r = 0; r < rows; ++r) {
        std::int32_t run = 0;
        for (int c = 0; c < cols; ++c) {
            run += page.fg_mask(r, c);
            integral_[static_cast<std::size_t>(r + 1) * (cols + 1) + c + 1] =
                integral_[static_cast<std::size_t>(r) * (cols + 1) + c + 1] + run;
        }
    }
}

int PageSampler::fg_count(int row, int col) const {
    const std::size_t stride = static_cast<std::size_t>(page_->cols()) + 1;
    const auto at = [&](int r, int c) { return integral_[static_cast<std::size_t>(r) * stride + c]; };
    const int r1 = row + geom_.h_p;
    const int c1 = col + geom_.w_p;
    return at(r1, c1) - at(row, c1) - at(r1, col) + at(row, col);
}

Patch PageSampler::crop(int row, int col) const {
    Patch p{GrayImage(geom_.h_p, geom_.w_p), row, col, fg_count(row, col)};
    for (int r = 0; r < geom_.h_p; ++r) {
        auto src = page_->gray.row(row + r).subspan(col, geom_.w_p);
        std::copy(src.begin(), src.end(), p.pixels.row(r).begin());
    }
    return p;
}

PatchPair PageSampler::sample(Strategy strategy, const SamplerConfig& cfg, std::mt19937_64& rng) const {
    std::uniform_int_distribution<int> row_dist(0, page_->rows() - geom_.h_p);
    std::uniform_int_distribution<int> col_dist(0, page_->cols() - geom_.w_p);
    const double area = static_cast<double>(geom_.h_p) * geom_.w_p;

    for (int attempt = 0; attempt < cfg.max_attempts; ++attempt) {
        const int r1 = row_dist(rng);
        const int c1 = col_dist(rng);
        const int r2 = row_dist(rng);
        const int c2 = col_dist(rng);
        const int a1 = fg_count(r1, c1);
        const int a2 = fg_count(r2, c2);
        const double s = similarity_score(a1, a2);

        bool accept = false;
        PairLabel label = PairLabel::different;
        switch (strategy) {
            case Strategy::similar_by_count:
                accept = s >= cfg.t_sim;
                label = PairLabel::similar;
                break;
            case Strategy::different_by_count:
                accept = s <= cfg.t_diff;
                break;
            case Strategy::different_by_background: {
                const bool bg1 = a1 / area <= cfg.bg_fraction;
                const bool bg2 = a2 / area <= cfg.bg_fraction;
                accept = bg1 != bg2;
                break;
            }
        }
        if (!accept) continue;
        return PatchPair{crop(r1, c1), crop(r2, c2), s, label, strategy, 0, page_->source_id};
    }
    throw Error("strategy unsatisfiable on page " + page_->source_id + " (" + std::string(to_string(strategy)) +
                ")");
}

PatchPair sample_pair(const imaging::BinarizedPage& page, const imaging::PatchGeometry& geom, Strategy strategy,
                      const SamplerConfig& cfg, std::mt19937_64& rng) {
    return PageSampler(page, geom).sample(strategy, cfg, rng);
}

std::array<int, 3> split_counts(int n, const std::array<double, 3>& mix) {
    std::array<int, 3> counts{};
    std::array<double, 3> remainder{};
    int assigned = 0;
    for (int s = 0; s < 3; ++s) {
        const double exact = n * mix[s];
        counts[s] = static_cast<int>(std::floor(exact));
        remainder[s] = exact - counts[s];
        assigned += counts[s];
    }
    std::array<int, 3> order{0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return remainder[a] > remainder[b]; });
    for (int i = 0; assigned < n; ++i, ++assigned) ++counts[order[i % 3]];
    return counts;
}

std::mt19937_64 pair_stream(std::uint64_t seed, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    return std::mt19937_64(seq);
}

PairDataset build_pair_dataset(const std::vector<imaging::BinarizedPage>& pages, const imaging::PatchGeometry& geom,
                               const SamplerConfig& cfg) {
    cfg.validate();
    geom.validate();
    if (pages.empty()) throw Error("pair dataset: no pages");

    std::vector<PageSampler> samplers;
    samplers.reserve(pages.size());
    PairDataset out;
    out.geometry = geom;
    for (const auto& p : pages) {
        samplers.emplace_back(p, geom);
        out.source_ids.push_back(p.source_id);
    }

    std::array<int, 3> quota = split_counts(cfg.n_pairs, cfg.strategy_mix);
    std::array<bool, 3> dead{};
    std::set<std::pair<std::size_t, int>> unsatisfiable;
    const std::size_t n_pages = pages.size();

    auto reassign = [&](int from) {
        const int left = quota[from];
        quota[from] = 0;
        std::array<double, 3> mix{};
        double total = 0.0;
        for (int s = 0; s < 3; ++s)
            if (!dead[s]) total += (mix[s] = cfg.strategy_mix[s]);
        if (total == 0.0)
            for (int s = 0; s < 3; ++s)
                if (!dead[s]) total += (mix[s] = 1.0);
        if (total == 0.0) throw Error("pair dataset unsatisfiable: no sampling strategy succeeds on any page");
        if (dead[1] && dead[2] && out.strategy_counts[1] + out.strategy_counts[2] == 0 &&
            cfg.strategy_mix[1] + cfg.strategy_mix[2] > 0.0)
            throw Error("pair dataset unsatisfiable: no page yields a different pair");
        for (double& m : mix) m /= total;
        const auto extra = split_counts(left, mix);
        for (int s = 0; s < 3; ++s) quota[s] += extra[s];
    };

    out.pairs.reserve(static_cast<std::size_t>(cfg.n_pairs));
    while (std::accumulate(quota.begin(), quota.end(), 0) > 0) {
        for (int s = 0; s < 3; ++s) {
            while (quota[s] > 0 && !dead[s]) {
                auto rng = pair_stream(cfg.rng_seed, out.pairs.size());
                const std::size_t start = std::uniform_int_distribution<std::size_t>(0, n_pages - 1)(rng);
                bool produced = false;
                for (std::size_t k = 0; k < n_pages && !produced; ++k) {
                    const std::size_t p = (start + k) % n_pages;
                    if (unsatisfiable.contains({p, s})) continue;
                    try {
                        PatchPair pair = samplers[p].sample(static_cast<Strategy>(s), cfg, rng);
                        pair.page_index = p;
                        out.pairs.push_back(std::move(pair));
                        produced = true;
                    } catch (const Error&) {
                        unsatisfiable.insert({p, s});
                    }
                }
                if (produced) {
                    --quota[s];
                    ++out.strategy_counts[s];
                } else {
                    dead[s] = true;
                    reassign(s);
                }
            }
        }
    }
    return out;
}

namespace {

std::string patch_name(std::size_t index, char side) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "patches/%06zu_%c.png", index, side);
    return buf;
}

json geometry_json(const imaging::PatchGeometry& g) {
    return json{{"h_p", g.h_p}, {"w_p", g.w_p}, {"h_i", g.h_i}, {"w_i", g.w_i}};
}

}  // namespace

void write_pair_dataset(const fs::path& dir, const PairDataset& dataset) {
    fs::create_directories(dir / "patches");
    std::ostringstream manifest;
    for (std::size_t i = 0; i < dataset.pairs.size(); ++i) {
        const auto& p = dataset.pairs[i];
        const std::string left = patch_name(i, 'l');
        const std::string right = patch_name(i, 'r');
        io::write_gray(dir / left, p.left.pixels);
        io::write_gray(dir / right, p.right.pixels);
        json rec{{"index", i},
                 {"left", left},
                 {"right", right},
                 {"score", p.score},
                 {"label", to_string(p.label)},
                 {"strategy", to_string(p.strategy)},
                 {"left_origin", {p.left.origin_row, p.left.origin_col}},
                 {"right_origin", {p.right.origin_row, p.right.origin_col}},
                 {"left_fg", p.left.fg_count},
                 {"right_fg", p.right.fg_count},
                 {"page_index", p.page_index},
                 {"source_id", p.source_id}};
        manifest << rec.dump() << '\n';
    }
    io::write_file_atomic(dir / "manifest.jsonl", manifest.str());

    json summary{{"n_pairs", dataset.pairs.size()},
                 {"strategy_counts",
                  {{std::string(to_string(Strategy::similar_by_count)), dataset.strategy_counts[0]},
                   {std::string(to_string(Strategy::different_by_count)), dataset.strategy_counts[1]},
                   {std::string(to_string(Strategy::different_by_background)), dataset.strategy_counts[2]}}},
                 {"geometry", geometry_json(dataset.geometry)},
                 {"sources", dataset.source_ids}};
    io::write_file_atomic(dir / "summary.json", summary.dump(2) + "\n");
}

PairDataset read_pair_dataset(const fs::path& dir) {
    std::ifstream sin(dir / "summary.json");
    if (!sin) throw Error("pair dataset: missing summary.json in " + dir.string());
    const json summary = json::parse(sin);
    PairDataset out;
    const auto& g = summary.at("geometry");
    out.geometry = {g.at("h_p").get<int>(), g.at("w_p").get<int>(), g.at("h_i").get<int>(), g.at("w_i").get<int>()};
    out.source_ids = summary.at("sources").get<std::vector<std::string>>();

    std::ifstream min(dir / "manifest.jsonl");
    if (!min) throw Error("pair dataset: missing manifest.jsonl in " + dir.string());
    std::string line;
    while (std::getline(min, line)) {
        if (line.empty()) continue;
        const json rec = json::parse(line);
        PatchPair p;
        p.left.pixels = io::read_gray(dir / rec.at("left").get<std::string>());
        p.right.pixels = io::read_gray(dir / rec.at("right").get<std::string>());
        p.left.origin_row = rec.at("left_origin")[0];
        p.left.origin_col = rec.at("left_origin")[1];
        p.right.origin_row = rec.at("right_origin")[0];
        p.right.origin_col = rec.at("right_origin")[1];
        p.left.fg_count = rec.at("left_fg");
        p.right.fg_count = rec.at("right_fg");
        p.score = rec.at("score");
        p.label = label_from_string(rec.at("label").get<std::string>());
        p.strategy = strategy_from_string(rec.at("strategy").get<std::string>());
        p.page_index = rec.at("page_index");
        p.source_id = rec.at("source_id");
        if (p.left.pixels.rows() != out.geometry.h_p || p.left.pixels.cols() != out.geometry.w_p ||
            p.right.pixels.rows() != out.geometry.h_p || p.right.pixels.cols() != out.geometry.w_p)
            throw Error("pair dataset: patch size does not match the recorded geometry");
        ++out.strategy_counts[static_cast<int>(p.strategy)];
        out.pairs.push_back(std::move(p));
    }
    return out;
}

std::string manifest_digest(const fs::path& dir) {
    std::ifstream in(dir / "manifest.jsonl", std::ios::binary);
    if (!in) throw Error("pair dataset: missing manifest.jsonl in " + dir.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return sha256_hex(ss.str());
}

}  // namespace utls::sampler
