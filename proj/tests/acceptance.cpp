// Acceptance suite: one PASS/FAIL line per criterion.
//   utls_acceptance [--criterion N]... [--work DIR]

#include <CLI11.hpp>

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <random>
#include <sstream>

#include "utls/evaluator.hpp"
#include "utls/line_detector.hpp"
#include "utls/line_extractor.hpp"
#include "utls/pair_sampler.hpp"
#include "utls/pipeline.hpp"
#include "utls/synthetic.hpp"

using namespace utls;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1. Metric fixtures with hand-computed values.

eval::Region run_region(int id, std::uint32_t first, std::uint32_t count) {
    eval::Region r{id, {}};
    for (std::uint32_t i = 0; i < count; ++i) r.pixels.push_back(first + i);
    return r;
}

eval::RegionSet region_set(std::vector<eval::Region> regions) { return {100, 100, eval::RegionKind::prediction, std::move(regions)}; }

eval::RegionSet lines(int n) {
    std::vector<eval::Region> out;
    for (int i = 0; i < n; ++i) out.push_back(run_region(i + 1, static_cast<std::uint32_t>(200 * i), 100));
    return region_set(out);
}

Outcome metric_fixtures() {
    std::vector<std::pair<std::string, std::pair<double, double>>> fx;

    fx.push_back({"match score 90/110", {eval::match_score(run_region(1, 0, 100), run_region(2, 10, 100)), 90.0 / 110.0}});

    auto pred = lines(9);
    pred.regions.push_back(run_region(10, 1801, 20));
    pred.regions.push_back(run_region(11, 1850, 30));
    const auto r13 = eval::evaluate_icdar2013(lines(10), pred, 0.90);
    fx.push_back({"DR 9/10", {r13.DR, 0.9}});
    fx.push_back({"RA 9/11", {r13.RA, 0.8181818181818181}});
    fx.push_back({"FM", {r13.FM, 0.8571428571428571}});

    auto px = run_region(1, 20, 90);
    for (std::uint32_t i = 0; i < 10; ++i) px.pixels.push_back(1000 + i);
    const auto piu = eval::evaluate_icdar2017(region_set({run_region(1, 0, 110)}), region_set({px}), 0.75);
    fx.push_back({"pixel IU 90/10/20", {piu.pixel_iu, 0.75}});

    auto p17 = lines(8);
    p17.regions.push_back(run_region(9, 1600, 50));
    auto wide = run_region(10, 1800, 200);
    p17.regions.push_back(wide);
    const auto liu = eval::evaluate_icdar2017(lines(10), p17, 0.75);
    fx.push_back({"line IU 8/1/1", {liu.line_iu, 0.8}});

    std::vector<eval::Region> split{run_region(1, 0, 100), run_region(2, 200, 100), run_region(3, 400, 50),
                                    run_region(4, 450, 50)};
    const auto s13 = eval::evaluate_icdar2013(lines(3), region_set(split), 0.90);
    fx.push_back({"split line DR 2/3", {s13.DR, 2.0 / 3.0}});
    fx.push_back({"split line RA 2/4", {s13.RA, 0.5}});

    const auto perfect = eval::evaluate_icdar2013(lines(5), lines(5));
    fx.push_back({"perfect FM", {perfect.FM, 1.0}});

    int ok = 0;
    std::string failed;
    for (const auto& [name, v] : fx) {
        if (std::abs(v.first - v.second) <= 1e-9) ++ok;
        else failed += fmt(" [%s: %.12f vs %.12f]", name.c_str(), v.first, v.second);
    }
    const bool counts = liu.CL == 8 && liu.ML == 1 && liu.EL == 1 && piu.TP == 90 && piu.FP == 10 && piu.FN == 20 &&
                        r13.M == 9 && r13.N1 == 10 && r13.N2 == 11 && s13.M == 2;
    return {ok == static_cast<int>(fx.size()) && counts,
            fmt("%d/%zu fixtures within 1e-9, counts %s", ok, fx.size(), counts ? "ok" : "wrong") + failed};
}

// 2. Energy minimisation against enumeration.

imaging::Component point_component(int id, double row, double col) {
    imaging::Component c;
    c.id = id;
    c.centroid_row = row;
    c.centroid_col = col;
    c.pixels.push_back({static_cast<int>(std::lround(row)), static_cast<int>(std::lround(col))});
    c.bbox = {c.pixels[0].row, c.pixels[0].col, 1, 1};
    return c;
}

double enumerated_minimum(const extract::ComponentGraph& g, const extract::CostTable& costs) {
    std::vector<int> a(costs.n_components, 0);
    double best = std::numeric_limits<double>::infinity();
    while (true) {
        double e = 0.0;
        for (int c = 0; c < costs.n_components; ++c) e += costs(c, a[c]);
        for (const auto& p : g.neighbors)
            if (a[p.a] != a[p.b]) e += std::exp(-g.beta * p.distance);
        best = std::min(best, e);
        int i = 0;
        while (i < costs.n_components && ++a[i] == costs.n_labels) a[i++] = 0;
        if (i == costs.n_components) break;
    }
    return best;
}

struct EnergyInstance {
    extract::ComponentGraph graph;
    extract::CostTable costs;
};

// Components scattered around a few horizontal blob lines, close enough
// that the pairwise term competes with the data term.
EnergyInstance energy_instance(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int n = 2 + static_cast<int>(rng() % 9);
    const int labels = 1 + static_cast<int>(rng() % 3);
    std::vector<imaging::Component> blobs;
    std::vector<int> rows;
    for (int l = 0; l < labels; ++l) {
        imaging::Component b;
        b.id = l;
        const int row = 10 + static_cast<int>(rng() % 40);
        rows.push_back(row);
        for (int c = 0; c < 60; c += 2) b.pixels.push_back({row, c});
        blobs.push_back(b);
    }
    imaging::ComponentSet comps;
    for (int i = 0; i < n; ++i) {
        const double row = rows[rng() % rows.size()] + (u(rng) - 0.5) * 24.0;
        comps.components.push_back(point_component(i, std::max(0.0, row), u(rng) * 60.0));
    }
    EnergyInstance inst;
    inst.graph = extract::build_component_graph(comps, 1 + static_cast<int>(rng() % 4));
    inst.costs = extract::data_cost_table(comps, blobs);
    return inst;
}

Outcome energy_solver() {
    std::mt19937_64 rng(2024);
    int exact = 0;
    double worst = 1.0;
    int beta_zero_ok = 0;
    const int n = 200;
    for (int i = 0; i < n; ++i) {
        auto inst = energy_instance(rng);
        const auto a = extract::minimize_energy(inst.graph, inst.costs);
        const double e = extract::total_energy(inst.graph, inst.costs, a);
        const double opt = enumerated_minimum(inst.graph, inst.costs);
        if (e <= opt + 1e-9 * std::max(1.0, opt)) ++exact;
        worst = std::max(worst, opt > 0 ? e / opt : (e <= 1e-12 ? 1.0 : std::numeric_limits<double>::infinity()));

        inst.graph.beta = 0.0;
        beta_zero_ok += extract::minimize_energy(inst.graph, inst.costs) == extract::nearest_assignment(inst.costs);
    }
    const double rate = static_cast<double>(exact) / n;
    return {rate >= 0.95 && worst <= 1.02 && beta_zero_ok == n,
            fmt("%d/%d at the enumerated minimum (%.1f%%), worst ratio %.6f, beta=0 nearest %d/%d", exact, n,
                100.0 * rate, worst, beta_zero_ok, n)};
}

// 3. Similarity score properties and sampled pair re-verification.

int recount(const imaging::BinarizedPage& page, const sampler::Patch& p, const imaging::PatchGeometry& g) {
    int n = 0;
    for (int r = 0; r < g.h_p; ++r)
        for (int c = 0; c < g.w_p; ++c) n += page.fg_mask(p.origin_row + r, p.origin_col + c);
    return n;
}

Outcome pair_properties() {
    std::mt19937_64 rng(77);
    const int n = 10000;
    int violations = 0;
    for (int i = 0; i < n; ++i) {
        const std::int64_t a = static_cast<std::int64_t>(rng() % 5000);
        const std::int64_t b = static_cast<std::int64_t>(rng() % 5000);
        const std::int64_t k = 1 + static_cast<std::int64_t>(rng() % 50);
        const double s = sampler::similarity_score(a, b);
        if (s != sampler::similarity_score(b, a)) ++violations;
        if (std::abs(sampler::similarity_score(k * a, k * b) - s) > 1e-12) ++violations;
        if (!(s >= 0.0 && s <= 1.0)) ++violations;
        if (sampler::similarity_score(a, a) != 1.0) ++violations;
        if (a > 0 && sampler::similarity_score(0, a) != 0.0) ++violations;
    }
    if (sampler::similarity_score(0, 0) != 1.0) ++violations;

    // Sampled pairs from synthetic pages, each checked from raw mask pixels.
    synth::SyntheticPageSpec spec;
    std::vector<imaging::BinarizedPage> pages;
    for (int p = 0; p < 4; ++p)
        pages.push_back(imaging::binarize(synth::generate_page(spec, p).gray, {}, "page_" + std::to_string(p)));
    const auto geom = imaging::estimate_patch_geometry(pages[0]);
    sampler::SamplerConfig cfg;
    cfg.n_pairs = n;
    const auto ds = sampler::build_pair_dataset(pages, geom, cfg);
    const double area = static_cast<double>(geom.h_p) * geom.w_p;
    int bad_pairs = 0;
    for (const auto& pair : ds.pairs) {
        const auto& page = pages[pair.page_index];
        const int a1 = recount(page, pair.left, geom), a2 = recount(page, pair.right, geom);
        const double s = a1 == 0 && a2 == 0 ? 1.0 : static_cast<double>(std::min(a1, a2)) / std::max(a1, a2);
        bool ok = s == pair.score;
        switch (pair.strategy) {
            case sampler::Strategy::similar_by_count: ok = ok && s >= cfg.t_sim && pair.label == sampler::PairLabel::similar; break;
            case sampler::Strategy::different_by_count: ok = ok && s <= cfg.t_diff && pair.label == sampler::PairLabel::different; break;
            case sampler::Strategy::different_by_background:
                ok = ok && ((a1 / area <= cfg.bg_fraction) != (a2 / area <= cfg.bg_fraction)) &&
                     pair.label == sampler::PairLabel::different;
                break;
        }
        bad_pairs += !ok;
    }
    const bool count_ok = static_cast<int>(ds.pairs.size()) == n;
    return {violations == 0 && bad_pairs == 0 && count_ok,
            fmt("%d score pairs, %d property violations; %zu sampled pairs, %d fail re-verification", n, violations,
                ds.pairs.size(), bad_pairs)};
}

// 4. PCA against an SVD oracle.

double principal_angle(const Eigen::MatrixXd& u1, const Eigen::MatrixXd& u2) {
    const Eigen::MatrixXd residual = u2 - u1 * (u1.transpose() * u2);
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(residual);
    return std::asin(std::min(1.0, svd.singularValues()(0)));
}

Outcome pca_oracle() {
    std::mt19937_64 rng(31);
    std::normal_distribution<double> g(0.0, 1.0);
    double worst = 0.0;
    for (int trial = 0; trial < 5; ++trial) {
        const std::size_t n = 400;
        const int dim = 512;
        const Eigen::MatrixXd q = Eigen::HouseholderQR<Eigen::MatrixXd>(
                                      Eigen::MatrixXd::NullaryExpr(dim, dim, [&] { return g(rng); }))
                                      .householderQ();
        std::vector<float> data(n * dim);
        for (std::size_t i = 0; i < n; ++i) {
            Eigen::VectorXd coeff(dim);
            for (int j = 0; j < dim; ++j) coeff(j) = g(rng) * (j < 3 ? 12.0 - 3.0 * j : 0.5 / (1 + j));
            const Eigen::VectorXd v = q * coeff;
            for (int j = 0; j < dim; ++j) data[i * dim + j] = static_cast<float>(v(j) + 1.0);
        }
        const auto pcs = detect::principal_components(data, n, dim, 3);
        if (pcs.directions.size() != 3) return {false, "fewer than 3 directions"};
        Eigen::MatrixXd x(n, dim);
        for (std::size_t i = 0; i < n; ++i)
            for (int j = 0; j < dim; ++j) x(i, j) = data[i * dim + j];
        const Eigen::MatrixXd centred = x.rowwise() - x.colwise().mean();
        Eigen::BDCSVD<Eigen::MatrixXd> svd(centred, Eigen::ComputeThinV);
        Eigen::MatrixXd ours(dim, 3);
        for (int k = 0; k < 3; ++k)
            for (int j = 0; j < dim; ++j) ours(j, k) = pcs.directions[k][j];
        worst = std::max({worst, principal_angle(svd.matrixV().leftCols(3), ours),
                          principal_angle(ours, svd.matrixV().leftCols(3))});
    }

    // Exact rank 3 through the full pseudo-RGB path.
    const int dim = 512, rows = 16, cols = 20;
    std::vector<std::vector<double>> basis(3, std::vector<double>(dim));
    for (auto& b : basis)
        for (auto& v : b) v = g(rng);
    detect::EmbeddingGrid grid;
    grid.n_rows = rows;
    grid.n_cols = cols;
    grid.dim = dim;
    grid.cell_h = grid.cell_w = 10;
    grid.page_h = rows * 10;
    grid.page_w = cols * 10;
    grid.vectors.resize(static_cast<std::size_t>(rows) * cols * dim);
    for (int i = 0; i < rows * cols; ++i) {
        const double a = g(rng) * 4, b = g(rng) * 2, c = g(rng);
        for (int j = 0; j < dim; ++j)
            grid.vectors[static_cast<std::size_t>(i) * dim + j] =
                static_cast<float>(a * basis[0][j] + b * basis[1][j] + c * basis[2][j]);
    }
    const auto prgb = detect::pca_pseudo_rgb(grid);
    const double explained = prgb.explained_variance[0] + prgb.explained_variance[1] + prgb.explained_variance[2];
    return {worst < 1e-6 && std::abs(explained - 1.0) < 1e-6 && prgb.rank == 3,
            fmt("largest principal angle %.3e rad; rank-3 data explained %.9f%% (rank %d)", worst, 100.0 * explained,
                prgb.rank)};
}

// 5-7. Pipeline runs on synthetic pages.

pipeline::PipelineConfig run_config(const fs::path& dir) {
    pipeline::PipelineConfig cfg;
    cfg.run_dir = dir.string();
    cfg.seed = 1;
    cfg.synth_pages = 20;
    cfg.synth.n_lines = 10;
    cfg.sampler.n_pairs = 2000;
    cfg.model = nn::ModelSpec::compact();
    cfg.train.learning_rate = 1e-3;
    cfg.train.max_epochs = 10;
    cfg.icdar2013_threshold = 0.75;
    cfg.overlays = false;
    cfg.validate();
    return cfg;
}

void quiet_log(const std::string& line) { std::fprintf(stderr, "  %s\n", line.c_str()); }

Outcome training_loss(const fs::path& work) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto cfg = run_config(work / "training");
    fs::remove_all(cfg.run_path());
    pipeline::cmd_synth(cfg, quiet_log);
    const auto pairs = pipeline::cmd_pairs(cfg, quiet_log);
    const auto ckpt = pipeline::cmd_train(cfg, quiet_log);
    const double elapsed = seconds_since(t0);
    if (ckpt.history.empty()) return {false, "no training history"};
    const double v0 = ckpt.history.front().val_loss;
    double best = v0;
    int best_epoch = 0;
    for (const auto& rec : ckpt.history)
        if (rec.epoch >= 1 && rec.epoch <= 10 && rec.val_loss < best) best = rec.val_loss, best_epoch = rec.epoch;
    const double drop = 1.0 - best / v0;
    return {pairs.pairs.size() == 2000 && drop >= 0.30 && elapsed < 15 * 60,
            fmt("%zu pairs, val loss %.4f -> %.4f at epoch %d (%.1f%% drop), %.0f s", pairs.pairs.size(), v0, best,
                best_epoch, 100.0 * drop, elapsed)};
}

Outcome end_to_end(const fs::path& work) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto cfg = run_config(work / "end_to_end");
    fs::remove_all(cfg.run_path());
    pipeline::cmd_synth(cfg, quiet_log);
    pipeline::cmd_pairs(cfg, quiet_log);
    pipeline::cmd_train(cfg, quiet_log);
    const auto det = pipeline::cmd_detect(cfg, quiet_log);
    pipeline::cmd_extract(cfg, quiet_log);
    const auto report = pipeline::cmd_evaluate(cfg, quiet_log);
    const double elapsed = seconds_since(t0);
    int close = 0;
    for (int b : det.blob_counts) close += std::abs(b - cfg.synth.n_lines) <= 1;
    const int pages = static_cast<int>(det.blob_counts.size());
    const bool ok = pages == 20 && report.FM >= 0.85 && close >= 0.9 * pages && elapsed < 45 * 60;
    return {ok, fmt("%d pages, FM %.4f (DR %.4f, RA %.4f) at 0.75, blob count within 1 on %d/%d pages, %.0f s", pages,
                    report.FM, report.DR, report.RA, close, pages, elapsed)};
}

Outcome patch_ablation(const fs::path& work) {
    auto cfg = run_config(work / "ablation");
    cfg.synth_pages = 3;
    cfg.ablate_pages = 3;
    cfg.ablate_multipliers = {1.0, 3.0, 8.0};
    cfg.ablate_t_sim = {0.7};
    cfg.ablate_t_diff = {0.4};
    fs::remove_all(cfg.run_path());
    pipeline::cmd_synth(cfg, quiet_log);
    const auto table = pipeline::cmd_ablate(cfg, quiet_log);
    std::map<double, double> fm;
    std::string detail;
    bool all_ran = true;
    for (const auto& cell : table.cells) {
        fm[cell.multiplier] = cell.report.FM;
        all_ran = all_ran && cell.mean_blob_error >= 0.0;
        detail += fmt("%gx (patch %d): FM %.4f, line IU %.4f; ", cell.multiplier, cell.patch_height, cell.report.FM,
                      cell.report.line_iu);
    }
    if (fm.size() != 3) return {false, "missing ablation cells: " + detail};
    if (!all_ran) return {false, "a cell failed to run: " + detail};
    return {fm[3.0] > fm[1.0] && fm[3.0] > fm[8.0], detail};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"utls acceptance suite"};
    std::vector<int> criteria;
    std::string work = "acceptance_work";
    app.add_option("-c,--criterion", criteria, "criterion numbers (default: all)")->check(CLI::Range(1, 7));
    app.add_option("-w,--work", work, "scratch directory for pipeline runs");
    CLI11_PARSE(app, argc, argv);
    if (criteria.empty()) criteria = {1, 2, 3, 4, 5, 6, 7};

    const std::map<int, std::pair<std::string, std::function<Outcome()>>> table{
        {1, {"metric fixtures", metric_fixtures}},
        {2, {"energy minimisation vs enumeration", energy_solver}},
        {3, {"similarity score and pair re-verification", pair_properties}},
        {4, {"PCA subspace vs SVD oracle", pca_oracle}},
        {5, {"training loss on 2000 pairs", [&] { return training_loss(work); }}},
        {6, {"end-to-end synthetic pages", [&] { return end_to_end(work); }}},
        {7, {"patch-size ablation", [&] { return patch_ablation(work); }}},
    };

    bool all = true;
    for (int c : criteria) {
        const auto& [name, fn] = table.at(c);
        Outcome out;
        try {
            out = fn();
        } catch (const std::exception& e) {
            out = {false, std::string("error: ") + e.what()};
        }
        std::printf("criterion %d %s: %s | %s\n", c, name.c_str(), out.pass ? "PASS" : "FAIL", out.detail.c_str());
        std::fflush(stdout);
        all = all && out.pass;
    }
    return all ? 0 : 1;
}
