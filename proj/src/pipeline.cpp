#include "utls/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <iostream>
#include <json.hpp>
#include <mutex>
#include <opencv2/imgproc.hpp>
#include <set>
#include <thread>

#include "utls/image_io.hpp"
#include "utls/line_detector.hpp"
#include "utls/line_extractor.hpp"

namespace utls::pipeline {

namespace {

std::string fmt_double(const char* pattern, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, pattern, v);
    return buf;
}

void ensure_dir(const fs::path& dir, const PipelineConfig& cfg, const Logger& log) {
    write_config_snapshot(dir, cfg);
    log("effective config -> " + (dir / "config.ini").string());
}

bool is_image(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".tif" || ext == ".tiff" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp";
}

std::string page_error(const std::string& id, const std::exception& e) { return id + ": " + e.what(); }

int count_labels(const LabelImage& labels) {
    std::set<int> seen;
    for (auto v : labels.data())
        if (v) seen.insert(v);
    return static_cast<int>(seen.size());
}

}  // namespace

void log_stderr(const std::string& line) { std::cerr << "[utls] " << line << '\n'; }

void parallel_for(int n, int jobs, const std::function<void(int)>& fn) {
    if (n <= 0) return;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
    const int workers = std::max(1, std::min(jobs, n));
    std::atomic<int> next{0};
    auto run = [&] {
        for (int i = next++; i < n; i = next++) {
            try {
                fn(i);
            } catch (...) {
                errors[static_cast<std::size_t>(i)] = std::current_exception();
            }
        }
    };
    if (workers == 1) {
        run();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < workers; ++t) pool.emplace_back(run);
        for (auto& t : pool) t.join();
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

Corpus load_corpus(const PipelineConfig& cfg) {
    const fs::path dir = cfg.pages_path();
    if (!fs::is_directory(dir)) throw Error("pages directory not found: " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.is_regular_file() && is_image(entry.path())) files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    if (cfg.max_pages > 0 && static_cast<int>(files.size()) > cfg.max_pages) files.resize(static_cast<std::size_t>(cfg.max_pages));
    if (files.empty()) throw Error("no page images in " + dir.string());
    Corpus corpus;
    corpus.ids.resize(files.size());
    corpus.pages.resize(files.size());
    parallel_for(static_cast<int>(files.size()), cfg.jobs, [&](int i) {
        const std::string id = files[static_cast<std::size_t>(i)].stem().string();
        try {
            corpus.ids[static_cast<std::size_t>(i)] = id;
            corpus.pages[static_cast<std::size_t>(i)] =
                imaging::binarize(io::read_gray(files[static_cast<std::size_t>(i)]), cfg.binarize, id);
        } catch (const Error& e) {
            throw Error(page_error(id, e));
        }
    });
    return corpus;
}

double corpus_character_height(const Corpus& corpus) {
    imaging::ComponentSet all;
    for (const auto& page : corpus.pages) {
        auto comps = imaging::connected_components(page);
        for (auto& c : comps.components) all.components.push_back(std::move(c));
    }
    return imaging::robust_character_height(all);
}

imaging::PatchGeometry corpus_geometry(const PipelineConfig& cfg, const Corpus& corpus) {
    int h = cfg.patch_height;
    if (h == 0) h = static_cast<int>(std::lround(cfg.patch_multiplier * corpus_character_height(corpus)));
    const int w = cfg.patch_width > 0 ? cfg.patch_width : h;
    return imaging::make_patch_geometry(h, w, cfg.inner);
}

void cmd_synth(const PipelineConfig& cfg, const Logger& log) {
    cfg.validate();
    const auto spec = cfg.synth_spec();
    const fs::path pages = cfg.pages_path();
    const fs::path gt = cfg.gt_path();
    ensure_dir(pages, cfg, log);
    ensure_dir(gt, cfg, log);
    parallel_for(cfg.synth_pages, cfg.jobs, [&](int i) {
        const auto page = synth::generate_page(spec, i);
        char name[32];
        std::snprintf(name, sizeof name, "page_%03d.png", i);
        io::write_gray(pages / name, page.gray);
        io::write_labels(gt / name, page.gt);
    });
    log("synth: " + std::to_string(cfg.synth_pages) + " pages of " + std::to_string(spec.n_lines) + " lines -> " +
        pages.string());
}

sampler::PairDataset cmd_pairs(const PipelineConfig& cfg, const Logger& log) {
    cfg.validate();
    const Corpus corpus = load_corpus(cfg);
    const auto geom = corpus_geometry(cfg, corpus);
    log("pairs: " + std::to_string(corpus.pages.size()) + " pages, patch " + std::to_string(geom.h_p) + "x" +
        std::to_string(geom.w_p) + ", inner " + std::to_string(geom.h_i) + "x" + std::to_string(geom.w_i));
    auto dataset = sampler::build_pair_dataset(corpus.pages, geom, cfg.sampler_config());
    const fs::path dir = cfg.run_path() / "pairs";
    ensure_dir(dir, cfg, log);
    sampler::write_pair_dataset(dir, dataset);
    log("pairs: " + std::to_string(dataset.pairs.size()) + " pairs (" + std::to_string(dataset.strategy_counts[0]) +
        " similar_by_count, " + std::to_string(dataset.strategy_counts[1]) + " different_by_count, " +
        std::to_string(dataset.strategy_counts[2]) + " different_by_background) -> " + dir.string());
    return dataset;
}

nn::Checkpoint cmd_train(const PipelineConfig& cfg, const Logger& log) {
    cfg.validate();
    const fs::path pairs_dir = cfg.run_path() / "pairs";
    const auto dataset = sampler::read_pair_dataset(pairs_dir);
    const std::string digest = sampler::manifest_digest(pairs_dir);
    auto model = nn::build_model(cfg.model, dataset.geometry.h_p, dataset.geometry.w_p,
                                 cfg.seed * 0x9e3779b97f4a7c15ULL + 3);
    log("train: " + std::to_string(dataset.pairs.size()) + " pairs, " + std::to_string(model.parameters().size()) +
        " parameters");
    auto ckpt = nn::train(std::move(model), dataset, cfg.train_config(), digest);
    for (const auto& h : ckpt.history)
        log("train: epoch " + std::to_string(h.epoch) + " train " + fmt_double("%.6f", h.train_loss) + " val " +
            fmt_double("%.6f", h.val_loss));
    const fs::path dir = cfg.run_path() / "checkpoint";
    ensure_dir(dir, cfg, log);
    nn::save_checkpoint(dir, ckpt);
    log("train: best epoch " + std::to_string(ckpt.best_epoch) + " -> " + dir.string());
    return ckpt;
}

DetectSummary cmd_detect(const PipelineConfig& cfg, const Logger& log) {
    cfg.validate();
    const auto ckpt = nn::load_checkpoint(cfg.run_path() / "checkpoint");
    const Corpus corpus = load_corpus(cfg);
    const auto geom = corpus_geometry(cfg, corpus);
    const fs::path dir = cfg.run_path() / "detect";
    ensure_dir(dir, cfg, log);
    const int n = static_cast<int>(corpus.pages.size());
    DetectSummary summary;
    summary.ids = corpus.ids;
    summary.blob_counts.assign(static_cast<std::size_t>(n), 0);
    summary.explained_variance.assign(static_cast<std::size_t>(n), {});
    const int inner_jobs = std::max(1, cfg.jobs / n);
    parallel_for(n, cfg.jobs, [&](int i) {
        const auto idx = static_cast<std::size_t>(i);
        const auto& page = corpus.pages[idx];
        try {
            const auto grid = detect::embed_page(ckpt, page, geom, inner_jobs);
            const auto prgb = detect::pca_pseudo_rgb(grid);
            const auto blobs =
                detect::morphological_cleanup(detect::threshold_blob_lines(prgb, page), cfg.effective_min_blob_area());
            io::write_rgb(dir / (corpus.ids[idx] + "_prgb.png"), prgb.image);
            io::write_mask(dir / (corpus.ids[idx] + "_blobs.png"), blobs.mask);
            summary.blob_counts[idx] = static_cast<int>(blobs.blobs.size());
            summary.explained_variance[idx] = prgb.explained_variance;
        } catch (const Error& e) {
            throw Error(page_error(corpus.ids[idx], e));
        }
    });
    nlohmann::json pages = nlohmann::json::array();
    for (int i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        const auto& ev = summary.explained_variance[idx];
        pages.push_back({{"page", summary.ids[idx]},
                         {"blobs", summary.blob_counts[idx]},
                         {"explained_variance", {ev[0], ev[1], ev[2]}}});
    }
    io::write_file_atomic(dir / "summary.json",
                          nlohmann::json{{"patch_h", geom.h_p}, {"patch_w", geom.w_p}, {"pages", pages}}.dump(2) + "\n");
    log("detect: " + std::to_string(n) + " pages -> " + dir.string());
    return summary;
}

void cmd_extract(const PipelineConfig& cfg, const Logger& log) {
    cfg.validate();
    const Corpus corpus = load_corpus(cfg);
    const fs::path detect_dir = cfg.run_path() / "detect";
    const fs::path dir = cfg.run_path() / "labels";
    ensure_dir(dir, cfg, log);
    const int n = static_cast<int>(corpus.pages.size());
    std::vector<double> energies(static_cast<std::size_t>(n), 0.0);
    std::vector<int> lines(static_cast<std::size_t>(n), 0);
    parallel_for(n, cfg.jobs, [&](int i) {
        const auto idx = static_cast<std::size_t>(i);
        const auto& id = corpus.ids[idx];
        try {
            const auto blobs = detect::index_blobs(io::read_mask(detect_dir / (id + "_blobs.png")));
            const auto comps = imaging::connected_components(corpus.pages[idx]);
            const auto labeling = extract::extract_lines(corpus.pages[idx], blobs, comps, cfg.k, cfg.max_sweeps);
            io::write_labels(dir / (id + ".png"), labeling.pixel_labels);
            io::write_file_atomic(dir / (id + "_lines.json"), extract::line_polygons_json(labeling.pixel_labels));
            energies[idx] = labeling.energy;
            lines[idx] = static_cast<int>(blobs.blobs.size());
        } catch (const Error& e) {
            throw Error(page_error(id, e));
        }
    });
    nlohmann::json pages = nlohmann::json::array();
    for (int i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        pages.push_back({{"page", corpus.ids[idx]}, {"lines", lines[idx]}, {"energy", energies[idx]}});
    }
    io::write_file_atomic(dir / "summary.json", nlohmann::json{{"pages", pages}}.dump(2) + "\n");
    log("extract: " + std::to_string(n) + " pages -> " + dir.string());
}

eval::CorpusReport cmd_evaluate(const PipelineConfig& cfg, const Logger& log) {
    cfg.validate();
    const Corpus corpus = load_corpus(cfg);
    const fs::path labels_dir = cfg.run_path() / "labels";
    const fs::path gt_dir = cfg.gt_path();
    const fs::path dir = cfg.run_path() / "report";
    ensure_dir(dir, cfg, log);
    const int n = static_cast<int>(corpus.pages.size());
    std::vector<eval::PageReport> reports(static_cast<std::size_t>(n));
    parallel_for(n, cfg.jobs, [&](int i) {
        const auto idx = static_cast<std::size_t>(i);
        const auto& id = corpus.ids[idx];
        try {
            const fs::path gt_file = gt_dir / (id + ".png");
            if (!fs::exists(gt_file)) throw Error("ground truth missing: " + gt_file.string());
            const auto gt = io::read_labels(gt_file);
            const auto pred = io::read_labels(labels_dir / (id + ".png"));
            reports[idx] = eval::evaluate_page(id, gt, pred, corpus.pages[idx].fg_mask, cfg.icdar2013_threshold,
                                               cfg.icdar2017_threshold);
            if (cfg.overlays) io::write_rgb(dir / (id + "_overlay.png"), eval::overlay(gt, pred));
        } catch (const Error& e) {
            throw Error(page_error(id, e));
        }
    });
    auto report = eval::aggregate_reports(std::move(reports));
    io::write_file_atomic(dir / "report.json", eval::report_json(report));
    io::write_file_atomic(dir / "report.tsv", eval::report_tsv(report));
    log("evaluate: FM " + fmt_double("%.4f", report.FM) + " DR " + fmt_double("%.4f", report.DR) + " RA " +
        fmt_double("%.4f", report.RA) + " pixel IU " + fmt_double("%.4f", report.pixel_iu) + " line IU " +
        fmt_double("%.4f", report.line_iu) + " -> " + dir.string());
    return report;
}

namespace {

RgbImage ablation_plot(const AblationTable& table) {
    const int n = static_cast<int>(table.cells.size());
    const int bar = 48, spacing = 24, left = 50, top = 30, plot_h = 240;
    const int width = std::max(320, left + n * (bar + spacing) + spacing);
    const int height = top + plot_h + 60;
    RgbImage img{height, width, std::vector<std::uint8_t>(static_cast<std::size_t>(width) * height * 3, 255)};
    cv::Mat m(height, width, CV_8UC3, img.rgb.data());
    const cv::Scalar axis(0, 0, 0), fill(70, 110, 180), grid(210, 210, 210);
    for (int t = 0; t <= 4; ++t) {
        const int y = top + plot_h - t * plot_h / 4;
        cv::line(m, {left, y}, {width - 10, y}, grid, 1);
        cv::putText(m, fmt_double("%.2f", t / 4.0), {5, y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4, axis, 1);
    }
    cv::line(m, {left, top}, {left, top + plot_h}, axis, 1);
    cv::line(m, {left, top + plot_h}, {width - 10, top + plot_h}, axis, 1);
    cv::putText(m, "FM per cell", {left, 18}, cv::FONT_HERSHEY_SIMPLEX, 0.5, axis, 1);
    for (int i = 0; i < n; ++i) {
        const auto& c = table.cells[static_cast<std::size_t>(i)];
        const int x = left + spacing + i * (bar + spacing);
        const int h = static_cast<int>(std::lround(std::clamp(c.report.FM, 0.0, 1.0) * plot_h));
        if (h > 0) cv::rectangle(m, {x, top + plot_h - h}, {x + bar - 1, top + plot_h - 1}, fill, cv::FILLED);
        cv::putText(m, fmt_double("%.3f", c.report.FM), {x, top + plot_h - h - 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4, axis, 1);
        cv::putText(m, "x" + fmt_double("%g", c.multiplier), {x, top + plot_h + 16}, cv::FONT_HERSHEY_SIMPLEX, 0.4, axis, 1);
        cv::putText(m, fmt_double("%g", c.t_sim) + "/" + fmt_double("%g", c.t_diff), {x, top + plot_h + 32},
                    cv::FONT_HERSHEY_SIMPLEX, 0.35, axis, 1);
    }
    return img;
}

}  // namespace

AblationTable cmd_ablate(const PipelineConfig& cfg, const Logger& log) {
    cfg.validate();
    const fs::path dir = cfg.run_path() / "ablate";
    ensure_dir(dir, cfg, log);
    AblationTable table;
    int cell_index = 0;
    for (double t_sim : cfg.ablate_t_sim)
        for (double t_diff : cfg.ablate_t_diff)
            for (double mult : cfg.ablate_multipliers) {
                if (!(t_diff < t_sim)) {
                    log("ablate: skipping t_sim " + fmt_double("%g", t_sim) + " / t_diff " + fmt_double("%g", t_diff));
                    continue;
                }
                char name[32];
                std::snprintf(name, sizeof name, "cell_%02d", cell_index++);
                PipelineConfig cell = cfg;
                cell.run_dir = (dir / name).string();
                cell.pages_dir = cfg.pages_path().string();
                cell.gt_dir = cfg.gt_path().string();
                cell.max_pages = cfg.ablate_pages;
                cell.sampler.t_sim = t_sim;
                cell.sampler.t_diff = t_diff;
                cell.patch_multiplier = mult;
                cell.patch_height = 0;
                cell.patch_width = 0;
                AblationCell result{t_sim, t_diff, mult, 0, {}, 0.0};
                log(std::string("ablate: ") + name + " t_sim " + fmt_double("%g", t_sim) + " t_diff " +
                    fmt_double("%g", t_diff) + " x" + fmt_double("%g", mult));
                try {
                    const auto dataset = cmd_pairs(cell, log);
                    result.patch_height = dataset.geometry.h_p;
                    cmd_train(cell, log);
                    const auto detected = cmd_detect(cell, log);
                    cmd_extract(cell, log);
                    result.report = cmd_evaluate(cell, log);
                    double err = 0.0;
                    for (std::size_t i = 0; i < detected.ids.size(); ++i) {
                        const auto gt = io::read_labels(cell.gt_path() / (detected.ids[i] + ".png"));
                        err += std::abs(detected.blob_counts[i] - count_labels(gt));
                    }
                    result.mean_blob_error = detected.ids.empty() ? 0.0 : err / static_cast<double>(detected.ids.size());
                } catch (const Error& e) {
                    // A cell whose pipeline breaks down scores zero.
                    log(std::string("ablate: ") + name + " failed: " + e.what());
                    result.report = eval::CorpusReport{};
                    result.mean_blob_error = -1.0;
                }
                table.cells.push_back(std::move(result));
            }
    std::string tsv = "cell\tt_sim\tt_diff\tmultiplier\tpatch_h\tFM\tDR\tRA\tpixel_iu\tline_iu\tmean_blob_error\n";
    for (std::size_t i = 0; i < table.cells.size(); ++i) {
        const auto& c = table.cells[i];
        char row[320];
        std::snprintf(row, sizeof row, "%zu\t%g\t%g\t%g\t%d\t%.6f\t%.6f\t%.6f\t%.6f\t%.6f\t%.3f\n", i, c.t_sim, c.t_diff,
                      c.multiplier, c.patch_height, c.report.FM, c.report.DR, c.report.RA, c.report.pixel_iu,
                      c.report.line_iu, c.mean_blob_error);
        tsv += row;
    }
    io::write_file_atomic(dir / "table.tsv", tsv);
    io::write_rgb(dir / "plot.png", ablation_plot(table));
    log("ablate: " + std::to_string(table.cells.size()) + " cells -> " + (dir / "table.tsv").string());
    return table;
}

}  // namespace utls::pipeline
