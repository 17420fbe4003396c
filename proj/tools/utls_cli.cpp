// utls: unsupervised text line segmentation, one subcommand per stage.

#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>

#include "utls/pipeline.hpp"
#include "utls/simd/kernels.hpp"

namespace pl = utls::pipeline;

namespace {

struct CommonOptions {
    std::string config_path;
    std::string run_dir;
    std::vector<std::string> overrides;
    int jobs = 0;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
    cmd->add_option("-c,--config", opts.config_path, std::string("config file (default: $") + pl::kConfigEnv + ")");
    cmd->add_option("-r,--run", opts.run_dir, "run directory (overrides run.run_dir)");
    cmd->add_option("-s,--set", opts.overrides, "override a config value, section.key=value")->take_all();
    cmd->add_option("-j,--jobs", opts.jobs, "page-level worker threads")->check(CLI::PositiveNumber);
}

pl::PipelineConfig effective_config(const CommonOptions& opts) {
    pl::PipelineConfig cfg;
    std::string path = opts.config_path;
    if (path.empty())
        if (const char* env = std::getenv(pl::kConfigEnv)) path = env;
    if (!path.empty()) cfg = pl::load_config(path);
    for (const auto& kv : opts.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw utls::Error("--set expects section.key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (!opts.run_dir.empty()) cfg.run_dir = opts.run_dir;
    if (opts.jobs > 0) cfg.jobs = opts.jobs;
    cfg.validate();
    return cfg;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Unsupervised text line segmentation"};
    app.require_subcommand(1);
    CommonOptions opts;

    struct Stage {
        const char* name;
        const char* help;
        std::function<void(const pl::PipelineConfig&)> run;
    };
    const std::vector<Stage> stages = {
        {"synth", "generate a synthetic corpus (pages/ and gt/)", [](const auto& c) { pl::cmd_synth(c); }},
        {"pairs", "sample self-labelled patch pairs (pairs/)", [](const auto& c) { pl::cmd_pairs(c); }},
        {"train", "train the siamese network (checkpoint/)", [](const auto& c) { pl::cmd_train(c); }},
        {"detect", "pseudo-RGB and blob-line masks (detect/)", [](const auto& c) { pl::cmd_detect(c); }},
        {"extract", "assign components to lines (labels/)", [](const auto& c) { pl::cmd_extract(c); }},
        {"evaluate", "score labels against ground truth (report/)", [](const auto& c) { pl::cmd_evaluate(c); }},
        {"ablate", "sweep sampler thresholds and patch sizes (ablate/)", [](const auto& c) { pl::cmd_ablate(c); }},
    };
    std::vector<CLI::App*> commands;
    for (const auto& s : stages) {
        auto* cmd = app.add_subcommand(s.name, s.help);
        add_common(cmd, opts);
        commands.push_back(cmd);
    }
    bool print_only = false;
    auto* show = app.add_subcommand("config", "print the effective configuration");
    add_common(show, opts);
    show->callback([&] { print_only = true; });

    CLI11_PARSE(app, argc, argv);

    try {
        const auto cfg = effective_config(opts);
        if (print_only) {
            std::cout << cfg.to_text();
            return 0;
        }
        pl::log_stderr(std::string("kernels: ") + std::string(utls::simd::isa_name(utls::simd::active_isa())));
        for (std::size_t i = 0; i < stages.size(); ++i)
            if (commands[i]->parsed()) stages[i].run(cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
