#include <algorithm>
#include <charconv>
#include <fstream>
#include <sstream>

#include "utls/image_io.hpp"
#include "utls/pipeline.hpp"

namespace utls::pipeline {

namespace {

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const char* what) {
    throw Error("config: " + key + " = '" + value + "' is not " + what);
}

template <typename T>
T parse_integer(const std::string& key, const std::string& value) {
    T out{};
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end || value.empty()) bad_value(key, value, "an integer");
    return out;
}

double parse_double(const std::string& key, const std::string& value) {
    double out = 0.0;
    const auto* end = value.data() + value.size();
    const auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end || value.empty()) bad_value(key, value, "a number");
    return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1") return true;
    if (value == "false" || value == "0") return false;
    bad_value(key, value, "a boolean");
}

std::vector<std::string> split_list(const std::string& value) {
    std::vector<std::string> out;
    std::stringstream ss(value);
    std::string item;
    while (std::getline(ss, item, ',')) out.push_back(trim(item));
    if (out.size() == 1 && out[0].empty()) out.clear();
    return out;
}

std::string format_double(double v) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

template <typename T>
std::string join(const std::vector<T>& values, std::string (*fmt)(T)) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ',';
        out += fmt(values[i]);
    }
    return out;
}

std::string format_int(int v) { return std::to_string(v); }

struct Entry {
    const char* section;
    const char* key;
    std::function<std::string(const PipelineConfig&)> get;
    std::function<void(PipelineConfig&, const std::string&, const std::string&)> set;
};

template <typename T>
Entry int_entry(const char* section, const char* key, T PipelineConfig::*member) {
    return {section, key, [member](const PipelineConfig& c) { return std::to_string(c.*member); },
            [member](PipelineConfig& c, const std::string& k, const std::string& v) { c.*member = parse_integer<T>(k, v); }};
}

template <typename Get>
Entry int_ref(const char* section, const char* key, Get ref) {
    return {section, key, [ref](const PipelineConfig& c) { return std::to_string(ref(const_cast<PipelineConfig&>(c))); },
            [ref](PipelineConfig& c, const std::string& k, const std::string& v) {
                auto& field = ref(c);
                field = parse_integer<std::remove_reference_t<decltype(field)>>(k, v);
            }};
}

template <typename Get>
Entry double_ref(const char* section, const char* key, Get ref) {
    return {section, key, [ref](const PipelineConfig& c) { return format_double(ref(const_cast<PipelineConfig&>(c))); },
            [ref](PipelineConfig& c, const std::string& k, const std::string& v) { ref(c) = parse_double(k, v); }};
}

template <typename Get>
Entry double_list(const char* section, const char* key, Get ref) {
    return {section, key,
            [ref](const PipelineConfig& c) { return join<double>(ref(const_cast<PipelineConfig&>(c)), format_double); },
            [ref](PipelineConfig& c, const std::string& k, const std::string& v) {
                std::vector<double> out;
                for (const auto& item : split_list(v)) out.push_back(parse_double(k, item));
                ref(c) = std::move(out);
            }};
}

template <typename Get>
Entry string_ref(const char* section, const char* key, Get ref) {
    return {section, key, [ref](const PipelineConfig& c) { return ref(const_cast<PipelineConfig&>(c)); },
            [ref](PipelineConfig& c, const std::string&, const std::string& v) { ref(c) = v; }};
}

// Conv stack columns: `filters` defines the layer count, the other columns
// must match it.
Entry conv_column(const char* key, int nn::ConvLayerSpec::*member, bool defines_count) {
    return {"model", key,
            [member](const PipelineConfig& c) {
                std::vector<int> v;
                for (const auto& l : c.model.conv_layers) v.push_back(l.*member);
                return join<int>(v, format_int);
            },
            [member, defines_count](PipelineConfig& c, const std::string& k, const std::string& v) {
                const auto items = split_list(v);
                if (defines_count) c.model.conv_layers.resize(items.size());
                if (items.size() != c.model.conv_layers.size())
                    throw Error("config: " + k + " must list one value per conv layer (" +
                                std::to_string(c.model.conv_layers.size()) + ")");
                for (std::size_t i = 0; i < items.size(); ++i) c.model.conv_layers[i].*member = parse_integer<int>(k, items[i]);
            }};
}

const std::vector<Entry>& registry() {
    using C = PipelineConfig;
    static const std::vector<Entry> entries = [] {
        std::vector<Entry> e;
        e.push_back(string_ref("run", "run_dir", [](C& c) -> std::string& { return c.run_dir; }));
        e.push_back(string_ref("run", "pages_dir", [](C& c) -> std::string& { return c.pages_dir; }));
        e.push_back(string_ref("run", "gt_dir", [](C& c) -> std::string& { return c.gt_dir; }));
        e.push_back(int_entry("run", "seed", &C::seed));
        e.push_back(int_entry("run", "jobs", &C::jobs));
        e.push_back(int_entry("run", "max_pages", &C::max_pages));

        e.push_back(int_entry("synth", "pages", &C::synth_pages));
        e.push_back(int_ref("synth", "n_lines", [](C& c) -> int& { return c.synth.n_lines; }));
        e.push_back(int_ref("synth", "line_height", [](C& c) -> int& { return c.synth.line_height; }));
        e.push_back(int_ref("synth", "interline_gap", [](C& c) -> int& { return c.synth.interline_gap; }));
        e.push_back(double_ref("synth", "skew_degrees", [](C& c) -> double& { return c.synth.skew_degrees; }));
        e.push_back(double_ref("synth", "word_density", [](C& c) -> double& { return c.synth.word_density; }));
        e.push_back(int_ref("synth", "word_min", [](C& c) -> int& { return c.synth.word_min; }));
        e.push_back(int_ref("synth", "word_max", [](C& c) -> int& { return c.synth.word_max; }));
        e.push_back(int_ref("synth", "page_width", [](C& c) -> int& { return c.synth.page_width; }));
        e.push_back(int_ref("synth", "margin", [](C& c) -> int& { return c.synth.margin; }));
        e.push_back(double_ref("synth", "height_jitter", [](C& c) -> double& { return c.synth.height_jitter; }));
        e.push_back(double_ref("synth", "gap_jitter", [](C& c) -> double& { return c.synth.gap_jitter; }));
        e.push_back(double_ref("synth", "dot_rate", [](C& c) -> double& { return c.synth.dot_rate; }));

        e.push_back({"imaging", "binarization",
                     [](const C& c) { return std::string(c.binarize.method == imaging::BinarizeMethod::otsu ? "otsu" : "sauvola"); },
                     [](C& c, const std::string& k, const std::string& v) {
                         if (v == "otsu") c.binarize.method = imaging::BinarizeMethod::otsu;
                         else if (v == "sauvola") c.binarize.method = imaging::BinarizeMethod::sauvola;
                         else bad_value(k, v, "otsu or sauvola");
                     }});
        e.push_back(int_ref("imaging", "sauvola_window", [](C& c) -> int& { return c.binarize.sauvola_window; }));
        e.push_back(double_ref("imaging", "sauvola_k", [](C& c) -> double& { return c.binarize.sauvola_k; }));
        e.push_back(double_ref("imaging", "sauvola_range", [](C& c) -> double& { return c.binarize.sauvola_range; }));
        e.push_back(int_entry("imaging", "patch_height", &C::patch_height));
        e.push_back(int_entry("imaging", "patch_width", &C::patch_width));
        e.push_back(int_entry("imaging", "inner", &C::inner));
        e.push_back(double_ref("imaging", "patch_multiplier", [](C& c) -> double& { return c.patch_multiplier; }));

        e.push_back(double_ref("sampler", "t_sim", [](C& c) -> double& { return c.sampler.t_sim; }));
        e.push_back(double_ref("sampler", "t_diff", [](C& c) -> double& { return c.sampler.t_diff; }));
        e.push_back(double_ref("sampler", "bg_fraction", [](C& c) -> double& { return c.sampler.bg_fraction; }));
        e.push_back(int_ref("sampler", "n_pairs", [](C& c) -> int& { return c.sampler.n_pairs; }));
        e.push_back(double_ref("sampler", "mix_similar", [](C& c) -> double& { return c.sampler.strategy_mix[0]; }));
        e.push_back(double_ref("sampler", "mix_count", [](C& c) -> double& { return c.sampler.strategy_mix[1]; }));
        e.push_back(double_ref("sampler", "mix_background", [](C& c) -> double& { return c.sampler.strategy_mix[2]; }));
        e.push_back(int_ref("sampler", "max_attempts", [](C& c) -> int& { return c.sampler.max_attempts; }));

        e.push_back(conv_column("conv_filters", &nn::ConvLayerSpec::filters, true));
        e.push_back(conv_column("conv_kernels", &nn::ConvLayerSpec::kernel, false));
        e.push_back(conv_column("conv_strides", &nn::ConvLayerSpec::stride, false));
        e.push_back({"model", "conv_pools",
                     [](const C& c) {
                         std::vector<int> v;
                         for (const auto& l : c.model.conv_layers) v.push_back(l.pool ? 1 : 0);
                         return join<int>(v, format_int);
                     },
                     [](C& c, const std::string& k, const std::string& v) {
                         const auto items = split_list(v);
                         if (items.size() != c.model.conv_layers.size())
                             throw Error("config: " + k + " must list one value per conv layer (" +
                                         std::to_string(c.model.conv_layers.size()) + ")");
                         for (std::size_t i = 0; i < items.size(); ++i) c.model.conv_layers[i].pool = parse_bool(k, items[i]);
                     }});
        e.push_back(int_ref("model", "embedding_dim", [](C& c) -> int& { return c.model.embedding_dim; }));
        e.push_back({"model", "fc_layers", [](const C& c) { return join<int>(c.model.fc_layers, format_int); },
                     [](C& c, const std::string& k, const std::string& v) {
                         std::vector<int> out;
                         for (const auto& item : split_list(v)) out.push_back(parse_integer<int>(k, item));
                         c.model.fc_layers = std::move(out);
                     }});
        e.push_back(int_ref("model", "in_channels", [](C& c) -> int& { return c.model.in_channels; }));

        e.push_back(double_ref("train", "learning_rate", [](C& c) -> double& { return c.train.learning_rate; }));
        e.push_back(double_ref("train", "adam_beta1", [](C& c) -> double& { return c.train.adam_beta1; }));
        e.push_back(double_ref("train", "adam_beta2", [](C& c) -> double& { return c.train.adam_beta2; }));
        e.push_back(double_ref("train", "adam_epsilon", [](C& c) -> double& { return c.train.adam_epsilon; }));
        e.push_back(int_ref("train", "batch_size", [](C& c) -> int& { return c.train.batch_size; }));
        e.push_back(int_ref("train", "max_epochs", [](C& c) -> int& { return c.train.max_epochs; }));
        e.push_back(double_ref("train", "val_fraction", [](C& c) -> double& { return c.train.val_fraction; }));
        e.push_back(int_ref("train", "early_stop_patience", [](C& c) -> int& { return c.train.early_stop_patience; }));

        e.push_back(int_entry("detect", "min_blob_area", &C::min_blob_area));

        e.push_back(int_entry("extract", "k", &C::k));
        e.push_back(int_entry("extract", "max_sweeps", &C::max_sweeps));

        e.push_back(double_ref("evaluate", "icdar2013_threshold", [](C& c) -> double& { return c.icdar2013_threshold; }));
        e.push_back(double_ref("evaluate", "icdar2017_threshold", [](C& c) -> double& { return c.icdar2017_threshold; }));
        e.push_back({"evaluate", "overlays", [](const C& c) { return std::string(c.overlays ? "true" : "false"); },
                     [](C& c, const std::string& k, const std::string& v) { c.overlays = parse_bool(k, v); }});

        e.push_back(double_list("ablate", "t_sim", [](C& c) -> std::vector<double>& { return c.ablate_t_sim; }));
        e.push_back(double_list("ablate", "t_diff", [](C& c) -> std::vector<double>& { return c.ablate_t_diff; }));
        e.push_back(double_list("ablate", "patch_multipliers", [](C& c) -> std::vector<double>& { return c.ablate_multipliers; }));
        e.push_back(int_entry("ablate", "pages", &C::ablate_pages));
        return e;
    }();
    return entries;
}

const Entry& find_entry(const std::string& dotted_key) {
    for (const auto& e : registry())
        if (dotted_key == std::string(e.section) + "." + e.key) return e;
    throw Error("config: unknown key '" + dotted_key + "'");
}

}  // namespace

void PipelineConfig::set(const std::string& dotted_key, const std::string& value) {
    if (dotted_key == "model.preset") {
        if (value == "standard") model = nn::ModelSpec::standard();
        else if (value == "compact") model = nn::ModelSpec::compact();
        else bad_value(dotted_key, value, "standard or compact");
        return;
    }
    find_entry(dotted_key).set(*this, dotted_key, trim(value));
}

std::vector<std::string> PipelineConfig::keys() {
    std::vector<std::string> out;
    for (const auto& e : registry()) out.push_back(std::string(e.section) + "." + e.key);
    return out;
}

std::string PipelineConfig::get(const std::string& dotted_key) const { return find_entry(dotted_key).get(*this); }

std::string PipelineConfig::to_text() const {
    std::string out;
    std::string section;
    for (const auto& e : registry()) {
        if (section != e.section) {
            if (!section.empty()) out += '\n';
            section = e.section;
            out += "[" + section + "]\n";
        }
        out += std::string(e.key) + " = " + e.get(*this) + "\n";
    }
    return out;
}

PipelineConfig PipelineConfig::parse(const std::string& text) {
    PipelineConfig cfg;
    std::istringstream in(text);
    std::string line;
    std::string section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty() || t[0] == '#' || t[0] == ';') continue;
        if (t.front() == '[') {
            if (t.back() != ']') throw Error("config: line " + std::to_string(line_no) + ": unterminated section header");
            section = trim(std::string_view(t).substr(1, t.size() - 2));
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) throw Error("config: line " + std::to_string(line_no) + ": expected key = value");
        if (section.empty()) throw Error("config: line " + std::to_string(line_no) + ": key outside a section");
        cfg.set(section + "." + trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)));
    }
    return cfg;
}

void PipelineConfig::validate() const {
    if (run_dir.empty()) throw Error("config: run.run_dir must not be empty");
    if (jobs < 1) throw Error("config: run.jobs must be >= 1");
    if (max_pages < 0 || ablate_pages < 0) throw Error("config: page limits must be >= 0");
    if (synth_pages < 1) throw Error("config: synth.pages must be >= 1");
    synth.validate();
    if (patch_height < 0 || patch_width < 0) throw Error("config: patch sizes must be >= 0");
    if (inner < 1) throw Error("config: imaging.inner must be >= 1");
    if (!(patch_multiplier > 0.0)) throw Error("config: imaging.patch_multiplier must be > 0");
    sampler.validate();
    model.validate();
    train.validate();
    if (k < 1) throw Error("config: extract.k must be >= 1");
    if (max_sweeps < 1) throw Error("config: extract.max_sweeps must be >= 1");
    for (double t : {icdar2013_threshold, icdar2017_threshold})
        if (!(t >= 0.0 && t <= 1.0)) throw Error("config: evaluation thresholds must be in [0, 1]");
    if (ablate_t_sim.empty() || ablate_t_diff.empty() || ablate_multipliers.empty())
        throw Error("config: ablate lists must not be empty");
    for (double m : ablate_multipliers)
        if (!(m > 0.0)) throw Error("config: ablate.patch_multipliers must be > 0");
}

sampler::SamplerConfig PipelineConfig::sampler_config() const {
    auto s = sampler;
    s.rng_seed = seed * 0x9e3779b97f4a7c15ULL + 1;
    return s;
}

nn::TrainConfig PipelineConfig::train_config() const {
    auto t = train;
    t.rng_seed = seed * 0x9e3779b97f4a7c15ULL + 2;
    return t;
}

synth::SyntheticPageSpec PipelineConfig::synth_spec() const {
    auto s = synth;
    s.seed = seed;
    return s;
}

PipelineConfig load_config(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("config: cannot read " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return PipelineConfig::parse(ss.str());
    } catch (const Error& e) {
        throw Error(path.string() + ": " + e.what());
    }
}

void write_config_snapshot(const fs::path& dir, const PipelineConfig& cfg) {
    fs::create_directories(dir);
    io::write_file_atomic(dir / "config.ini", cfg.to_text());
}

}  // namespace utls::pipeline
