#include "utls/siamese_net.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <random>
#include <sstream>

#include "utls/digest.hpp"
#include "utls/image_io.hpp"

namespace utls::nn {
namespace fs = std::filesystem;
using nlohmann::json;

ModelSpec ModelSpec::standard() {
    ModelSpec s;
    s.conv_layers = {{64, 7, 2, true}, {128, 5, 1, true}, {256, 3, 1, false}, {256, 3, 1, false}, {256, 3, 1, true}};
    return s;
}

ModelSpec ModelSpec::compact() {
    ModelSpec s;
    s.conv_layers = {{16, 7, 2, true}, {32, 5, 1, true}, {32, 3, 1, false}, {32, 3, 1, false}, {32, 3, 1, true}};
    return s;
}

void ModelSpec::validate() const {
    if (conv_layers.size() != 5) throw Error("model spec: a branch has exactly 5 convolutional layers");
    for (std::size_t i = 0; i < conv_layers.size(); ++i) {
        const auto& c = conv_layers[i];
        if (c.filters < 1 || c.kernel < 1 || c.kernel % 2 == 0 || c.stride < 1)
            throw Error("model spec: conv" + std::to_string(i + 1) +
                        " needs positive filters, an odd kernel and a positive stride");
    }
    if (embedding_dim != 512) throw Error("model spec: the representation layer has 512 dimensions");
    if (fc_layers.empty() || fc_layers.back() != 1) throw Error("model spec: head widths must end in 1");
    for (int w : fc_layers)
        if (w < 1) throw Error("model spec: head widths must be positive");
    if (in_channels != 1 && in_channels != 3) throw Error("model spec: in_channels must be 1 or 3");
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw Error("train config: learning_rate must be positive");
    if (!(val_fraction > 0.0 && val_fraction < 0.5)) throw Error("train config: val_fraction must lie in (0, 0.5)");
    if (batch_size < 1) throw Error("train config: batch_size must be positive");
    if (max_epochs < 0) throw Error("train config: max_epochs must be non-negative");
    if (early_stop_patience < 1) throw Error("train config: early_stop_patience must be positive");
}

SiameseNet::SiameseNet(ModelSpec spec, int patch_h, int patch_w, std::uint64_t init_seed)
    : spec_(std::move(spec)), patch_h_(patch_h), patch_w_(patch_w) {
    spec_.validate();
    if (patch_h < 1 || patch_w < 1) throw Error("model: patch size must be positive");

    std::size_t offset = 0;
    int h = patch_h;
    int w = patch_w;
    int channels = spec_.in_channels;
    for (std::size_t i = 0; i < spec_.conv_layers.size(); ++i) {
        const auto& cs = spec_.conv_layers[i];
        ConvLayer layer;
        layer.shape = {channels, cs.filters, cs.kernel, cs.stride};
        layer.pool = cs.pool;
        layer.in_h = h;
        layer.in_w = w;
        layer.out_h = layer.shape.out_dim(h);
        layer.out_w = layer.shape.out_dim(w);
        const std::string name = "conv" + std::to_string(i + 1);
        if (layer.out_h < 1 || layer.out_w < 1)
            throw Error("patch " + std::to_string(patch_h) + "x" + std::to_string(patch_w) + " too small: " + name +
                        " output would be empty");
        h = layer.out_h;
        w = layer.out_w;
        if (layer.pool) {
            h /= 2;
            w /= 2;
            if (h < 1 || w < 1)
                throw Error("patch " + std::to_string(patch_h) + "x" + std::to_string(patch_w) +
                            " too small: pool after " + name + " output would be empty");
        }
        layer.w_off = offset;
        offset += static_cast<std::size_t>(cs.filters) * layer.shape.patch_len();
        layer.b_off = offset;
        offset += cs.filters;
        channels = cs.filters;
        convs_.push_back(layer);
    }
    final_h_ = h;
    final_w_ = w;

    auto add_dense = [&](int in, int out, bool relu) {
        DenseLayer d{in, out, relu, offset, 0};
        offset += static_cast<std::size_t>(in) * out;
        d.b_off = offset;
        offset += out;
        return d;
    };
    embed_layer_ = add_dense(channels, spec_.embedding_dim, true);
    int in = 2 * spec_.embedding_dim;
    for (std::size_t i = 0; i < spec_.fc_layers.size(); ++i) {
        const bool last = i + 1 == spec_.fc_layers.size();
        head_.push_back(add_dense(in, spec_.fc_layers[i], !last));
        in = spec_.fc_layers[i];
    }

    params_.assign(offset, 0.0f);
    std::mt19937_64 rng(init_seed);
    auto fill = [&](std::size_t off, std::size_t count, int fan_in, double gain) {
        std::normal_distribution<float> dist(0.0f, static_cast<float>(std::sqrt(gain / fan_in)));
        for (std::size_t i = 0; i < count; ++i) params_[off + i] = dist(rng);
    };
    for (const auto& c : convs_)
        fill(c.w_off, static_cast<std::size_t>(c.shape.out_c) * c.shape.patch_len(), c.shape.patch_len(), 2.0);
    fill(embed_layer_.w_off, static_cast<std::size_t>(embed_layer_.in) * embed_layer_.out, embed_layer_.in, 2.0);
    for (const auto& d : head_)
        fill(d.w_off, static_cast<std::size_t>(d.in) * d.out, d.in, d.relu ? 2.0 : 1.0);
}

struct SiameseNet::BranchCache {
    std::vector<std::vector<float>> cols;
    std::vector<Tensor> conv_out;  // post-activation
    std::vector<std::vector<int>> argmax;
    Matrix gap;
    Matrix embedding;
};

Matrix SiameseNet::branch_forward(const Tensor& input, BranchCache* cache) const {
    if (cache) {
        cache->cols.resize(convs_.size());
        cache->conv_out.resize(convs_.size());
        cache->argmax.resize(convs_.size());
    }
    Tensor x = input;
    for (std::size_t i = 0; i < convs_.size(); ++i) {
        const auto& c = convs_[i];
        Tensor y = conv_forward(x, c.shape, params_.data() + c.w_off, params_.data() + c.b_off,
                                cache ? &cache->cols[i] : nullptr);
        relu_inplace(y.data);
        if (c.pool) {
            x = maxpool_forward(y, cache ? &cache->argmax[i] : nullptr);
            if (cache) cache->conv_out[i] = std::move(y);
        } else {
            if (cache) cache->conv_out[i] = y;
            x = std::move(y);
        }
    }
    Matrix gap = global_avg_pool(x);
    Matrix emb = dense_forward(gap, params_.data() + embed_layer_.w_off, params_.data() + embed_layer_.b_off,
                               embed_layer_.out);
    relu_inplace(emb.data);
    if (cache) {
        cache->gap = std::move(gap);
        cache->embedding = emb;
    }
    return emb;
}

void SiameseNet::branch_backward(const Matrix& d_embedding, const BranchCache& cache, std::span<float> grad) const {
    Matrix d = d_embedding;
    relu_backward_inplace(cache.embedding.data, d.data);
    Matrix dgap = dense_backward(d, cache.gap, params_.data() + embed_layer_.w_off, grad.data() + embed_layer_.w_off,
                                 grad.data() + embed_layer_.b_off, true);
    Tensor dx = global_avg_pool_backward(dgap, final_h_, final_w_);
    for (std::size_t i = convs_.size(); i-- > 0;) {
        const auto& c = convs_[i];
        if (c.pool) dx = maxpool_backward(dx, cache.argmax[i], c.out_h, c.out_w);
        relu_backward_inplace(cache.conv_out[i].data, dx.data);
        dx = conv_backward(dx, c.shape, c.in_h, c.in_w, params_.data() + c.w_off, cache.cols[i],
                           grad.data() + c.w_off, grad.data() + c.b_off, i > 0);
    }
}

namespace {

Tensor stack_inputs(std::span<const float> left, std::span<const float> right, int n, int channels, int h, int w) {
    Tensor t(channels, right.empty() ? n : 2 * n, h, w);
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    const std::size_t block = static_cast<std::size_t>(n) * plane;
    for (int c = 0; c < channels; ++c) {
        std::copy_n(left.data() + c * block, block, t.plane_ptr(c, 0));
        if (!right.empty()) std::copy_n(right.data() + c * block, block, t.plane_ptr(c, n));
    }
    return t;
}

Matrix concat_pairs(const Matrix& emb, int n) {
    Matrix x(n, 2 * emb.cols);
    for (int i = 0; i < n; ++i) {
        std::copy_n(emb.row(i), emb.cols, x.row(i));
        std::copy_n(emb.row(n + i), emb.cols, x.row(i) + emb.cols);
    }
    return x;
}

double bce_with_logit(double z, double y) { return std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) { return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z)); }

}  // namespace

void SiameseNet::embed(std::span<const float> inputs, int n, std::span<float> out) const {
    if (inputs.size() != input_size() * static_cast<std::size_t>(n))
        throw Error("embed: input buffer does not hold n patches");
    if (out.size() != static_cast<std::size_t>(n) * spec_.embedding_dim)
        throw Error("embed: output buffer has the wrong size");
    if (n == 0) return;
    Tensor t = stack_inputs(inputs, {}, n, spec_.in_channels, patch_h_, patch_w_);
    Matrix emb = branch_forward(t, nullptr);
    std::copy(emb.data.begin(), emb.data.end(), out.begin());
}

std::vector<float> SiameseNet::classify(std::span<const float> left, std::span<const float> right, int n) const {
    if (n == 0) return {};
    Tensor t = stack_inputs(left, right, n, spec_.in_channels, patch_h_, patch_w_);
    Matrix x = concat_pairs(branch_forward(t, nullptr), n);
    for (const auto& d : head_) {
        x = dense_forward(x, params_.data() + d.w_off, params_.data() + d.b_off, d.out);
        if (d.relu) relu_inplace(x.data);
    }
    std::vector<float> p(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) p[i] = static_cast<float>(sigmoid(x.row(i)[0]));
    return p;
}

double SiameseNet::loss_and_gradient(std::span<const float> left, std::span<const float> right,
                                     std::span<const float> labels, int n, std::span<float> grad) const {
    const bool want_grad = !grad.empty();
    if (want_grad) {
        if (grad.size() != params_.size()) throw Error("gradient buffer has the wrong size");
        std::fill(grad.begin(), grad.end(), 0.0f);
    }
    Tensor t = stack_inputs(left, right, n, spec_.in_channels, patch_h_, patch_w_);
    BranchCache cache;
    Matrix emb = branch_forward(t, want_grad ? &cache : nullptr);

    std::vector<Matrix> acts{concat_pairs(emb, n)};
    for (const auto& d : head_) {
        Matrix y = dense_forward(acts.back(), params_.data() + d.w_off, params_.data() + d.b_off, d.out);
        if (d.relu) relu_inplace(y.data);
        acts.push_back(std::move(y));
    }

    double loss = 0.0;
    Matrix dz(n, 1);
    for (int i = 0; i < n; ++i) {
        const double z = acts.back().row(i)[0];
        loss += bce_with_logit(z, labels[i]);
        dz.row(i)[0] = static_cast<float>((sigmoid(z) - labels[i]) / n);
    }
    loss /= n;
    if (!want_grad) return loss;

    Matrix d = std::move(dz);
    for (std::size_t i = head_.size(); i-- > 0;) {
        const auto& layer = head_[i];
        if (layer.relu) relu_backward_inplace(acts[i + 1].data, d.data);
        d = dense_backward(d, acts[i], params_.data() + layer.w_off, grad.data() + layer.w_off,
                           grad.data() + layer.b_off, true);
    }
    Matrix demb(2 * n, spec_.embedding_dim);
    for (int i = 0; i < n; ++i) {
        std::copy_n(d.row(i), spec_.embedding_dim, demb.row(i));
        std::copy_n(d.row(i) + spec_.embedding_dim, spec_.embedding_dim, demb.row(n + i));
    }
    branch_backward(demb, cache, grad);
    return loss;
}

void normalize_patch(const GrayImage& patch, int channels, int index, int batch, std::span<float> dst) {
    const std::size_t plane = patch.size();
    for (int c = 0; c < channels; ++c) {
        float* out = dst.data() + (static_cast<std::size_t>(c) * batch + index) * plane;
        const auto px = patch.data();
        for (std::size_t i = 0; i < plane; ++i) out[i] = static_cast<float>(255 - px[i]) / 255.0f;
    }
}

SiameseNet build_model(const ModelSpec& spec, int patch_h, int patch_w, std::uint64_t init_seed) {
    return SiameseNet(spec, patch_h, patch_w, init_seed);
}

namespace {

struct PreparedPairs {
    std::vector<std::vector<float>> left, right;  // one (C, H, W) block per pair
    std::vector<float> labels;
};

PreparedPairs prepare(const SiameseNet& net, const sampler::PairDataset& pairs) {
    PreparedPairs out;
    const int c = net.spec().in_channels;
    for (std::size_t i = 0; i < pairs.pairs.size(); ++i) {
        const auto& p = pairs.pairs[i];
        for (const GrayImage* img : {&p.left.pixels, &p.right.pixels})
            if (img->rows() != net.patch_h() || img->cols() != net.patch_w())
                throw Error("train: patch size mismatch at pair " + std::to_string(i));
        std::vector<float> l(net.input_size()), r(net.input_size());
        normalize_patch(p.left.pixels, c, 0, 1, l);
        normalize_patch(p.right.pixels, c, 0, 1, r);
        out.left.push_back(std::move(l));
        out.right.push_back(std::move(r));
        out.labels.push_back(p.label == sampler::PairLabel::similar ? 1.0f : 0.0f);
    }
    return out;
}

void pack(const PreparedPairs& data, std::span<const std::size_t> idx, const SiameseNet& net, std::vector<float>& left,
          std::vector<float>& right, std::vector<float>& labels) {
    const int b = static_cast<int>(idx.size());
    const int channels = net.spec().in_channels;
    const std::size_t plane = static_cast<std::size_t>(net.patch_h()) * net.patch_w();
    left.assign(net.input_size() * b, 0.0f);
    right.assign(net.input_size() * b, 0.0f);
    labels.resize(b);
    for (int j = 0; j < b; ++j) {
        for (int c = 0; c < channels; ++c) {
            std::copy_n(data.left[idx[j]].data() + c * plane, plane, left.data() + (static_cast<std::size_t>(c) * b + j) * plane);
            std::copy_n(data.right[idx[j]].data() + c * plane, plane, right.data() + (static_cast<std::size_t>(c) * b + j) * plane);
        }
        labels[j] = data.labels[idx[j]];
    }
}

double mean_loss(const SiameseNet& net, const PreparedPairs& data, const std::vector<std::size_t>& idx, int batch) {
    std::vector<float> l, r, y;
    double total = 0.0;
    for (std::size_t s = 0; s < idx.size(); s += batch) {
        const std::size_t e = std::min(idx.size(), s + batch);
        std::span<const std::size_t> slice(idx.data() + s, e - s);
        pack(data, slice, net, l, r, y);
        total += net.loss_and_gradient(l, r, y, static_cast<int>(slice.size()), {}) * static_cast<double>(slice.size());
    }
    return total / static_cast<double>(idx.size());
}

}  // namespace

Checkpoint train(SiameseNet model, const sampler::PairDataset& pairs, const TrainConfig& cfg,
                 std::string manifest_digest) {
    cfg.validate();
    const std::size_t n = pairs.pairs.size();
    const auto similar = std::count_if(pairs.pairs.begin(), pairs.pairs.end(),
                                       [](const auto& p) { return p.label == sampler::PairLabel::similar; });
    if (similar == 0 || static_cast<std::size_t>(similar) == n) throw Error("degenerate label distribution");
    if (n < 2) throw Error("train: need at least two pairs");

    const PreparedPairs data = prepare(model, pairs);
    std::mt19937_64 rng(cfg.rng_seed);
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const std::size_t n_val =
        std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(cfg.val_fraction * n)), 1, n - 1);
    std::vector<std::size_t> val(order.begin(), order.begin() + n_val);
    std::vector<std::size_t> trn(order.begin() + n_val, order.end());

    Checkpoint ckpt{model, cfg, {}, 0, std::move(manifest_digest)};
    auto check_finite = [](double v, int epoch) {
        if (!std::isfinite(v))
            throw Error("training diverged: loss is not finite at epoch " + std::to_string(epoch));
    };
    const double train0 = mean_loss(model, data, trn, cfg.batch_size);
    const double val0 = mean_loss(model, data, val, cfg.batch_size);
    check_finite(train0, 0);
    check_finite(val0, 0);
    ckpt.history.push_back({0, train0, val0});

    auto params = model.parameters();
    std::vector<float> best(params.begin(), params.end());
    double best_val = val0;
    std::vector<float> grad(params.size()), m(params.size(), 0.0f), v(params.size(), 0.0f);
    std::vector<float> l, r, y;
    long step = 0;
    int since_best = 0;

    for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        std::shuffle(trn.begin(), trn.end(), rng);
        double total = 0.0;
        for (std::size_t s = 0; s < trn.size(); s += cfg.batch_size) {
            const std::size_t e = std::min(trn.size(), s + cfg.batch_size);
            std::span<const std::size_t> slice(trn.data() + s, e - s);
            pack(data, slice, model, l, r, y);
            const double loss = model.loss_and_gradient(l, r, y, static_cast<int>(slice.size()), grad);
            check_finite(loss, epoch);
            total += loss * static_cast<double>(slice.size());

            ++step;
            const double c1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(step));
            const double c2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(step));
            const auto b1 = static_cast<float>(cfg.adam_beta1);
            const auto b2 = static_cast<float>(cfg.adam_beta2);
            const auto lr = static_cast<float>(cfg.learning_rate * std::sqrt(c2) / c1);
            const auto eps = static_cast<float>(cfg.adam_epsilon * std::sqrt(c2));
            for (std::size_t i = 0; i < params.size(); ++i) {
                m[i] = b1 * m[i] + (1.0f - b1) * grad[i];
                v[i] = b2 * v[i] + (1.0f - b2) * grad[i] * grad[i];
                params[i] -= lr * m[i] / (std::sqrt(v[i]) + eps);
            }
        }
        const double train_loss = total / static_cast<double>(trn.size());
        const double val_loss = mean_loss(model, data, val, cfg.batch_size);
        check_finite(val_loss, epoch);
        ckpt.history.push_back({epoch, train_loss, val_loss});
        if (val_loss < best_val) {
            best_val = val_loss;
            best.assign(params.begin(), params.end());
            ckpt.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= cfg.early_stop_patience) {
            break;
        }
    }
    std::copy(best.begin(), best.end(), params.begin());
    ckpt.net = std::move(model);
    return ckpt;
}

std::vector<std::vector<float>> embed_batch(const Checkpoint& ckpt, std::span<const GrayImage> patches) {
    const SiameseNet& net = ckpt.net;
    for (std::size_t i = 0; i < patches.size(); ++i)
        if (patches[i].rows() != net.patch_h() || patches[i].cols() != net.patch_w())
            throw Error("embed: patch size mismatch at index " + std::to_string(i) + ": expected " +
                        std::to_string(net.patch_h()) + "x" + std::to_string(net.patch_w()) + ", got " +
                        std::to_string(patches[i].rows()) + "x" + std::to_string(patches[i].cols()));
    constexpr std::size_t kChunk = 64;
    std::vector<std::vector<float>> out;
    out.reserve(patches.size());
    std::vector<float> in, emb;
    for (std::size_t s = 0; s < patches.size(); s += kChunk) {
        const int b = static_cast<int>(std::min(kChunk, patches.size() - s));
        in.assign(net.input_size() * b, 0.0f);
        for (int j = 0; j < b; ++j) normalize_patch(patches[s + j], net.spec().in_channels, j, b, in);
        emb.assign(static_cast<std::size_t>(b) * net.embedding_dim(), 0.0f);
        net.embed(in, b, emb);
        for (int j = 0; j < b; ++j)
            out.emplace_back(emb.begin() + static_cast<std::ptrdiff_t>(j) * net.embedding_dim(),
                             emb.begin() + static_cast<std::ptrdiff_t>(j + 1) * net.embedding_dim());
    }
    return out;
}

std::vector<float> embed_patch(const Checkpoint& ckpt, const GrayImage& patch) {
    return embed_batch(ckpt, std::span<const GrayImage>(&patch, 1)).front();
}

namespace {

constexpr char kWeightsMagic[8] = {'U', 'T', 'L', 'S', 'W', 'G', 'T', '1'};

json spec_json(const ModelSpec& s) {
    json convs = json::array();
    for (const auto& c : s.conv_layers)
        convs.push_back({{"filters", c.filters}, {"kernel", c.kernel}, {"stride", c.stride}, {"pool", c.pool}});
    return {{"conv_layers", convs},
            {"embedding_dim", s.embedding_dim},
            {"fc_layers", s.fc_layers},
            {"in_channels", s.in_channels},
            {"activation", "relu"},
            {"final", "sigmoid"}};
}

ModelSpec spec_from_json(const json& j) {
    ModelSpec s;
    for (const auto& c : j.at("conv_layers"))
        s.conv_layers.push_back({c.at("filters"), c.at("kernel"), c.at("stride"), c.at("pool")});
    s.embedding_dim = j.at("embedding_dim");
    s.fc_layers = j.at("fc_layers").get<std::vector<int>>();
    s.in_channels = j.at("in_channels");
    return s;
}

json train_json(const TrainConfig& c) {
    return {{"learning_rate", c.learning_rate}, {"optimizer", "adam"},        {"adam_beta1", c.adam_beta1},
            {"adam_beta2", c.adam_beta2},       {"adam_epsilon", c.adam_epsilon}, {"batch_size", c.batch_size},
            {"max_epochs", c.max_epochs},       {"val_fraction", c.val_fraction}, {"early_stop_patience", c.early_stop_patience},
            {"rng_seed", c.rng_seed}};
}

TrainConfig train_from_json(const json& j) {
    TrainConfig c;
    c.learning_rate = j.at("learning_rate");
    c.adam_beta1 = j.at("adam_beta1");
    c.adam_beta2 = j.at("adam_beta2");
    c.adam_epsilon = j.at("adam_epsilon");
    c.batch_size = j.at("batch_size");
    c.max_epochs = j.at("max_epochs");
    c.val_fraction = j.at("val_fraction");
    c.early_stop_patience = j.at("early_stop_patience");
    c.rng_seed = j.at("rng_seed");
    return c;
}

std::string encode_weights(std::span<const float> params) {
    std::string bytes(kWeightsMagic, sizeof kWeightsMagic);
    const std::uint64_t count = params.size();
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<char>((count >> (8 * i)) & 0xff));
    for (float f : params) {
        const auto u = std::bit_cast<std::uint32_t>(f);
        for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
    }
    return bytes;
}

void decode_weights(const std::string& bytes, std::span<float> params) {
    if (bytes.size() < 16 || std::memcmp(bytes.data(), kWeightsMagic, 8) != 0)
        throw Error("checkpoint: weights file has a bad header");
    std::uint64_t count = 0;
    for (int i = 0; i < 8; ++i) count |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[8 + i])) << (8 * i);
    if (count != params.size() || bytes.size() != 16 + 4 * count)
        throw Error("checkpoint: weights file does not match the model spec");
    for (std::size_t k = 0; k < count; ++k) {
        std::uint32_t u = 0;
        for (int i = 0; i < 4; ++i)
            u |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[16 + 4 * k + i])) << (8 * i);
        params[k] = std::bit_cast<float>(u);
    }
}

}  // namespace

void save_checkpoint(const fs::path& dir, const Checkpoint& ckpt) {
    fs::create_directories(dir);
    const std::string weights = encode_weights(ckpt.net.parameters());
    io::write_file_atomic(dir / "weights.bin", weights);
    json history = json::array();
    for (const auto& h : ckpt.history)
        history.push_back({{"epoch", h.epoch}, {"train_loss", h.train_loss}, {"val_loss", h.val_loss}});
    json side{{"format", "utls-checkpoint-1"},
              {"patch", {{"h", ckpt.net.patch_h()}, {"w", ckpt.net.patch_w()}}},
              {"model_spec", spec_json(ckpt.net.spec())},
              {"train_config", train_json(ckpt.train_config)},
              {"history", history},
              {"best_epoch", ckpt.best_epoch},
              {"manifest_digest", ckpt.manifest_digest},
              {"weights", {{"file", "weights.bin"}, {"count", ckpt.net.parameters().size()}, {"sha256", sha256_hex(weights)}}}};
    io::write_file_atomic(dir / "checkpoint.json", side.dump(2) + "\n");
}

Checkpoint load_checkpoint(const fs::path& dir) {
    std::ifstream in(dir / "checkpoint.json");
    if (!in) throw Error("checkpoint: missing checkpoint.json in " + dir.string());
    const json side = json::parse(in);
    SiameseNet net(spec_from_json(side.at("model_spec")), side.at("patch").at("h"), side.at("patch").at("w"));
    std::ifstream win(dir / "weights.bin", std::ios::binary);
    if (!win) throw Error("checkpoint: missing weights.bin in " + dir.string());
    std::ostringstream ss;
    ss << win.rdbuf();
    const std::string bytes = ss.str();
    if (sha256_hex(bytes) != side.at("weights").at("sha256").get<std::string>())
        throw Error("checkpoint: weights.bin digest mismatch");
    decode_weights(bytes, net.parameters());
    Checkpoint ckpt{std::move(net), train_from_json(side.at("train_config")), {}, side.at("best_epoch"),
                    side.at("manifest_digest")};
    for (const auto& h : side.at("history")) ckpt.history.push_back({h.at("epoch"), h.at("train_loss"), h.at("val_loss")});
    return ckpt;
}

}  // namespace utls::nn
