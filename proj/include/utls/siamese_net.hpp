#pragma once

// Two-branch patch similarity network. Both branches share every weight; a
// single branch maps an h_p x w_p patch to its representation vector (the
// penultimate layer), and the head classifies the concatenated pair.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "utls/nn_layers.hpp"
#include "utls/pair_sampler.hpp"
#include "utls/raster.hpp"

namespace utls::nn {

struct ConvLayerSpec {
    int filters = 0;
    int kernel = 3;
    int stride = 1;
    bool pool = false;  ///< 2 x 2 max pool after the activation

    bool operator==(const ConvLayerSpec&) const = default;
};

struct ModelSpec {
    std::vector<ConvLayerSpec> conv_layers;
    int embedding_dim = 512;
    std::vector<int> fc_layers{256, 1};  ///< head widths after the concatenation
    int in_channels = 1;

    /// 64/128/256/256/256 filters, kernels 7/5/3/3/3, stride 2 on conv1,
    /// pooling after conv1, conv2, conv5.
    static ModelSpec standard();
    /// Same topology with 16/32/32/32/32 filters for CPU-scale runs.
    static ModelSpec compact();

    void validate() const;
    bool operator==(const ModelSpec&) const = default;
};

struct TrainConfig {
    double learning_rate = 1e-5;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    int batch_size = 32;
    int max_epochs = 20;
    double val_fraction = 0.1;
    int early_stop_patience = 3;
    std::uint64_t rng_seed = 1;

    void validate() const;
    bool operator==(const TrainConfig&) const = default;
};

/// Network weights plus the geometry they were built for. Inference methods
/// are const and allocate their own scratch, so one instance can serve
/// several threads.
class SiameseNet {
public:
    SiameseNet(ModelSpec spec, int patch_h, int patch_w, std::uint64_t init_seed = 1);

    const ModelSpec& spec() const { return spec_; }
    int patch_h() const { return patch_h_; }
    int patch_w() const { return patch_w_; }
    int embedding_dim() const { return spec_.embedding_dim; }
    std::size_t input_size() const {
        return static_cast<std::size_t>(spec_.in_channels) * patch_h_ * patch_w_;
    }

    std::span<float> parameters() { return params_; }
    std::span<const float> parameters() const { return params_; }

    /// `inputs` holds n normalized patches laid out as (C, N, H, W);
    /// writes n x embedding_dim values to `out`.
    void embed(std::span<const float> inputs, int n, std::span<float> out) const;

    /// Similarity probabilities for n (left, right) pairs.
    std::vector<float> classify(std::span<const float> left, std::span<const float> right, int n) const;

    /// Mean binary cross-entropy of the batch; when `grad` is non-empty it
    /// receives d(loss)/d(parameters) (overwritten).
    double loss_and_gradient(std::span<const float> left, std::span<const float> right,
                             std::span<const float> labels, int n, std::span<float> grad) const;

private:
    struct ConvLayer {
        ConvShape shape;
        bool pool = false;
        int in_h = 0, in_w = 0, out_h = 0, out_w = 0;
        std::size_t w_off = 0, b_off = 0;
    };
    struct DenseLayer {
        int in = 0, out = 0;
        bool relu = true;
        std::size_t w_off = 0, b_off = 0;
    };
    struct BranchCache;

    Matrix branch_forward(const Tensor& input, BranchCache* cache) const;
    void branch_backward(const Matrix& d_embedding, const BranchCache& cache, std::span<float> grad) const;

    ModelSpec spec_;
    int patch_h_ = 0;
    int patch_w_ = 0;
    std::vector<ConvLayer> convs_;
    DenseLayer embed_layer_;
    std::vector<DenseLayer> head_;
    int final_h_ = 0, final_w_ = 0;
    std::vector<float> params_;
};

/// Maps 8-bit intensities to [0, 1] with ink high: (255 - v) / 255.
/// Writes patch `index` of a batch of `batch` into `dst` laid out (C, N, H, W).
void normalize_patch(const GrayImage& patch, int channels, int index, int batch, std::span<float> dst);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct Checkpoint {
    SiameseNet net;
    TrainConfig train_config;
    std::vector<EpochRecord> history;  ///< epoch 0 is the untrained network
    int best_epoch = 0;
    std::string manifest_digest;
};

/// Validates the patch size against the layer stack; errors name the layer
/// whose output would be empty.
SiameseNet build_model(const ModelSpec& spec, int patch_h, int patch_w, std::uint64_t init_seed = 1);

/// Adam on binary cross-entropy; returns the weights of the epoch with the
/// lowest validation loss.
Checkpoint train(SiameseNet model, const sampler::PairDataset& pairs, const TrainConfig& cfg,
                 std::string manifest_digest = {});

std::vector<float> embed_patch(const Checkpoint& ckpt, const GrayImage& patch);
std::vector<std::vector<float>> embed_batch(const Checkpoint& ckpt, std::span<const GrayImage> patches);

/// `dir/weights.bin` (raw little-endian float32 with a small header) and
/// `dir/checkpoint.json` (spec, training config, history, digest).
void save_checkpoint(const std::filesystem::path& dir, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& dir);

}  // namespace utls::nn
