#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "test_support.hpp"
#include "utls/nn_layers.hpp"
#include "utls/siamese_net.hpp"

using namespace utls;
using namespace utls::nn;

namespace {

ModelSpec tiny_spec(int filters = 3) {
    ModelSpec s = ModelSpec::compact();
    for (auto& l : s.conv_layers) l.filters = filters;
    s.fc_layers = {8, 1};
    return s;
}

std::vector<float> random_floats(std::size_t n, std::mt19937_64& rng, float lo = -1.0f, float hi = 1.0f) {
    std::uniform_real_distribution<float> d(lo, hi);
    std::vector<float> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

GrayImage random_patch(int h, int w, std::mt19937_64& rng) {
    GrayImage p(h, w);
    for (auto& v : p.data()) v = static_cast<std::uint8_t>(rng() % 256);
    return p;
}

// Central difference of a scalar function of one float parameter.
template <class F>
double numeric_derivative(float& x, F&& f, float h = 1e-2f) {
    const float x0 = x;
    x = x0 + h;
    const double up = f();
    x = x0 - h;
    const double down = f();
    x = x0;
    return (up - down) / (2.0 * static_cast<double>(h));
}

bool close(double a, double b, double rel, double abs_tol) {
    return std::abs(a - b) <= abs_tol + rel * std::max(std::abs(a), std::abs(b));
}

}  // namespace

TEST_CASE("conv layer gradients match finite differences") {
    std::mt19937_64 rng(4);
    for (const auto& [k, stride] : std::vector<std::pair<int, int>>{{3, 1}, {5, 2}, {1, 1}, {7, 2}}) {
        const ConvShape shape{2, 3, k, stride};
        Tensor in(2, 2, 9, 8);
        in.data = random_floats(in.data.size(), rng);
        auto weight = random_floats(static_cast<std::size_t>(shape.out_c) * shape.patch_len(), rng);
        auto bias = random_floats(shape.out_c, rng);
        const int oh = shape.out_dim(9), ow = shape.out_dim(8);
        CHECK(oh == (9 + stride - 1) / stride);
        CHECK(ow == (8 + stride - 1) / stride);
        const auto probe = random_floats(static_cast<std::size_t>(shape.out_c) * 2 * oh * ow, rng);
        auto loss = [&] {
            const Tensor out = conv_forward(in, shape, weight.data(), bias.data());
            double s = 0.0;
            for (std::size_t i = 0; i < out.data.size(); ++i) s += static_cast<double>(out.data[i]) * probe[i];
            return s;
        };
        std::vector<float> col;
        conv_forward(in, shape, weight.data(), bias.data(), &col);
        Tensor dout(shape.out_c, 2, oh, ow);
        dout.data = probe;
        std::vector<float> dw(weight.size(), 0.0f), db(bias.size(), 0.0f);
        const Tensor din = conv_backward(dout, shape, 9, 8, weight.data(), col, dw.data(), db.data(), true);
        for (std::size_t i = 0; i < weight.size(); i += 3) CHECK(close(dw[i], numeric_derivative(weight[i], loss), 2e-3, 2e-3));
        for (std::size_t i = 0; i < bias.size(); ++i) CHECK(close(db[i], numeric_derivative(bias[i], loss), 2e-3, 2e-3));
        for (std::size_t i = 0; i < in.data.size(); i += 5) CHECK(close(din.data[i], numeric_derivative(in.data[i], loss), 2e-3, 2e-3));
    }
}

TEST_CASE("dense, pooling and GAP gradients") {
    std::mt19937_64 rng(12);
    Matrix x(3, 5);
    x.data = random_floats(x.data.size(), rng);
    auto w = random_floats(5 * 4, rng);
    auto b = random_floats(4, rng);
    const auto probe = random_floats(3 * 4, rng);
    auto dense_loss = [&] {
        const Matrix y = dense_forward(x, w.data(), b.data(), 4);
        double s = 0.0;
        for (std::size_t i = 0; i < y.data.size(); ++i) s += static_cast<double>(y.data[i]) * probe[i];
        return s;
    };
    Matrix dy(3, 4);
    dy.data = probe;
    std::vector<float> dw(w.size(), 0.0f), dbias(b.size(), 0.0f);
    const Matrix dx = dense_backward(dy, x, w.data(), dw.data(), dbias.data(), true);
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(close(dw[i], numeric_derivative(w[i], dense_loss), 1e-3, 1e-3));
    for (std::size_t i = 0; i < b.size(); ++i) CHECK(close(dbias[i], numeric_derivative(b[i], dense_loss), 1e-3, 1e-3));
    for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(close(dx.data[i], numeric_derivative(x.data[i], dense_loss), 1e-3, 1e-3));

    Tensor t(2, 2, 5, 7);
    t.data = random_floats(t.data.size(), rng);
    std::vector<int> argmax;
    const Tensor pooled = maxpool_forward(t, &argmax);
    CHECK(pooled.h == 2);
    CHECK(pooled.w == 3);
    for (int c = 0; c < 2; ++c)
        for (int n = 0; n < 2; ++n)
            for (int r = 0; r < 2; ++r)
                for (int q = 0; q < 3; ++q) {
                    const float* p = t.plane_ptr(c, n);
                    const float m = std::max({p[2 * r * 7 + 2 * q], p[2 * r * 7 + 2 * q + 1], p[(2 * r + 1) * 7 + 2 * q],
                                              p[(2 * r + 1) * 7 + 2 * q + 1]});
                    CHECK(pooled.plane_ptr(c, n)[r * 3 + q] == m);
                }
    Tensor dpool(2, 2, 2, 3);
    dpool.data = random_floats(dpool.data.size(), rng);
    const Tensor dt = maxpool_backward(dpool, argmax, 5, 7);
    double sum_in = 0.0, sum_out = 0.0;
    for (float v : dt.data) sum_in += v;
    for (float v : dpool.data) sum_out += v;
    CHECK(sum_in == doctest::Approx(sum_out).epsilon(1e-5));
    CHECK_THROWS_AS(maxpool_forward(Tensor(1, 1, 1, 4)), Error);

    const Matrix g = global_avg_pool(t);
    CHECK(g.rows == 2);
    CHECK(g.cols == 2);
    double mean = 0.0;
    for (std::size_t i = 0; i < t.plane(); ++i) mean += t.plane_ptr(1, 0)[i];
    CHECK(g.row(0)[1] == doctest::Approx(mean / t.plane()).epsilon(1e-5));
}

TEST_CASE("network gradient matches finite differences") {
    std::mt19937_64 rng(42);
    auto net = build_model(tiny_spec(), 16, 16, 5);
    const int n = 4;
    const auto left = random_floats(net.input_size() * n, rng, 0.0f, 1.0f);
    const auto right = random_floats(net.input_size() * n, rng, 0.0f, 1.0f);
    const std::vector<float> labels{1.0f, 0.0f, 1.0f, 0.0f};
    std::vector<float> grad(net.parameters().size());
    net.loss_and_gradient(left, right, labels, n, grad);
    auto params = net.parameters();
    auto loss = [&] { return net.loss_and_gradient(left, right, labels, n, {}); };
    int checked = 0, agreed = 0;
    for (std::size_t i = 0; i < params.size(); i += params.size() / 300 + 1) {
        const double num = numeric_derivative(params[i], loss, 2e-3f);
        ++checked;
        agreed += close(grad[i], num, 5e-2, 2e-4);
    }
    // Isolated misses come from ReLU kinks inside the finite-difference step.
    CHECK(agreed >= checked * 97 / 100);
}

TEST_CASE("branch output and head range") {
    std::mt19937_64 rng(1);
    const auto net = build_model(ModelSpec::compact(), 30, 30);
    const auto x = random_floats(net.input_size() * 2, rng, 0.0f, 1.0f);
    std::vector<float> emb(2 * 512);
    net.embed(x, 2, emb);
    CHECK(net.embedding_dim() == 512);
    for (float v : emb) CHECK(std::isfinite(v));
    const auto p = net.classify(x, x, 2);
    REQUIRE(p.size() == 2);
    for (float v : p) {
        CHECK(v > 0.0f);
        CHECK(v < 1.0f);
    }
}

TEST_CASE("weight sharing: a patch embeds identically in either branch position") {
    std::mt19937_64 rng(2);
    const auto net = build_model(tiny_spec(4), 20, 24, 3);
    const std::size_t sz = net.input_size();
    const auto x = random_floats(sz, rng, 0.0f, 1.0f);
    const auto y = random_floats(sz, rng, 0.0f, 1.0f);
    std::vector<float> xy(x), yx(y);
    xy.insert(xy.end(), y.begin(), y.end());
    yx.insert(yx.end(), x.begin(), x.end());
    std::vector<float> e_xy(2 * 512), e_yx(2 * 512);
    net.embed(xy, 2, e_xy);
    net.embed(yx, 2, e_yx);
    for (int i = 0; i < 512; ++i) {
        REQUIRE(e_xy[i] == e_yx[512 + i]);
        REQUIRE(e_xy[512 + i] == e_yx[i]);
    }
    // Pair order sensitivity of the head is measured, not asserted.
    const auto p1 = net.classify(x, y, 1), p2 = net.classify(y, x, 1);
    MESSAGE("classify(x, y) - classify(y, x) = " << (p1[0] - p2[0]));
}

TEST_CASE("too small patches name the layer") {
    const auto err = testing::error_of([] { build_model(ModelSpec::standard(), 8, 8); });
    CHECK(testing::contains(err, "too small"));
    CHECK(testing::contains(err, "conv"));
    CHECK_NOTHROW(build_model(ModelSpec::standard(), 15, 15));
    ModelSpec four = ModelSpec::standard();
    four.conv_layers.pop_back();
    CHECK_THROWS_AS(four.validate(), Error);
    ModelSpec wide = ModelSpec::standard();
    wide.embedding_dim = 256;
    CHECK_THROWS_AS(wide.validate(), Error);
}

TEST_CASE("embed_batch equals mapped embed_patch bit for bit") {
    std::mt19937_64 rng(3);
    const TrainConfig cfg;
    Checkpoint ckpt{build_model(tiny_spec(4), 18, 18, 9), cfg, {}, 0, {}};
    std::vector<GrayImage> patches;
    for (int i = 0; i < 100; ++i) patches.push_back(random_patch(18, 18, rng));
    const auto batch = embed_batch(ckpt, patches);
    REQUIRE(batch.size() == 100);
    for (int i = 0; i < 100; ++i) {
        const auto single = embed_patch(ckpt, patches[i]);
        REQUIRE(single.size() == 512);
        REQUIRE(single == batch[i]);
    }
    CHECK(embed_batch(ckpt, std::span<const GrayImage>{}).empty());
    CHECK(embed_patch(ckpt, patches[0]) == embed_patch(ckpt, patches[0]));

    patches[57] = random_patch(18, 20, rng);
    const auto err = testing::error_of([&] { embed_batch(ckpt, patches); });
    CHECK(testing::contains(err, "patch size mismatch"));
    CHECK(testing::contains(err, "index 57"));
}

TEST_CASE("normalization maps white to zero and black to one") {
    GrayImage p(2, 2);
    p(0, 0) = 255;
    p(0, 1) = 0;
    p(1, 0) = 51;
    p(1, 1) = 204;
    std::vector<float> out(4);
    normalize_patch(p, 1, 0, 1, out);
    CHECK(out[0] == 0.0f);
    CHECK(out[1] == 1.0f);
    CHECK(out[2] == doctest::Approx(0.8));
    CHECK(out[3] == doctest::Approx(0.2));
}

namespace {

sampler::PairDataset striped_pairs(int n, int patch, std::uint64_t seed) {
    std::vector<imaging::BinarizedPage> pages{testing::striped_page(240, 160, 12, 36, 4)};
    sampler::SamplerConfig cfg;
    cfg.n_pairs = n;
    cfg.rng_seed = seed;
    return sampler::build_pair_dataset(pages, {patch, patch, 10, 10}, cfg);
}

}  // namespace

TEST_CASE("training lowers the loss and checkpoints round-trip") {
    const auto pairs = striped_pairs(200, 24, 5);
    TrainConfig cfg;
    cfg.learning_rate = 1e-3;
    cfg.max_epochs = 10;
    cfg.early_stop_patience = 10;
    auto ckpt = train(build_model(ModelSpec::compact(), 24, 24, 7), pairs, cfg, "abc");
    REQUIRE(ckpt.history.size() >= 2);
    CHECK(ckpt.history.front().epoch == 0);
    for (std::size_t i = 1; i < ckpt.history.size(); ++i) CHECK(ckpt.history[i].epoch == ckpt.history[i - 1].epoch + 1);
    CHECK(ckpt.history.back().train_loss < ckpt.history.front().train_loss);
    double best = ckpt.history.front().val_loss;
    for (const auto& h : ckpt.history) best = std::min(best, h.val_loss);
    CHECK(ckpt.history[ckpt.best_epoch].val_loss == best);

    // A blank patch sits further from text than from another blank patch.
    GrayImage white(24, 24, 255), text(24, 24, 255);
    for (int r = 6; r < 18; ++r)
        for (int c = 0; c < 24; ++c) text(r, c) = 0;
    const auto ew = embed_patch(ckpt, white), et = embed_patch(ckpt, text);
    double d = 0.0;
    for (int i = 0; i < 512; ++i) d += (ew[i] - et[i]) * (ew[i] - et[i]);
    CHECK(std::sqrt(d) > 0.0);

    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "utls_test_ckpt";
    fs::remove_all(dir);
    save_checkpoint(dir, ckpt);
    const auto back = load_checkpoint(dir);
    CHECK(back.net.spec() == ckpt.net.spec());
    CHECK(back.net.patch_h() == 24);
    CHECK(back.train_config == ckpt.train_config);
    CHECK(back.best_epoch == ckpt.best_epoch);
    CHECK(back.manifest_digest == "abc");
    REQUIRE(back.history.size() == ckpt.history.size());
    for (std::size_t i = 0; i < back.history.size(); ++i) CHECK(back.history[i].val_loss == ckpt.history[i].val_loss);
    const auto pa = ckpt.net.parameters();
    const auto pb = back.net.parameters();
    CHECK(std::equal(pa.begin(), pa.end(), pb.begin(), pb.end()));

    // Corrupt one weight: the digest check refuses the checkpoint.
    {
        std::fstream f(dir / "weights.bin", std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(40);
        f.put('\x7f');
    }
    CHECK(testing::contains(testing::error_of([&] { load_checkpoint(dir); }), "digest mismatch"));
    fs::remove_all(dir);
}

TEST_CASE("training preconditions") {
    auto pairs = striped_pairs(20, 16, 1);
    for (auto& p : pairs.pairs) p.label = sampler::PairLabel::similar;
    CHECK(testing::error_of([&] { train(build_model(tiny_spec(), 16, 16), pairs, TrainConfig{}); }) ==
          "degenerate label distribution");
    TrainConfig bad;
    bad.val_fraction = 0.5;
    CHECK_THROWS_AS(bad.validate(), Error);
    bad = TrainConfig{};
    bad.learning_rate = 0.0;
    CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("diverging training is aborted") {
    const auto pairs = striped_pairs(64, 16, 2);
    TrainConfig cfg;
    // Steps near the float range push weights to infinity within a few updates.
    cfg.learning_rate = 1e38;
    cfg.max_epochs = 10;
    cfg.early_stop_patience = 10;
    const auto err = testing::error_of([&] { train(build_model(tiny_spec(), 16, 16), pairs, cfg); });
    INFO(err);
    CHECK(testing::contains(err, "training diverged"));
}
