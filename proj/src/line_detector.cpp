#include "utls/line_detector.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <thread>

namespace utls::detect {

EmbeddingGrid embed_page(const nn::Checkpoint& ckpt, const imaging::BinarizedPage& page,
                         const imaging::PatchGeometry& geom, int jobs) {
    geom.validate();
    const nn::SiameseNet& net = ckpt.net;
    if (net.patch_h() != geom.h_p || net.patch_w() != geom.w_p)
        throw Error("patch size mismatch: checkpoint was trained on " + std::to_string(net.patch_h()) + "x" +
                    std::to_string(net.patch_w()) + " patches, geometry asks for " + std::to_string(geom.h_p) + "x" +
                    std::to_string(geom.w_p));
    if (page.gray.empty()) throw Error("embed_page: empty page");

    EmbeddingGrid grid;
    grid.n_rows = (page.rows() + geom.h_i - 1) / geom.h_i;
    grid.n_cols = (page.cols() + geom.w_i - 1) / geom.w_i;
    grid.dim = net.embedding_dim();
    grid.cell_h = geom.h_i;
    grid.cell_w = geom.w_i;
    grid.page_h = page.rows();
    grid.page_w = page.cols();
    grid.vectors.assign(grid.cells() * grid.dim, 0.0f);

    const int mh = (geom.h_p - geom.h_i) / 2;
    const int mw = (geom.w_p - geom.w_i) / 2;
    GrayImage padded(grid.n_rows * geom.h_i + 2 * mh, grid.n_cols * geom.w_i + 2 * mw, 255);
    for (int r = 0; r < page.rows(); ++r) {
        auto src = page.gray.row(r);
        std::copy(src.begin(), src.end(), padded.row(r + mh).begin() + mw);
    }

    const int channels = net.spec().in_channels;
    const std::size_t plane = static_cast<std::size_t>(geom.h_p) * geom.w_p;
    constexpr std::size_t kChunk = 64;
    const std::size_t n_chunks = (grid.cells() + kChunk - 1) / kChunk;

    auto work = [&](std::size_t first_chunk, std::size_t stride) {
        std::vector<float> in, out;
        for (std::size_t chunk = first_chunk; chunk < n_chunks; chunk += stride) {
            const std::size_t s = chunk * kChunk;
            const int b = static_cast<int>(std::min(kChunk, grid.cells() - s));
            in.assign(net.input_size() * b, 0.0f);
            for (int j = 0; j < b; ++j) {
                const std::size_t cell = s + j;
                const int r0 = static_cast<int>(cell / grid.n_cols) * geom.h_i;
                const int c0 = static_cast<int>(cell % grid.n_cols) * geom.w_i;
                for (int c = 0; c < channels; ++c) {
                    float* dst = in.data() + (static_cast<std::size_t>(c) * b + j) * plane;
                    for (int y = 0; y < geom.h_p; ++y) {
                        const auto row = padded.row(r0 + y);
                        for (int x = 0; x < geom.w_p; ++x)
                            dst[y * geom.w_p + x] = static_cast<float>(255 - row[c0 + x]) / 255.0f;
                    }
                }
            }
            out.assign(static_cast<std::size_t>(b) * grid.dim, 0.0f);
            net.embed(in, b, out);
            std::copy(out.begin(), out.end(), grid.vectors.begin() + static_cast<std::ptrdiff_t>(s * grid.dim));
        }
    };

    const int workers = std::max(1, std::min<int>(jobs, static_cast<int>(n_chunks)));
    if (workers == 1) {
        work(0, 1);
    } else {
        std::vector<std::jthread> pool;
        for (int t = 0; t < workers; ++t) pool.emplace_back(work, t, workers);
    }
    for (float v : grid.vectors)
        if (!std::isfinite(v)) throw Error("embed_page: non-finite embedding");
    return grid;
}

PrincipalComponents principal_components(const std::vector<float>& data, std::size_t n, int dim, int k) {
    if (n == 0 || dim <= 0) throw Error("pca: empty input");
    if (data.size() != n * static_cast<std::size_t>(dim)) throw Error("pca: data size mismatch");
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), dim);
    for (std::size_t i = 0; i < n; ++i)
        for (int j = 0; j < dim; ++j) x(static_cast<Eigen::Index>(i), j) = data[i * dim + j];
    const Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;
    const Eigen::MatrixXd cov = (x.transpose() * x) / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw Error("pca: eigendecomposition failed");

    PrincipalComponents pc;
    pc.mean.assign(mean.data(), mean.data() + dim);
    pc.total_variance = cov.trace();
    const auto& values = eig.eigenvalues();  // ascending
    const double largest = std::max(0.0, values(dim - 1));
    const double tol = std::max(largest, pc.total_variance) * 1e-10;
    for (int i = 0; i < k && i < dim; ++i) {
        const int idx = dim - 1 - i;
        if (!(values(idx) > tol) || pc.total_variance <= 0.0) break;
        Eigen::VectorXd v = eig.eigenvectors().col(idx);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v(arg) < 0) v = -v;
        pc.directions.emplace_back(v.data(), v.data() + dim);
        pc.variances.push_back(values(idx));
    }
    return pc;
}

GrayImage PseudoRGB::channel(int k) const {
    GrayImage out(image.rows, image.cols);
    auto d = out.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] = image.rgb[3 * i + k];
    return out;
}

PseudoRGB pca_pseudo_rgb(const EmbeddingGrid& grid) {
    const std::size_t n = grid.cells();
    const PrincipalComponents pc = principal_components(grid.vectors, n, grid.dim, 3);

    std::array<std::vector<std::uint8_t>, 3> cell_value;
    PseudoRGB out;
    out.rank = static_cast<int>(pc.directions.size());
    for (int k = 0; k < 3; ++k) {
        cell_value[k].assign(n, 128);
        if (k >= out.rank) continue;
        out.explained_variance[k] = pc.variances[k] / pc.total_variance;
        std::vector<double> score(n);
        for (std::size_t i = 0; i < n; ++i) {
            double s = 0.0;
            const float* v = grid.vectors.data() + i * grid.dim;
            for (int j = 0; j < grid.dim; ++j) s += (v[j] - pc.mean[j]) * pc.directions[k][j];
            score[i] = s;
        }
        const auto [lo, hi] = std::minmax_element(score.begin(), score.end());
        const double range = *hi - *lo;
        if (range <= 0.0) continue;
        for (std::size_t i = 0; i < n; ++i)
            cell_value[k][i] = static_cast<std::uint8_t>(std::lround((score[i] - *lo) / range * 255.0));
    }

    out.image.rows = grid.page_h;
    out.image.cols = grid.page_w;
    out.image.rgb.assign(static_cast<std::size_t>(grid.page_h) * grid.page_w * 3, 0);
    for (int r = 0; r < grid.page_h; ++r) {
        const int gr = r / grid.cell_h;
        for (int c = 0; c < grid.page_w; ++c) {
            const std::size_t cell = static_cast<std::size_t>(gr) * grid.n_cols + c / grid.cell_w;
            std::uint8_t* px = out.image.rgb.data() + (static_cast<std::size_t>(r) * grid.page_w + c) * 3;
            for (int k = 0; k < 3; ++k) px[k] = cell_value[k][cell];
        }
    }
    return out;
}

BlobLineMap index_blobs(Mask mask) {
    BlobLineMap map;
    auto comps = imaging::connected_components(mask, imaging::Connectivity::eight).components;
    std::stable_sort(comps.begin(), comps.end(), [](const auto& a, const auto& b) {
        return a.centroid_row != b.centroid_row ? a.centroid_row < b.centroid_row : a.centroid_col < b.centroid_col;
    });
    for (std::size_t i = 0; i < comps.size(); ++i) comps[i].id = static_cast<int>(i);
    map.mask = std::move(mask);
    map.blobs = std::move(comps);
    return map;
}

BlobLineMap threshold_blob_lines(const PseudoRGB& prgb, const imaging::BinarizedPage& page) {
    if (prgb.image.rows != page.rows() || prgb.image.cols != page.cols())
        throw Error("threshold_blob_lines: pseudo-RGB and page dimensions differ");
    const GrayImage ch = prgb.channel(0);
    std::array<std::uint64_t, 256> hist{};
    for (auto v : ch.data()) ++hist[v];
    int t = 0;
    try {
        t = imaging::otsu_threshold(hist);
    } catch (const Error&) {
        throw Error("no blob lines detected");
    }

    // Ink density on each side of the threshold.
    std::array<double, 2> ink{}, area{};
    const auto v = ch.data();
    const auto fg = page.fg_mask.data();
    for (std::size_t i = 0; i < v.size(); ++i) {
        const int side = v[i] > t ? 1 : 0;
        area[side] += 1.0;
        ink[side] += fg[i];
    }
    const double d_low = area[0] > 0 ? ink[0] / area[0] : 0.0;
    const double d_high = area[1] > 0 ? ink[1] / area[1] : 0.0;
    if (d_low == 0.0 && d_high == 0.0) throw Error("no blob lines detected");
    const int line_side = d_low > d_high ? 0 : 1;

    Mask mask(page.rows(), page.cols());
    auto m = mask.data();
    bool any = false;
    for (std::size_t i = 0; i < v.size(); ++i) {
        m[i] = ((v[i] > t ? 1 : 0) == line_side) ? 1 : 0;
        any = any || m[i];
    }
    if (!any) throw Error("no blob lines detected");
    return index_blobs(std::move(mask));
}

BlobLineMap morphological_cleanup(const BlobLineMap& map, std::size_t min_blob_area) {
    Mask mask(map.mask.rows(), map.mask.cols());
    for (const auto& b : map.blobs)
        if (b.area() >= min_blob_area)
            for (const auto& p : b.pixels) mask(p.row, p.col) = 1;
    BlobLineMap out;
    out.mask = std::move(mask);
    for (const auto& b : map.blobs)
        if (b.area() >= min_blob_area) out.blobs.push_back(b);
    for (std::size_t i = 0; i < out.blobs.size(); ++i) out.blobs[i].id = static_cast<int>(i);
    return out;
}

}  // namespace utls::detect
