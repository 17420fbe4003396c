#pragma once

// Blob-line detection: embed every inner-window cell of a page with one
// branch of the trained network, project the cell vectors onto their top
// three principal components (a pseudo-RGB rendering), and threshold the
// first component into line blobs.

#include <array>
#include <vector>

#include "utls/imaging.hpp"
#include "utls/siamese_net.hpp"

namespace utls::detect {

struct EmbeddingGrid {
    int n_rows = 0;
    int n_cols = 0;
    int dim = 0;
    int cell_h = 0;
    int cell_w = 0;
    int page_h = 0;
    int page_w = 0;
    std::vector<float> vectors;  ///< (n_rows * n_cols) x dim, row-major over cells

    const float* at(int r, int c) const {
        return vectors.data() + (static_cast<std::size_t>(r) * n_cols + c) * dim;
    }
    std::size_t cells() const { return static_cast<std::size_t>(n_rows) * n_cols; }
};

/// Pads the page with white (right/bottom up to whole cells, then the patch
/// margin on all four sides) and embeds the patch centred on every cell.
EmbeddingGrid embed_page(const nn::Checkpoint& ckpt, const imaging::BinarizedPage& page,
                         const imaging::PatchGeometry& geom, int jobs = 1);

struct PrincipalComponents {
    std::vector<double> mean;                     ///< dim
    std::vector<std::vector<double>> directions;  ///< up to k unit vectors, descending variance
    std::vector<double> variances;                ///< eigenvalues, same order
    double total_variance = 0.0;
};

/// Top-k principal directions of the rows of `data` (n x dim), from the
/// eigendecomposition of the covariance (normalised by n). Directions whose variance is
/// numerically zero are omitted. Each direction is signed so that its
/// largest-magnitude coordinate is positive.
PrincipalComponents principal_components(const std::vector<float>& data, std::size_t n, int dim, int k);

struct PseudoRGB {
    RgbImage image;                             ///< page_h x page_w
    std::array<double, 3> explained_variance{};  ///< fraction of total variance; 0 marks a missing component
    int rank = 0;                               ///< number of non-degenerate components (<= 3)
    GrayImage channel(int k) const;
};

PseudoRGB pca_pseudo_rgb(const EmbeddingGrid& grid);

struct BlobLineMap {
    Mask mask;
    std::vector<imaging::Component> blobs;  ///< ordered by centroid row, ids dense from 0
};

/// Indexes the 8-connected blobs of a mask.
BlobLineMap index_blobs(Mask mask);

/// Otsu on the first pseudo-RGB channel; the side with the higher mean ink
/// density under the page's foreground mask becomes the blob side.
BlobLineMap threshold_blob_lines(const PseudoRGB& prgb, const imaging::BinarizedPage& page);

/// Drops blobs with fewer than min_blob_area pixels and re-indexes.
BlobLineMap morphological_cleanup(const BlobLineMap& map, std::size_t min_blob_area);

}  // namespace utls::detect
