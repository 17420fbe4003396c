#pragma once

// Page ingestion: binarization, connected components, and patch geometry.

#include <optional>
#include <string>
#include <vector>

#include "utls/raster.hpp"

namespace utls::imaging {

struct BinarizedPage {
    GrayImage gray;
    Mask fg_mask;  ///< 1 = ink
    std::string source_id;

    int rows() const { return gray.rows(); }
    int cols() const { return gray.cols(); }
};

enum class BinarizeMethod { otsu, sauvola };

struct BinarizeParams {
    BinarizeMethod method = BinarizeMethod::otsu;
    int sauvola_window = 31;
    double sauvola_k = 0.2;
    double sauvola_range = 128.0;
};

/// Global Otsu threshold of a 256-bin histogram. Pixels with intensity
/// <= the returned value are ink. When several thresholds tie for the
/// maximal between-class variance the middle of the tied run is returned.
/// Throws "degenerate histogram" when fewer than two intensities occur.
int otsu_threshold(std::span<const std::uint64_t> histogram);

BinarizedPage binarize(GrayImage gray, const BinarizeParams& params, std::string source_id = {});

/// Builds a page from an existing mask (gray rendered as 0 ink / 255 paper).
BinarizedPage page_from_mask(const Mask& mask, std::string source_id = {});

struct Point {
    int row = 0;
    int col = 0;
    bool operator==(const Point&) const = default;
};

struct BBox {
    int top = 0;
    int left = 0;
    int height = 0;
    int width = 0;
};

struct Component {
    int id = 0;
    std::vector<Point> pixels;  ///< raster order
    double centroid_row = 0.0;
    double centroid_col = 0.0;
    BBox bbox;

    std::size_t area() const { return pixels.size(); }
};

struct ComponentSet {
    std::vector<Component> components;

    std::size_t size() const { return components.size(); }
    bool empty() const { return components.empty(); }
};

enum class Connectivity { four = 4, eight = 8 };

/// Components sorted by bbox (top, left), ties by first pixel in raster
/// order; ids dense from 0.
ComponentSet connected_components(const Mask& mask, Connectivity connectivity = Connectivity::eight);
ComponentSet connected_components(const BinarizedPage& page,
                                  Connectivity connectivity = Connectivity::eight);

struct PatchGeometry {
    int h_p = 0;
    int w_p = 0;
    int h_i = 10;
    int w_i = 10;

    /// Throws when sizes are non-positive, the inner window exceeds the
    /// patch, or the margins around the inner window are odd.
    void validate() const;
    bool operator==(const PatchGeometry&) const = default;
};

/// Median bbox height over components whose area lies within the
/// [10th, 95th] percentile band of component areas.
double robust_character_height(const ComponentSet& components);

/// h_p = round(3 x character height), w_p = override or h_p, inner 10 x 10,
/// then each patch side is bumped by one when needed so that the margin
/// around the inner window is even.
PatchGeometry estimate_patch_geometry(const BinarizedPage& page,
                                      std::optional<int> w_p_override = std::nullopt,
                                      int inner = 10);

/// Patch geometry for an explicit patch height; shares the parity fix-up.
PatchGeometry make_patch_geometry(int h_p, int w_p, int inner = 10);

}  // namespace utls::imaging
