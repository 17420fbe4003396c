#include "utls/imaging.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace utls::imaging {

int otsu_threshold(std::span<const std::uint64_t> histogram) {
    if (histogram.size() != 256) throw Error("otsu: histogram must have 256 bins");
    const auto occupied = std::count_if(histogram.begin(), histogram.end(), [](auto n) { return n > 0; });
    if (occupied < 2) throw Error("degenerate histogram");

    double total = 0.0;
    double total_sum = 0.0;
    for (int v = 0; v < 256; ++v) {
        total += static_cast<double>(histogram[v]);
        total_sum += static_cast<double>(v) * static_cast<double>(histogram[v]);
    }

    std::array<double, 256> between{};
    double best = -1.0;
    double w0 = 0.0;
    double sum0 = 0.0;
    for (int t = 0; t < 255; ++t) {
        w0 += static_cast<double>(histogram[t]);
        sum0 += static_cast<double>(t) * static_cast<double>(histogram[t]);
        const double w1 = total - w0;
        if (w0 == 0.0 || w1 == 0.0) {
            between[t] = -1.0;
            continue;
        }
        const double mu0 = sum0 / w0;
        const double mu1 = (total_sum - sum0) / w1;
        between[t] = (w0 / total) * (w1 / total) * (mu0 - mu1) * (mu0 - mu1);
        best = std::max(best, between[t]);
    }
    const double tol = best * 1e-12;
    int first = -1;
    int last = -1;
    for (int t = 0; t < 255; ++t) {
        if (between[t] >= best - tol) {
            if (first < 0) first = t;
            last = t;
        }
    }
    return (first + last) / 2;
}

namespace {

Mask otsu_mask(const GrayImage& gray) {
    std::array<std::uint64_t, 256> hist{};
    for (auto v : gray.data()) ++hist[v];
    const int t = otsu_threshold(hist);
    Mask mask(gray.rows(), gray.cols());
    auto out = mask.data();
    auto in = gray.data();
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] <= t ? 1 : 0;
    return mask;
}

Mask sauvola_mask(const GrayImage& gray, const BinarizeParams& p) {
    if (p.sauvola_window < 1) throw Error("sauvola window must be positive");
    const int rows = gray.rows();
    const int cols = gray.cols();
    // Integral images with a zero border row/column.
    std::vector<double> sum(static_cast<std::size_t>(rows + 1) * (cols + 1), 0.0);
    std::vector<double> sq(sum.size(), 0.0);
    auto at = [cols](int r, int c) { return static_cast<std::size_t>(r) * (cols + 1) + c; };
    for (int r = 0; r < rows; ++r) {
        double row_sum = 0.0;
        double row_sq = 0.0;
        for (int c = 0; c < cols; ++c) {
            const double v = gray(r, c);
            row_sum += v;
            row_sq += v * v;
            sum[at(r + 1, c + 1)] = sum[at(r, c + 1)] + row_sum;
            sq[at(r + 1, c + 1)] = sq[at(r, c + 1)] + row_sq;
        }
    }
    const int half = p.sauvola_window / 2;
    Mask mask(rows, cols);
    for (int r = 0; r < rows; ++r) {
        const int r0 = std::max(0, r - half);
        const int r1 = std::min(rows, r + half + 1);
        for (int c = 0; c < cols; ++c) {
            const int c0 = std::max(0, c - half);
            const int c1 = std::min(cols, c + half + 1);
            const double n = static_cast<double>(r1 - r0) * (c1 - c0);
            const double s = sum[at(r1, c1)] - sum[at(r0, c1)] - sum[at(r1, c0)] + sum[at(r0, c0)];
            const double s2 = sq[at(r1, c1)] - sq[at(r0, c1)] - sq[at(r1, c0)] + sq[at(r0, c0)];
            const double mean = s / n;
            const double stddev = std::sqrt(std::max(0.0, s2 / n - mean * mean));
            const double t = mean * (1.0 + p.sauvola_k * (stddev / p.sauvola_range - 1.0));
            mask(r, c) = gray(r, c) <= t ? 1 : 0;
        }
    }
    return mask;
}

}  // namespace

BinarizedPage binarize(GrayImage gray, const BinarizeParams& params, std::string source_id) {
    if (gray.empty()) throw Error("degenerate histogram: empty image");
    Mask mask = params.method == BinarizeMethod::otsu ? otsu_mask(gray) : sauvola_mask(gray, params);
    return BinarizedPage{std::move(gray), std::move(mask), std::move(source_id)};
}

BinarizedPage page_from_mask(const Mask& mask, std::string source_id) {
    GrayImage gray(mask.rows(), mask.cols(), 255);
    auto g = gray.data();
    auto m = mask.data();
    for (std::size_t i = 0; i < m.size(); ++i) g[i] = m[i] ? 0 : 255;
    return BinarizedPage{std::move(gray), mask, std::move(source_id)};
}

ComponentSet connected_components(const Mask& mask, Connectivity connectivity) {
    const int rows = mask.rows();
    const int cols = mask.cols();
    Raster<int> label(rows, cols, -1);
    std::vector<Component> found;
    std::vector<Point> stack;

    const bool eight = connectivity == Connectivity::eight;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            if (!mask(r, c) || label(r, c) >= 0) continue;
            const int id = static_cast<int>(found.size());
            Component comp;
            stack.clear();
            stack.push_back({r, c});
            label(r, c) = id;
            while (!stack.empty()) {
                const Point p = stack.back();
                stack.pop_back();
                comp.pixels.push_back(p);
                for (int dr = -1; dr <= 1; ++dr) {
                    for (int dc = -1; dc <= 1; ++dc) {
                        if (dr == 0 && dc == 0) continue;
                        if (!eight && dr != 0 && dc != 0) continue;
                        const int nr = p.row + dr;
                        const int nc = p.col + dc;
                        if (!mask.contains(nr, nc) || !mask(nr, nc) || label(nr, nc) >= 0) continue;
                        label(nr, nc) = id;
                        stack.push_back({nr, nc});
                    }
                }
            }
            std::sort(comp.pixels.begin(), comp.pixels.end(), [](const Point& a, const Point& b) {
                return a.row != b.row ? a.row < b.row : a.col < b.col;
            });
            int top = rows, left = cols, bottom = -1, right = -1;
            double sr = 0.0, sc = 0.0;
            for (const auto& p : comp.pixels) {
                top = std::min(top, p.row);
                bottom = std::max(bottom, p.row);
                left = std::min(left, p.col);
                right = std::max(right, p.col);
                sr += p.row;
                sc += p.col;
            }
            const double n = static_cast<double>(comp.pixels.size());
            comp.centroid_row = sr / n;
            comp.centroid_col = sc / n;
            comp.bbox = {top, left, bottom - top + 1, right - left + 1};
            found.push_back(std::move(comp));
        }
    }

    // Discovery order is raster order of each component's first pixel, which
    // already breaks (top, left) ties deterministically.
    std::stable_sort(found.begin(), found.end(), [](const Component& a, const Component& b) {
        if (a.bbox.top != b.bbox.top) return a.bbox.top < b.bbox.top;
        if (a.bbox.left != b.bbox.left) return a.bbox.left < b.bbox.left;
        return std::make_pair(a.pixels[0].row, a.pixels[0].col) < std::make_pair(b.pixels[0].row, b.pixels[0].col);
    });
    for (std::size_t i = 0; i < found.size(); ++i) found[i].id = static_cast<int>(i);
    return ComponentSet{std::move(found)};
}

ComponentSet connected_components(const BinarizedPage& page, Connectivity connectivity) {
    return connected_components(page.fg_mask, connectivity);
}

void PatchGeometry::validate() const {
    if (h_p <= 0 || w_p <= 0 || h_i <= 0 || w_i <= 0) throw Error("patch geometry: sizes must be positive");
    if (h_i > h_p || w_i > w_p) throw Error("patch geometry: inner window larger than patch");
    if ((h_p - h_i) % 2 != 0 || (w_p - w_i) % 2 != 0)
        throw Error("patch geometry: patch and inner window margins must be even");
}

namespace {

double percentile(const std::vector<double>& sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(sorted.size() - 1, lo + 1);
    const double frac = pos - static_cast<double>(lo);
    return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

int fix_parity(int side, int inner) {
    side = std::max(side, inner);
    return (side - inner) % 2 == 0 ? side : side + 1;
}

}  // namespace

double robust_character_height(const ComponentSet& components) {
    if (components.empty()) throw Error("cannot estimate character height");
    std::vector<double> areas;
    areas.reserve(components.size());
    for (const auto& c : components.components) areas.push_back(static_cast<double>(c.area()));
    std::vector<double> sorted = areas;
    std::sort(sorted.begin(), sorted.end());
    const double lo = percentile(sorted, 0.10);
    const double hi = percentile(sorted, 0.95);
    std::vector<double> heights;
    for (const auto& c : components.components) {
        const auto a = static_cast<double>(c.area());
        if (a >= lo && a <= hi) heights.push_back(c.bbox.height);
    }
    // The band always holds at least the component at the median area; this
    // guards against pathological rounding only.
    if (heights.empty())
        for (const auto& c : components.components) heights.push_back(c.bbox.height);
    return median(std::move(heights));
}

PatchGeometry make_patch_geometry(int h_p, int w_p, int inner) {
    if (inner <= 0) throw Error("patch geometry: inner window must be positive");
    PatchGeometry g{fix_parity(h_p, inner), fix_parity(w_p, inner), inner, inner};
    g.validate();
    return g;
}

PatchGeometry estimate_patch_geometry(const BinarizedPage& page, std::optional<int> w_p_override, int inner) {
    const ComponentSet comps = connected_components(page);
    if (comps.empty()) throw Error("cannot estimate character height");
    const int h_p = static_cast<int>(std::lround(3.0 * robust_character_height(comps)));
    if (w_p_override && *w_p_override <= 0) throw Error("patch geometry: w_p override must be positive");
    return make_patch_geometry(h_p, w_p_override.value_or(h_p), inner);
}

}  // namespace utls::imaging
