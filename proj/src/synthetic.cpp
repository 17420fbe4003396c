#include "utls/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace utls::synth {

void SyntheticPageSpec::validate() const {
    if (n_lines < 1) throw Error("synth: n_lines must be >= 1");
    if (line_height < 2) throw Error("synth: line_height must be >= 2");
    if (interline_gap < 0) throw Error("synth: interline_gap must be >= 0");
    if (word_min < 2 || word_max < word_min) throw Error("synth: need 2 <= word_min <= word_max");
    if (!(word_density > 0.0 && word_density <= 1.0)) throw Error("synth: word_density must be in (0, 1]");
    if (margin < 0) throw Error("synth: margin must be >= 0");
    if (page_width < 2 * margin + word_min) throw Error("synth: page_width too small for margins and one word");
    if (height_jitter < 0.0 || height_jitter >= 1.0 || gap_jitter < 0.0 || gap_jitter >= 1.0)
        throw Error("synth: jitter must be in [0, 1)");
    if (dot_rate < 0.0) throw Error("synth: dot_rate must be >= 0");
    if (std::abs(skew_degrees) >= 45.0) throw Error("synth: |skew_degrees| must be < 45");
}

int SyntheticPageSpec::page_height() const {
    return 2 * margin + n_lines * line_height + (n_lines - 1) * interline_gap;
}

namespace {

void fill_ellipse(Raster<std::uint8_t>& ink, LabelImage& gt, std::uint16_t label, double cy, double cx, double ry,
                  double rx) {
    const int r0 = std::max(0, static_cast<int>(std::floor(cy - ry)));
    const int r1 = std::min(ink.rows() - 1, static_cast<int>(std::ceil(cy + ry)));
    const int c0 = std::max(0, static_cast<int>(std::floor(cx - rx)));
    const int c1 = std::min(ink.cols() - 1, static_cast<int>(std::ceil(cx + rx)));
    for (int r = r0; r <= r1; ++r)
        for (int c = c0; c <= c1; ++c) {
            const double dy = (r - cy) / ry;
            const double dx = (c - cx) / rx;
            if (dy * dy + dx * dx <= 1.0) {
                ink(r, c) = 1;
                gt(r, c) = label;
            }
        }
}

}  // namespace

SyntheticPage generate_page(const SyntheticPageSpec& spec, int page_index) {
    spec.validate();
    std::seed_seq seq{static_cast<std::uint32_t>(spec.seed), static_cast<std::uint32_t>(spec.seed >> 32),
                      static_cast<std::uint32_t>(page_index), 0x5e17u};
    std::mt19937_64 rng(seq);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

    const int rows = spec.page_height();
    const int cols = spec.page_width;
    Raster<std::uint8_t> ink(rows, cols, 0);
    LabelImage gt(rows, cols, 0);
    const double slope = std::tan(spec.skew_degrees * std::numbers::pi / 180.0);
    const double pitch = spec.line_height + spec.interline_gap;
    const double half = spec.line_height / 2.0;
    // Mean blank run between words giving the requested coverage.
    const double mean_word = (spec.word_min + spec.word_max) / 2.0;
    const double mean_space = mean_word * (1.0 - spec.word_density) / spec.word_density;

    for (int line = 0; line < spec.n_lines; ++line) {
        const auto label = static_cast<std::uint16_t>(line + 1);
        const double centre = spec.margin + half + line * pitch + uniform(-1.0, 1.0) * spec.gap_jitter * half;
        auto row_at = [&](double x) { return centre + slope * (x - cols / 2.0); };
        double x = spec.margin + uniform(0.0, mean_space);
        const double x_end = cols - spec.margin;
        while (x + spec.word_min <= x_end) {
            const double len = std::min(uniform(spec.word_min, spec.word_max), x_end - x);
            // Stroke chain: overlapping ellipses spaced closer than their width.
            for (double sx = x + 3.0; sx <= x + len - 3.0; sx += uniform(2.5, 4.5)) {
                const double ry = half * (1.0 - spec.height_jitter * unit(rng));
                const double cy = row_at(sx) + uniform(-1.0, 1.0) * spec.height_jitter * half;
                fill_ellipse(ink, gt, label, cy, sx, ry, uniform(2.5, 4.0));
            }
            const int dots = static_cast<int>(std::floor(len * spec.dot_rate + unit(rng)));
            for (int d = 0; d < dots; ++d) {
                const double dx = uniform(x + 2.0, x + len - 2.0);
                const double side = unit(rng) < 0.5 ? -1.0 : 1.0;
                const double radius = uniform(1.2, 2.0);
                fill_ellipse(ink, gt, label, row_at(dx) + side * (half + radius + uniform(2.0, 4.0)), dx, radius,
                             radius);
            }
            x += len + std::max(2.0, uniform(0.5, 1.5) * mean_space);
        }
    }

    SyntheticPage page{GrayImage(rows, cols, 0), std::move(gt)};
    std::uniform_int_distribution<int> noise(-10, 10);
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c)
            page.gray(r, c) = static_cast<std::uint8_t>((ink(r, c) ? 40 : 230) + noise(rng));
    return page;
}

}  // namespace utls::synth
