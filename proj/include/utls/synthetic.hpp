#pragma once

// Synthetic handwriting-like pages: each text line is a row of word blobs
// (chains of overlapping ellipses) with a few detached dots above or below,
// so the ground truth line of every ink pixel is known by construction.

#include <cstdint>

#include "utls/raster.hpp"

namespace utls::synth {

struct SyntheticPageSpec {
    int n_lines = 10;
    int line_height = 16;     ///< word blob height in px
    int interline_gap = 48;   ///< blank rows between consecutive lines
    double skew_degrees = 0.0;
    double word_density = 0.85; ///< fraction of each line covered by words
    int word_min = 30;
    int word_max = 90;
    int page_width = 512;
    int margin = 48;          ///< blank border on every side
    double height_jitter = 0.1;  ///< relative jitter of blob heights
    double gap_jitter = 0.1;     ///< relative jitter of line positions
    double dot_rate = 0.008;     ///< detached dots per px of word length
    std::uint64_t seed = 1;

    /// Throws on non-positive sizes or out-of-range fractions.
    void validate() const;
    /// margin * 2 + n_lines * line_height + (n_lines - 1) * interline_gap
    int page_height() const;
};

struct SyntheticPage {
    GrayImage gray;   ///< ink around 40, paper around 230
    LabelImage gt;    ///< line id (1-based) on ink pixels, 0 elsewhere
};

/// Deterministic for (spec, page_index). Where lines touch the later line
/// owns the shared pixels.
SyntheticPage generate_page(const SyntheticPageSpec& spec, int page_index);

}  // namespace utls::synth
