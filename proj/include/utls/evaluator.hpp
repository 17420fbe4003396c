#pragma once

// Region-level line segmentation scores: one-to-one MatchScore matching
// (detection rate, recognition accuracy, F-measure) and IU-based pixel and
// line scores. Points are counted over the page's foreground pixels only.

#include <cstdint>
#include <string>
#include <vector>

#include "utls/raster.hpp"

namespace utls::eval {

struct Region {
    int id = 0;
    std::vector<std::uint32_t> pixels;  ///< sorted linear indices into the page
};

enum class RegionKind { ground_truth, prediction };

struct RegionSet {
    int rows = 0;
    int cols = 0;
    RegionKind kind = RegionKind::prediction;
    std::vector<Region> regions;
};

/// One region per non-zero label (id = label), restricted to `foreground`
/// when given. Labels with no counted point produce no region.
RegionSet regions_from_labels(const LabelImage& labels, const Mask* foreground, RegionKind kind);

/// T(G n R) / T(G u R); 0 when both regions are empty.
double match_score(const Region& gt, const Region& pred);

struct Icdar2013Report {
    std::vector<std::vector<double>> match_matrix;  ///< |G| x |R|
    long M = 0;
    long N1 = 0;
    long N2 = 0;
    double DR = 0.0;
    double RA = 0.0;
    double FM = 0.0;
    double threshold = 0.90;
    bool degenerate = false;  ///< a ratio had a zero denominator and was reported as 0
};

/// Pairs scoring >= threshold are matched greedily by descending score,
/// ties by (gt id, pred id), each region used at most once.
Icdar2013Report evaluate_icdar2013(const RegionSet& gt, const RegionSet& pred, double threshold = 0.90);

struct PairIu {
    int gt_id = 0;
    int pred_id = 0;
    double iu = 0.0;
    long tp = 0;
    long fp = 0;
    long fn = 0;
    double precision = 0.0;
    double recall = 0.0;
};

struct Icdar2017Report {
    std::vector<PairIu> pair_ius;  ///< matched pairs
    long TP = 0;
    long FP = 0;
    long FN = 0;
    double pixel_iu = 0.0;
    double line_iu = 0.0;
    long CL = 0;
    long ML = 0;
    long EL = 0;
    double threshold = 0.75;
    bool degenerate = false;
};

/// Greedy one-to-one matching by descending IU (IU > 0). A matched line is
/// correct when precision and recall both reach the threshold, missed when
/// recall falls short, extra when precision falls short. Unmatched ground
/// truth lines are missed (their points count as FN), unmatched predictions
/// are extra (their points count as FP).
Icdar2017Report evaluate_icdar2017(const RegionSet& gt, const RegionSet& pred, double threshold = 0.75);

struct PageReport {
    std::string page_id;
    Icdar2013Report icdar2013;
    Icdar2017Report icdar2017;
};

struct CorpusReport {
    std::vector<PageReport> pages;
    long M = 0, N1 = 0, N2 = 0;
    long TP = 0, FP = 0, FN = 0;
    long CL = 0, ML = 0, EL = 0;
    double DR = 0.0, RA = 0.0, FM = 0.0;
    double pixel_iu = 0.0, line_iu = 0.0;
};

/// Micro-average: every score recomputed from the summed counts.
CorpusReport aggregate_reports(std::vector<PageReport> pages);

PageReport evaluate_page(const std::string& page_id, const LabelImage& gt, const LabelImage& pred,
                         const Mask& foreground, double threshold_2013, double threshold_2017);

/// JSON document with a header describing the point convention, one row per
/// page and the corpus summary.
std::string report_json(const CorpusReport& report);
/// Tab-separated per-page table with a final corpus row.
std::string report_tsv(const CorpusReport& report);

/// Ground-truth lines in pastel colours with prediction boundaries in black.
RgbImage overlay(const LabelImage& gt, const LabelImage& pred);

}  // namespace utls::eval
