#pragma once

// Component-to-line assignment by energy minimisation. Each connected
// component takes the label of one blob line; the energy adds the distance
// from the component centroid to the nearest pixel of its blob and, for
// every neighbouring pair that is split across labels, exp(-beta * d) where
// d is the centroid distance and beta = 1 / (2 * mean neighbour distance).

#include <array>
#include <string>
#include <span>
#include <vector>

#include "utls/imaging.hpp"
#include "utls/line_detector.hpp"

namespace utls::extract {

/// Exact nearest-pixel queries against one blob in continuous coordinates.
class BlobDistance {
public:
    explicit BlobDistance(const imaging::Component& blob);
    double nearest(double row, double col) const;

private:
    struct Row {
        int row;
        std::vector<int> cols;  ///< sorted
    };
    std::vector<Row> rows_;
};

/// Euclidean distance from the component centroid to the closest pixel of
/// the blob. Throws on an empty blob.
double data_cost(const imaging::Component& component, const imaging::Component& blob);

/// exp(-beta * d_c)
double smoothness_cost(double d_c, double beta);

struct NeighborPair {
    int a = 0;  ///< a < b
    int b = 0;
    double distance = 0.0;
};

struct ComponentGraph {
    std::vector<std::array<double, 2>> centroids;  ///< (row, col) per component id
    std::vector<NeighborPair> neighbors;            ///< sorted by (a, b), unique
    /// 1 / (2 mean distance); 0 when there are no neighbour pairs or the mean
    /// distance is 0, which switches the pairwise term off.
    double beta = 0.0;
};

/// Links every component to its k nearest components by centroid distance
/// (ties by lower id), symmetrised.
ComponentGraph build_component_graph(const imaging::ComponentSet& comps, int k);

/// n_components x n_labels data-cost table.
struct CostTable {
    int n_components = 0;
    int n_labels = 0;
    std::vector<double> cost;

    double operator()(int c, int l) const { return cost[static_cast<std::size_t>(c) * n_labels + l]; }
};

CostTable data_cost_table(const imaging::ComponentSet& comps, const std::vector<imaging::Component>& blobs);

/// Data term plus the smoothness penalty over split neighbour pairs.
double total_energy(const ComponentGraph& graph, const CostTable& costs, std::span<const int> assignment);

/// Lowest data cost per component, ties to the lower label id.
std::vector<int> nearest_assignment(const CostTable& costs);

struct SolverStats {
    int sweeps = 0;
    int accepted_moves = 0;
    bool exact = false;  ///< solved by enumeration-free exact path (<= 2 labels or no pairwise term)
};

/// Alpha-expansion from the nearest-blob assignment, label order 0..L-1,
/// until a full sweep brings no improvement (at most max_sweeps). Two-label
/// problems are solved exactly by one minimum cut. Never returns an
/// assignment with higher energy than the nearest-blob one.
std::vector<int> minimize_energy(const ComponentGraph& graph, const CostTable& costs, int max_sweeps = 10,
                                 SolverStats* stats = nullptr);

struct LineLabeling {
    std::vector<int> assignment;  ///< component id -> blob id
    double energy = 0.0;
    LabelImage pixel_labels;      ///< 0 background, blob id + 1 on component pixels
};

LineLabeling extract_lines(const imaging::BinarizedPage& page, const detect::BlobLineMap& blobs,
                           const imaging::ComponentSet& comps, int k = 4, int max_sweeps = 10);

/// Outer and hole boundaries of every line label, as JSON
/// {"lines":[{"label":k,"contours":[[[x,y],...],...]}]}.
std::string line_polygons_json(const LabelImage& labels);

}  // namespace utls::extract
