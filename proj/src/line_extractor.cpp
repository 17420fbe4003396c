#include "utls/line_extractor.hpp"

#include <algorithm>
#include <cmath>
#include <json.hpp>
#include <limits>
#include <map>
#include <opencv2/imgproc.hpp>
#include <set>

#include "utls/maxflow.hpp"

namespace utls::extract {

BlobDistance::BlobDistance(const imaging::Component& blob) {
    if (blob.pixels.empty()) throw Error("data cost: empty blob");
    // Component pixels are in raster order.
    for (const auto& p : blob.pixels) {
        if (rows_.empty() || rows_.back().row != p.row) rows_.push_back({p.row, {}});
        rows_.back().cols.push_back(p.col);
    }
}

double BlobDistance::nearest(double row, double col) const {
    double best = std::numeric_limits<double>::infinity();
    auto scan = [&](const Row& r) {
        const double dy = r.row - row;
        const auto it = std::lower_bound(r.cols.begin(), r.cols.end(), col);
        if (it != r.cols.end()) best = std::min(best, std::hypot(dy, *it - col));
        if (it != r.cols.begin()) best = std::min(best, std::hypot(dy, *std::prev(it) - col));
    };
    const auto mid = std::lower_bound(rows_.begin(), rows_.end(), row,
                                      [](const Row& r, double v) { return r.row < v; });
    // Walk outwards; stop a direction once its vertical offset alone exceeds the best.
    for (auto it = mid; it != rows_.end(); ++it) {
        if (std::abs(it->row - row) > best) break;
        scan(*it);
    }
    for (auto it = mid; it != rows_.begin();) {
        --it;
        if (std::abs(it->row - row) > best) break;
        scan(*it);
    }
    return best;
}

double data_cost(const imaging::Component& component, const imaging::Component& blob) {
    return BlobDistance(blob).nearest(component.centroid_row, component.centroid_col);
}

double smoothness_cost(double d_c, double beta) { return std::exp(-beta * d_c); }

ComponentGraph build_component_graph(const imaging::ComponentSet& comps, int k) {
    if (comps.empty()) throw Error("component graph: no components");
    if (k < 1) throw Error("component graph: k must be positive");
    ComponentGraph g;
    const int n = static_cast<int>(comps.size());
    for (const auto& c : comps.components) g.centroids.push_back({c.centroid_row, c.centroid_col});

    auto dist = [&](int i, int j) {
        return std::hypot(g.centroids[i][0] - g.centroids[j][0], g.centroids[i][1] - g.centroids[j][1]);
    };
    std::set<std::pair<int, int>> edges;
    std::vector<std::pair<double, int>> cand;
    for (int i = 0; i < n; ++i) {
        cand.clear();
        for (int j = 0; j < n; ++j)
            if (j != i) cand.emplace_back(dist(i, j), j);
        const auto take = std::min<std::size_t>(static_cast<std::size_t>(k), cand.size());
        std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(take), cand.end());
        for (std::size_t t = 0; t < take; ++t) {
            const int j = cand[t].second;
            edges.insert({std::min(i, j), std::max(i, j)});
        }
    }
    double sum = 0.0;
    for (const auto& [a, b] : edges) {
        g.neighbors.push_back({a, b, dist(a, b)});
        sum += g.neighbors.back().distance;
    }
    if (!g.neighbors.empty()) {
        const double mean = sum / static_cast<double>(g.neighbors.size());
        g.beta = mean > 0.0 ? 1.0 / (2.0 * mean) : 0.0;
    }
    return g;
}

CostTable data_cost_table(const imaging::ComponentSet& comps, const std::vector<imaging::Component>& blobs) {
    CostTable t;
    t.n_components = static_cast<int>(comps.size());
    t.n_labels = static_cast<int>(blobs.size());
    t.cost.resize(static_cast<std::size_t>(t.n_components) * t.n_labels);
    for (int l = 0; l < t.n_labels; ++l) {
        const BlobDistance d(blobs[l]);
        for (int c = 0; c < t.n_components; ++c)
            t.cost[static_cast<std::size_t>(c) * t.n_labels + l] =
                d.nearest(comps.components[c].centroid_row, comps.components[c].centroid_col);
    }
    return t;
}

double total_energy(const ComponentGraph& graph, const CostTable& costs, std::span<const int> assignment) {
    if (static_cast<int>(assignment.size()) != costs.n_components)
        throw Error("total_energy: every component needs a label");
    double e = 0.0;
    for (int c = 0; c < costs.n_components; ++c) {
        const int l = assignment[c];
        if (l < 0 || l >= costs.n_labels) throw Error("total_energy: component " + std::to_string(c) + " is unassigned");
        e += costs(c, l);
    }
    if (graph.beta > 0.0)
        for (const auto& p : graph.neighbors)
            if (assignment[p.a] != assignment[p.b]) e += smoothness_cost(p.distance, graph.beta);
    return e;
}

std::vector<int> nearest_assignment(const CostTable& costs) {
    std::vector<int> a(costs.n_components, 0);
    for (int c = 0; c < costs.n_components; ++c)
        for (int l = 1; l < costs.n_labels; ++l)
            if (costs(c, l) < costs(c, a[c])) a[c] = l;
    return a;
}

namespace {

std::vector<int> solve_two_labels(const ComponentGraph& graph, const CostTable& costs) {
    BinaryEnergy energy(costs.n_components);
    for (int c = 0; c < costs.n_components; ++c) energy.add_unary(c, costs(c, 0), costs(c, 1));
    for (const auto& p : graph.neighbors) {
        const double w = smoothness_cost(p.distance, graph.beta);
        energy.add_pairwise(p.a, p.b, 0.0, w, w, 0.0);
    }
    return energy.minimize();
}

std::vector<int> expand(const ComponentGraph& graph, const CostTable& costs, const std::vector<int>& current,
                        int alpha) {
    const int n = costs.n_components;
    BinaryEnergy energy(n);
    // x = 0 keeps the current label, x = 1 switches to alpha.
    for (int c = 0; c < n; ++c) {
        const double keep = costs(c, current[c]);
        energy.add_unary(c, keep, current[c] == alpha ? keep : costs(c, alpha));
    }
    for (const auto& p : graph.neighbors) {
        const double w = smoothness_cost(p.distance, graph.beta);
        const int la = current[p.a];
        const int lb = current[p.b];
        const bool fixed_a = la == alpha;
        const bool fixed_b = lb == alpha;
        if (fixed_a && fixed_b) continue;
        if (fixed_a) {
            energy.add_unary(p.b, lb != alpha ? w : 0.0, 0.0);
        } else if (fixed_b) {
            energy.add_unary(p.a, la != alpha ? w : 0.0, 0.0);
        } else {
            energy.add_pairwise(p.a, p.b, la != lb ? w : 0.0, w, w, 0.0);
        }
    }
    const std::vector<int> x = energy.minimize();
    std::vector<int> next = current;
    for (int c = 0; c < n; ++c)
        if (x[c] == 1) next[c] = alpha;
    return next;
}

}  // namespace

std::vector<int> minimize_energy(const ComponentGraph& graph, const CostTable& costs, int max_sweeps,
                                 SolverStats* stats) {
    if (costs.n_labels < 1) throw Error("no labels available");
    if (static_cast<int>(graph.centroids.size()) != costs.n_components)
        throw Error("minimize_energy: graph and cost table disagree on the component count");
    SolverStats local;
    SolverStats& st = stats ? *stats : local;
    st = {};

    std::vector<int> best = nearest_assignment(costs);
    if (graph.beta <= 0.0 || graph.neighbors.empty() || costs.n_labels == 1 || costs.n_components == 0) {
        st.exact = true;
        return best;
    }
    double best_energy = total_energy(graph, costs, best);
    const double tol = 1e-12 * std::max(1.0, std::abs(best_energy));

    if (costs.n_labels == 2) {
        st.exact = true;
        std::vector<int> cut = solve_two_labels(graph, costs);
        if (total_energy(graph, costs, cut) < best_energy - tol) best = std::move(cut);
        return best;
    }

    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        ++st.sweeps;
        bool improved = false;
        for (int alpha = 0; alpha < costs.n_labels; ++alpha) {
            std::vector<int> next = expand(graph, costs, best, alpha);
            const double e = total_energy(graph, costs, next);
            if (e < best_energy - tol) {
                best = std::move(next);
                best_energy = e;
                improved = true;
                ++st.accepted_moves;
            }
        }
        if (!improved) break;
    }
    return best;
}

LineLabeling extract_lines(const imaging::BinarizedPage& page, const detect::BlobLineMap& blobs,
                           const imaging::ComponentSet& comps, int k, int max_sweeps) {
    if (blobs.blobs.empty()) throw Error("no labels available");
    if (blobs.blobs.size() > 65535) throw Error("extract_lines: too many blob lines for a 16-bit label map");
    if (comps.empty()) throw Error("extract_lines: no components");
    const ComponentGraph graph = build_component_graph(comps, k);
    const CostTable costs = data_cost_table(comps, blobs.blobs);
    LineLabeling out;
    out.assignment = minimize_energy(graph, costs, max_sweeps);
    out.energy = total_energy(graph, costs, out.assignment);
    out.pixel_labels = LabelImage(page.rows(), page.cols(), 0);
    for (const auto& c : comps.components)
        for (const auto& p : c.pixels)
            out.pixel_labels(p.row, p.col) = static_cast<std::uint16_t>(out.assignment[c.id] + 1);
    return out;
}

std::string line_polygons_json(const LabelImage& labels) {
    std::map<int, cv::Mat> masks;
    for (int r = 0; r < labels.rows(); ++r)
        for (int c = 0; c < labels.cols(); ++c) {
            const int l = labels(r, c);
            if (l == 0) continue;
            auto [it, inserted] = masks.try_emplace(l);
            if (inserted) it->second = cv::Mat::zeros(labels.rows(), labels.cols(), CV_8UC1);
            it->second.at<std::uint8_t>(r, c) = 255;
        }
    nlohmann::json lines = nlohmann::json::array();
    for (auto& [label, mask] : masks) {
        std::vector<std::vector<cv::Point>> contours;
        cv::findContours(mask, contours, cv::RETR_CCOMP, cv::CHAIN_APPROX_SIMPLE);
        nlohmann::json cs = nlohmann::json::array();
        for (const auto& contour : contours) {
            nlohmann::json pts = nlohmann::json::array();
            for (const auto& p : contour) pts.push_back({p.x, p.y});
            cs.push_back(std::move(pts));
        }
        lines.push_back({{"label", label}, {"contours", std::move(cs)}});
    }
    return nlohmann::json{{"lines", std::move(lines)}}.dump() + "\n";
}

}  // namespace utls::extract
