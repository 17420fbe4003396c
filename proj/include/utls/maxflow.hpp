#pragma once

#include <vector>

namespace utls::extract {

/// Dinic max-flow with real capacities.
class MaxFlow {
public:
    explicit MaxFlow(int nodes);
    void add_edge(int from, int to, double capacity);
    double solve(int source, int sink);
    /// After solve(): true when `node` is reachable from the source in the
    /// residual graph.
    bool on_source_side(int node) const { return reach_[node] != 0; }

private:
    struct Edge {
        int to;
        double cap;
    };
    bool bfs(int s, int t);
    double dfs(int v, int t, double pushed);

    std::vector<Edge> edges_;
    std::vector<std::vector<int>> adj_;
    std::vector<int> level_, iter_;
    std::vector<char> reach_;
};

/// Submodular binary energy minimised by one s-t cut:
/// E(x) = sum_p U_p(x_p) + sum_pq V_pq(x_p, x_q), with
/// V(0,0) + V(1,1) <= V(0,1) + V(1,0) required for every pair term.
class BinaryEnergy {
public:
    explicit BinaryEnergy(int variables);
    void add_unary(int p, double e0, double e1);
    void add_pairwise(int p, int q, double e00, double e01, double e10, double e11);
    /// Returns the minimising assignment.
    std::vector<int> minimize();

private:
    int n_;
    std::vector<double> u0_, u1_;
    struct Pair {
        int p, q;
        double lambda;
    };
    std::vector<Pair> pairs_;
};

}  // namespace utls::extract
