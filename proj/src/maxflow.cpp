#include "utls/maxflow.hpp"

#include <algorithm>
#include <limits>
#include <queue>

#include "utls/raster.hpp"

namespace utls::extract {
namespace {
constexpr double kEps = 1e-12;
}

MaxFlow::MaxFlow(int nodes) : adj_(nodes), level_(nodes), iter_(nodes), reach_(nodes, 0) {}

void MaxFlow::add_edge(int from, int to, double capacity) {
    if (capacity < 0) throw Error("maxflow: negative capacity");
    adj_[from].push_back(static_cast<int>(edges_.size()));
    edges_.push_back({to, capacity});
    adj_[to].push_back(static_cast<int>(edges_.size()));
    edges_.push_back({from, 0.0});
}

bool MaxFlow::bfs(int s, int t) {
    std::fill(level_.begin(), level_.end(), -1);
    std::queue<int> q;
    level_[s] = 0;
    q.push(s);
    while (!q.empty()) {
        const int v = q.front();
        q.pop();
        for (int id : adj_[v]) {
            const Edge& e = edges_[id];
            if (e.cap > kEps && level_[e.to] < 0) {
                level_[e.to] = level_[v] + 1;
                q.push(e.to);
            }
        }
    }
    return level_[t] >= 0;
}

double MaxFlow::dfs(int v, int t, double pushed) {
    if (v == t) return pushed;
    for (int& i = iter_[v]; i < static_cast<int>(adj_[v].size()); ++i) {
        const int id = adj_[v][i];
        Edge& e = edges_[id];
        if (e.cap <= kEps || level_[e.to] != level_[v] + 1) continue;
        const double got = dfs(e.to, t, std::min(pushed, e.cap));
        if (got > kEps) {
            e.cap -= got;
            edges_[id ^ 1].cap += got;
            return got;
        }
    }
    return 0.0;
}

double MaxFlow::solve(int source, int sink) {
    double flow = 0.0;
    while (bfs(source, sink)) {
        std::fill(iter_.begin(), iter_.end(), 0);
        while (true) {
            const double f = dfs(source, sink, std::numeric_limits<double>::infinity());
            if (f <= kEps) break;
            flow += f;
        }
    }
    std::fill(reach_.begin(), reach_.end(), 0);
    std::queue<int> q;
    reach_[source] = 1;
    q.push(source);
    while (!q.empty()) {
        const int v = q.front();
        q.pop();
        for (int id : adj_[v]) {
            const Edge& e = edges_[id];
            if (e.cap > kEps && !reach_[e.to]) {
                reach_[e.to] = 1;
                q.push(e.to);
            }
        }
    }
    return flow;
}

BinaryEnergy::BinaryEnergy(int variables) : n_(variables), u0_(variables, 0.0), u1_(variables, 0.0) {}

void BinaryEnergy::add_unary(int p, double e0, double e1) {
    u0_[p] += e0;
    u1_[p] += e1;
}

void BinaryEnergy::add_pairwise(int p, int q, double a, double b, double c, double d) {
    // V = a + (c - a) x_p + (d - c) x_q + (b + c - a - d) (1 - x_p) x_q
    const double lambda = b + c - a - d;
    if (lambda < -1e-9) throw Error("binary energy: pair term is not submodular");
    u0_[p] += a;
    u1_[p] += c;
    u1_[q] += d - c;
    if (lambda > 0) pairs_.push_back({p, q, lambda});
}

std::vector<int> BinaryEnergy::minimize() {
    // x_p = 1 <=> p ends on the sink side.
    const int source = n_;
    const int sink = n_ + 1;
    MaxFlow flow(n_ + 2);
    for (int p = 0; p < n_; ++p) {
        const double base = std::min(u0_[p], u1_[p]);
        if (u1_[p] - base > 0) flow.add_edge(source, p, u1_[p] - base);
        if (u0_[p] - base > 0) flow.add_edge(p, sink, u0_[p] - base);
    }
    for (const auto& pr : pairs_) flow.add_edge(pr.p, pr.q, pr.lambda);
    flow.solve(source, sink);
    std::vector<int> x(n_);
    for (int p = 0; p < n_; ++p) x[p] = flow.on_source_side(p) ? 0 : 1;
    return x;
}

}  // namespace utls::extract
