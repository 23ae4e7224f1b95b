#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "carted/linalg.hpp"

namespace carted {

/// 0/1 adjacency matrix.
using Adjacency = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic>;

/// |w_ij| > tau (strictly) marks an edge i -> j.
inline Adjacency binarize(const Matrix& w, double tau) {
    return w.unaryExpr([tau](double v) { return std::abs(v) > tau ? 1 : 0; });
}

/// A directed cycle as a node sequence (first node repeated at the end), if any.
inline std::optional<std::vector<Index>> find_cycle(const Adjacency& adj) {
    const Index n = adj.rows();
    std::vector<int> color(static_cast<std::size_t>(n), 0);
    std::vector<Index> parent(static_cast<std::size_t>(n), -1);
    for (Index root = 0; root < n; ++root) {
        if (color[root] != 0) continue;
        // iterative DFS: stack of (node, next neighbour)
        std::vector<std::pair<Index, Index>> stack{{root, 0}};
        color[root] = 1;
        while (!stack.empty()) {
            auto& [node, next] = stack.back();
            if (next == n) {
                color[node] = 2;
                stack.pop_back();
                continue;
            }
            const Index j = next++;
            if (adj(node, j) == 0) continue;
            if (color[j] == 1) {
                std::vector<Index> cycle{j};
                for (Index c = node; c != j; c = parent[c]) cycle.push_back(c);
                cycle.push_back(j);
                std::reverse(cycle.begin(), cycle.end());
                return cycle;
            }
            if (color[j] == 0) {
                color[j] = 1;
                parent[j] = node;
                stack.emplace_back(j, 0);
            }
        }
    }
    return std::nullopt;
}

/// Kahn ordering; empty when the graph has a cycle.
inline std::vector<Index> topological_order(const Adjacency& adj) {
    const Index n = adj.rows();
    std::vector<Index> indeg(static_cast<std::size_t>(n), 0);
    for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j)
            if (adj(i, j) != 0) ++indeg[j];
    std::vector<Index> ready;
    for (Index i = 0; i < n; ++i)
        if (indeg[i] == 0) ready.push_back(i);
    std::vector<Index> order;
    while (!ready.empty()) {
        const Index i = ready.front();
        ready.erase(ready.begin());
        order.push_back(i);
        for (Index j = 0; j < n; ++j)
            if (adj(i, j) != 0 && --indeg[j] == 0) ready.push_back(j);
    }
    if (static_cast<Index>(order.size()) != n) order.clear();
    return order;
}

inline bool is_dag(const Adjacency& adj) { return adj.rows() == 0 || !topological_order(adj).empty(); }

}  // namespace carted
