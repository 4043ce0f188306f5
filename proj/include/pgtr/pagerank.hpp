#pragma once

#include <vector>

#include "pgtr/data.hpp"
#include "pgtr/sparse.hpp"

namespace pgtr {

struct PageRankOptions {
    double damping = 0.85;
    double tol = 1e-12;  // L1 change between iterates
    std::size_t max_iter = 1000;
};

/// PageRank of the random walk on an undirected weighted graph given by a
/// symmetric adjacency. Nodes without edges spread their mass uniformly.
/// Scores sum to one.
std::vector<double> pagerank(const CsrMatrix& adjacency, const PageRankOptions& opts = {});

/// PageRank over the N + M nodes of the bipartite graph, users first.
std::vector<double> pagerank(const BipartiteGraph& g, const PageRankOptions& opts = {});

}  // namespace pgtr
