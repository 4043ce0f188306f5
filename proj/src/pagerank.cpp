#include "pgtr/pagerank.hpp"

#include <cmath>
#include <numeric>

#include "pgtr/error.hpp"

namespace pgtr {

std::vector<double> pagerank(const CsrMatrix& adjacency, const PageRankOptions& opts) {
    const std::size_t n = adjacency.rows;
    if (n == 0) throw Error("pagerank: empty graph");
    if (adjacency.cols != n) throw Error("pagerank: adjacency is not square");

    std::vector<double> out_weight(n, 0.0);
    for (std::size_t v = 0; v < n; ++v)
        for (std::size_t k = adjacency.row_ptr[v]; k < adjacency.row_ptr[v + 1]; ++k)
            out_weight[v] += adjacency.values[k];

    const double inv_n = 1.0 / static_cast<double>(n);
    std::vector<double> x(n, inv_n), next(n), share(n);
    double change = INFINITY;
    for (std::size_t iter = 0; iter < opts.max_iter; ++iter) {
        double dangling = 0.0;
        for (std::size_t v = 0; v < n; ++v) {
            if (out_weight[v] > 0.0) {
                share[v] = x[v] / out_weight[v];
            } else {
                share[v] = 0.0;
                dangling += x[v];
            }
        }
        const double base = (1.0 - opts.damping) * inv_n + opts.damping * dangling * inv_n;
#pragma omp parallel for schedule(dynamic, 256)
        for (std::size_t w = 0; w < n; ++w) {
            double s = 0.0;
            for (std::size_t k = adjacency.row_ptr[w]; k < adjacency.row_ptr[w + 1]; ++k)
                s += adjacency.values[k] * share[adjacency.col_idx[k]];
            next[w] = base + opts.damping * s;
        }
        change = 0.0;
        for (std::size_t v = 0; v < n; ++v) change += std::abs(next[v] - x[v]);
        x.swap(next);
        if (change < opts.tol) {
            const double total = std::accumulate(x.begin(), x.end(), 0.0);
            for (double& v : x) v /= total;
            return x;
        }
    }
    throw ConvergenceError("pagerank did not converge in " + std::to_string(opts.max_iter) + " iterations", change);
}

std::vector<double> pagerank(const BipartiteGraph& g, const PageRankOptions& opts) {
    return pagerank(g.adjacency(), opts);
}

}  // namespace pgtr
