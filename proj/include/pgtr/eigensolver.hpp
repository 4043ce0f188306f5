#pragma once

#include <cstdint>
#include <vector>

#include "pgtr/dense.hpp"
#include "pgtr/sparse.hpp"

namespace pgtr {

enum class EigenStrategy { automatic, dense, lanczos };

struct EigenOptions {
    /// Residual bound per pair: tol * min(||M||, 1), with ||M|| the norm estimate.
    double tol = 1e-10;
    EigenStrategy strategy = EigenStrategy::automatic;
    /// `automatic` uses the dense solver up to this dimension.
    std::size_t dense_limit = 512;
    std::size_t max_restarts = 2000;
    std::uint64_t seed = 0x5eed;
};

struct EigenPairs {
    std::vector<double> values;  // ascending
    DenseMatrix vectors;         // n x k, one eigenvector per column
    double max_residual = 0.0;   // max_j ||M v_j - lambda_j v_j||
    double norm_estimate = 0.0;  // the ||M|| the tolerance is relative to
};

/// k smallest eigenpairs of a symmetric sparse matrix. Every pair satisfies
/// ||M v - lambda v|| <= tol * min(||M||, 1). Eigenvectors are
/// orthonormal and sign-fixed with `fix_signs`. Throws ConvergenceError when the
/// iterative solver exhausts its restarts.
EigenPairs symmetric_eigs_smallest(const CsrMatrix& m, std::size_t k, const EigenOptions& opts = {});

/// Flips each column so its largest-magnitude entry is positive. Entries within
/// a relative 1e-9 of the maximum count as ties, resolved to the lowest row.
void fix_signs(DenseMatrix& vectors);

}  // namespace pgtr
