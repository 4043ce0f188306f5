#pragma once

#include <cstdint>
#include <vector>

#include "pgtr/dense.hpp"

namespace pgtr {

/// Compressed sparse row matrix. Column indices are ascending within each row.
struct CsrMatrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::size_t> row_ptr{0};
    std::vector<std::uint32_t> col_idx;
    std::vector<double> values;

    std::size_t nnz() const { return col_idx.size(); }
    std::size_t row_length(std::size_t r) const { return row_ptr[r + 1] - row_ptr[r]; }

    struct Triplet {
        std::uint32_t row;
        std::uint32_t col;
        double value;
    };
    /// Duplicate (row, col) entries are summed.
    static CsrMatrix from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets);

    DenseMatrix to_dense() const;
    bool is_symmetric(double tol) const;
    /// Largest absolute row sum; an upper bound on the spectral norm of a symmetric matrix.
    double inf_norm() const;
};

/// y = A x
void spmv(const CsrMatrix& a, std::span<const double> x, std::span<double> y);

}  // namespace pgtr

namespace pgtr {

/// D^{-1/2} A D^{-1/2} for a symmetric nonnegative adjacency. Rows of isolated nodes stay empty.
CsrMatrix normalized_adjacency(const CsrMatrix& adjacency);

/// I - D^{-1/2} A D^{-1/2}. An isolated node keeps a unit diagonal entry.
CsrMatrix normalized_laplacian(const CsrMatrix& adjacency);

}  // namespace pgtr
