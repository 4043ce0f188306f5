#include "pgtr/sparse.hpp"

#include <algorithm>
#include <cmath>

#include "pgtr/dense.hpp"

namespace pgtr {

double max_abs_diff(const DenseMatrix& a, const DenseMatrix& b) {
    assert(a.same_shape(b));
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data()[i] - b.data()[i]));
    return m;
}

double frobenius_norm(const DenseMatrix& a) {
    double s = 0.0;
    for (double v : a.values()) s += v * v;
    return std::sqrt(s);
}

bool all_finite(const DenseMatrix& a) {
    return std::all_of(a.values().begin(), a.values().end(), [](double v) { return std::isfinite(v); });
}

DenseMatrix transpose(const DenseMatrix& a) {
    DenseMatrix t(a.cols(), a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r)
        for (std::size_t c = 0; c < a.cols(); ++c) t(c, r) = a(r, c);
    return t;
}

CsrMatrix CsrMatrix::from_triplets(std::size_t rows, std::size_t cols, std::vector<Triplet> triplets) {
    std::sort(triplets.begin(), triplets.end(), [](const Triplet& a, const Triplet& b) {
        return a.row != b.row ? a.row < b.row : a.col < b.col;
    });
    CsrMatrix m;
    m.rows = rows;
    m.cols = cols;
    m.row_ptr.assign(rows + 1, 0);
    for (std::size_t k = 0; k < triplets.size(); ++k) {
        const auto& t = triplets[k];
        assert(t.row < rows && t.col < cols);
        if (!m.col_idx.empty() && k > 0 && triplets[k - 1].row == t.row && triplets[k - 1].col == t.col) {
            m.values.back() += t.value;
            continue;
        }
        m.col_idx.push_back(t.col);
        m.values.push_back(t.value);
        ++m.row_ptr[t.row + 1];
    }
    for (std::size_t r = 0; r < rows; ++r) m.row_ptr[r + 1] += m.row_ptr[r];
    return m;
}

DenseMatrix CsrMatrix::to_dense() const {
    DenseMatrix d(rows, cols);
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) d(r, col_idx[k]) += values[k];
    return d;
}

bool CsrMatrix::is_symmetric(double tol) const {
    if (rows != cols) return false;
    auto lookup = [this](std::size_t r, std::size_t c) {
        auto first = col_idx.begin() + static_cast<std::ptrdiff_t>(row_ptr[r]);
        auto last = col_idx.begin() + static_cast<std::ptrdiff_t>(row_ptr[r + 1]);
        auto it = std::lower_bound(first, last, static_cast<std::uint32_t>(c));
        if (it == last || *it != c) return 0.0;
        return values[static_cast<std::size_t>(it - col_idx.begin())];
    };
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k)
            if (std::abs(values[k] - lookup(col_idx[k], r)) > tol) return false;
    return true;
}

double CsrMatrix::inf_norm() const {
    double best = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (std::size_t k = row_ptr[r]; k < row_ptr[r + 1]; ++k) s += std::abs(values[k]);
        best = std::max(best, s);
    }
    return best;
}

void spmv(const CsrMatrix& a, std::span<const double> x, std::span<double> y) {
    assert(x.size() == a.cols && y.size() == a.rows);
#pragma omp parallel for schedule(static)
    for (std::size_t r = 0; r < a.rows; ++r) {
        double s = 0.0;
        for (std::size_t k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k) s += a.values[k] * x[a.col_idx[k]];
        y[r] = s;
    }
}

}  // namespace pgtr

namespace pgtr {

CsrMatrix normalized_adjacency(const CsrMatrix& adjacency) {
    assert(adjacency.rows == adjacency.cols);
    std::vector<double> inv_sqrt(adjacency.rows, 0.0);
    for (std::size_t r = 0; r < adjacency.rows; ++r) {
        double deg = 0.0;
        for (std::size_t k = adjacency.row_ptr[r]; k < adjacency.row_ptr[r + 1]; ++k) deg += adjacency.values[k];
        if (deg > 0.0) inv_sqrt[r] = 1.0 / std::sqrt(deg);
    }
    CsrMatrix n = adjacency;
    for (std::size_t r = 0; r < n.rows; ++r)
        for (std::size_t k = n.row_ptr[r]; k < n.row_ptr[r + 1]; ++k)
            n.values[k] = inv_sqrt[r] * adjacency.values[k] * inv_sqrt[n.col_idx[k]];
    return n;
}

CsrMatrix normalized_laplacian(const CsrMatrix& adjacency) {
    const CsrMatrix na = normalized_adjacency(adjacency);
    std::vector<CsrMatrix::Triplet> t;
    t.reserve(na.nnz() + na.rows);
    for (std::size_t r = 0; r < na.rows; ++r) {
        t.push_back({static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(r), 1.0});
        for (std::size_t k = na.row_ptr[r]; k < na.row_ptr[r + 1]; ++k)
            t.push_back({static_cast<std::uint32_t>(r), na.col_idx[k], -na.values[k]});
    }
    return CsrMatrix::from_triplets(na.rows, na.cols, std::move(t));
}

}  // namespace pgtr
