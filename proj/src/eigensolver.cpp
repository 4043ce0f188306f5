#include "pgtr/eigensolver.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "pgtr/error.hpp"

namespace pgtr {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd apply(const CsrMatrix& m, const MatrixXd& x) {
    MatrixXd y(m.rows, x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c)
        spmv(m, std::span<const double>(x.col(c).data(), m.cols), std::span<double>(y.col(c).data(), m.rows));
    return y;
}

EigenPairs pack(const VectorXd& values, const MatrixXd& vectors, std::size_t k) {
    EigenPairs out;
    out.values.assign(values.data(), values.data() + k);
    out.vectors = DenseMatrix(static_cast<std::size_t>(vectors.rows()), k);
    for (Eigen::Index r = 0; r < vectors.rows(); ++r)
        for (std::size_t c = 0; c < k; ++c) out.vectors(static_cast<std::size_t>(r), c) = vectors(r, Eigen::Index(c));
    fix_signs(out.vectors);
    return out;
}

double residual_norm(const CsrMatrix& m, const EigenPairs& p) {
    const std::size_t n = m.rows;
    std::vector<double> v(n), mv(n);
    double worst = 0.0;
    for (std::size_t j = 0; j < p.values.size(); ++j) {
        for (std::size_t r = 0; r < n; ++r) v[r] = p.vectors(r, j);
        spmv(m, v, mv);
        double s = 0.0;
        for (std::size_t r = 0; r < n; ++r) s += (mv[r] - p.values[j] * v[r]) * (mv[r] - p.values[j] * v[r]);
        worst = std::max(worst, std::sqrt(s));
    }
    return worst;
}

EigenPairs solve_dense(const CsrMatrix& m, std::size_t k) {
    const auto n = static_cast<Eigen::Index>(m.rows);
    MatrixXd dense = MatrixXd::Zero(n, n);
    for (std::size_t r = 0; r < m.rows; ++r)
        for (std::size_t e = m.row_ptr[r]; e < m.row_ptr[r + 1]; ++e) dense(Eigen::Index(r), m.col_idx[e]) += m.values[e];
    dense = 0.5 * (dense + dense.transpose());
    Eigen::SelfAdjointEigenSolver<MatrixXd> es(dense);
    if (es.info() != Eigen::Success) throw ConvergenceError("dense symmetric eigensolver failed", INFINITY);
    return pack(es.eigenvalues(), es.eigenvectors(), k);
}

// Orthonormalizes the columns of `w` against `basis` and each other (two
// Gram-Schmidt passes). Columns that vanish are replaced by random directions;
// returns only the columns that survive.
MatrixXd orthonormalize_block(const MatrixXd& basis, MatrixXd w, std::mt19937_64& rng) {
    const Eigen::Index n = w.rows();
    std::normal_distribution<double> gauss;
    MatrixXd out(n, 0);
    for (Eigen::Index c = 0; c < w.cols(); ++c) {
        VectorXd v = w.col(c);
        for (int attempt = 0; attempt < 4; ++attempt) {
            double before = v.norm();
            if (before == 0.0) before = 1.0;
            for (int pass = 0; pass < 2; ++pass) {
                if (basis.cols() > 0) v -= basis * (basis.transpose() * v);
                if (out.cols() > 0) v -= out * (out.transpose() * v);
            }
            const double after = v.norm();
            if (after > 1e-8 * before) {
                v /= after;
                out.conservativeResize(Eigen::NoChange, out.cols() + 1);
                out.col(out.cols() - 1) = v;
                break;
            }
            if (basis.cols() + out.cols() >= n) break;
            for (Eigen::Index r = 0; r < n; ++r) v(r) = gauss(rng);
        }
    }
    return out;
}

// Block Lanczos with full reorthogonalization and thick restarts. Between
// restarts the basis grows by Krylov blocks M * (newest block); at a restart
// the Rayleigh-Ritz pairs with the smallest values are kept and the residuals
// of the unconverged wanted pairs seed the next block.
EigenPairs solve_lanczos(const CsrMatrix& m, std::size_t k, const EigenOptions& opts, double norm,
                         double threshold) {
    const auto n = static_cast<Eigen::Index>(m.rows);
    const auto want = static_cast<Eigen::Index>(k);
    const Eigen::Index block = want;
    const Eigen::Index max_basis = std::min<Eigen::Index>(n, 3 * want + 16);
    std::mt19937_64 rng(opts.seed);
    std::normal_distribution<double> gauss;
    MatrixXd start(n, block);
    for (Eigen::Index c = 0; c < block; ++c)
        for (Eigen::Index r = 0; r < n; ++r) start(r, c) = gauss(rng);

    MatrixXd basis = orthonormalize_block(MatrixXd(n, 0), start, rng);
    MatrixXd image = apply(m, basis);
    MatrixXd newest = basis;
    double worst = INFINITY;

    for (std::size_t restart = 0; restart <= opts.max_restarts;) {
        const bool full = basis.cols() >= max_basis;
        MatrixXd grow;
        if (!full) {
            grow = orthonormalize_block(basis, apply(m, newest), rng);
            grow = grow.leftCols(std::min<Eigen::Index>(grow.cols(), max_basis - basis.cols()));
        }
        if (!full && grow.cols() > 0) {
            const Eigen::Index old = basis.cols();
            basis.conservativeResize(Eigen::NoChange, old + grow.cols());
            basis.rightCols(grow.cols()) = grow;
            image.conservativeResize(Eigen::NoChange, old + grow.cols());
            image.rightCols(grow.cols()) = apply(m, grow);
            newest = grow;
            if (basis.cols() < max_basis) continue;
        }

        // Rayleigh-Ritz on the current basis.
        MatrixXd h = basis.transpose() * image;
        h = 0.5 * (h + h.transpose());
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(h);
        if (es.info() != Eigen::Success) throw ConvergenceError("Rayleigh-Ritz step failed", worst);
        const VectorXd theta = es.eigenvalues();
        const MatrixXd& s = es.eigenvectors();
        const Eigen::Index have = std::min(want, basis.cols());
        MatrixXd ritz = basis * s.leftCols(have);
        MatrixXd residual = image * s.leftCols(have) - ritz * theta.head(have).asDiagonal();

        worst = 0.0;
        std::vector<Eigen::Index> open;
        for (Eigen::Index j = 0; j < have; ++j) {
            const double r = residual.col(j).norm();
            worst = std::max(worst, r);
            if (r > threshold) open.push_back(j);
        }
        if (have == want && open.empty()) {
            EigenPairs out = pack(theta.head(want), ritz, k);
            out.norm_estimate = norm;
            out.max_residual = residual_norm(m, out);
            if (out.max_residual <= threshold) return out;
            open.push_back(0);  // drift: refine once more from the exact image
        }
        if (basis.cols() >= n && have == want) {
            // The basis spans the whole space; the Ritz pairs are as good as they get.
            EigenPairs out = pack(theta.head(want), ritz, k);
            out.norm_estimate = norm;
            out.max_residual = residual_norm(m, out);
            if (out.max_residual <= threshold) return out;
            throw ConvergenceError("eigensolver stalled on the full space", out.max_residual);
        }

        ++restart;
        const Eigen::Index keep = std::min<Eigen::Index>(basis.cols(), max_basis - block);
        basis = basis * s.leftCols(keep);
        basis = orthonormalize_block(MatrixXd(n, 0), basis, rng);
        image = apply(m, basis);
        MatrixXd seed(n, block);
        Eigen::Index filled = 0;
        for (Eigen::Index j : open) {
            if (filled == block) break;
            seed.col(filled++) = residual.col(j);
        }
        for (; filled < block; ++filled)
            for (Eigen::Index r = 0; r < n; ++r) seed(r, filled) = gauss(rng);
        newest = orthonormalize_block(basis, seed, rng);
        if (newest.cols() == 0) continue;
        const Eigen::Index old = basis.cols();
        basis.conservativeResize(Eigen::NoChange, old + newest.cols());
        basis.rightCols(newest.cols()) = newest;
        image.conservativeResize(Eigen::NoChange, old + newest.cols());
        image.rightCols(newest.cols()) = apply(m, newest);
    }
    throw ConvergenceError("Lanczos eigensolver did not converge in " + std::to_string(opts.max_restarts) +
                               " restarts",
                           worst);
}

}  // namespace

void fix_signs(DenseMatrix& vectors) {
    for (std::size_t c = 0; c < vectors.cols(); ++c) {
        double peak = 0.0;
        for (std::size_t r = 0; r < vectors.rows(); ++r) peak = std::max(peak, std::abs(vectors(r, c)));
        if (peak == 0.0) continue;
        std::size_t pick = 0;
        for (std::size_t r = 0; r < vectors.rows(); ++r) {
            if (std::abs(vectors(r, c)) >= peak * (1.0 - 1e-9)) {
                pick = r;
                break;
            }
        }
        if (vectors(pick, c) < 0.0)
            for (std::size_t r = 0; r < vectors.rows(); ++r) vectors(r, c) = -vectors(r, c);
    }
}

EigenPairs symmetric_eigs_smallest(const CsrMatrix& m, std::size_t k, const EigenOptions& opts) {
    if (m.rows != m.cols) throw Error("eigensolver: matrix is not square");
    if (k == 0 || k > m.rows)
        throw Error("eigensolver: requested " + std::to_string(k) + " pairs of a " + std::to_string(m.rows) +
                    "-dimensional matrix");
    if (!m.is_symmetric(1e-12)) throw Error("eigensolver: matrix is not symmetric");
    const double norm = std::max(m.inf_norm(), 1e-300);
    // The stricter of the relative bound tol * ||M|| and the absolute bound tol.
    const double threshold = opts.tol * std::min(norm, 1.0);

    const bool dense = opts.strategy == EigenStrategy::dense ||
                       (opts.strategy == EigenStrategy::automatic && m.rows <= opts.dense_limit);
    if (dense) {
        EigenPairs out = solve_dense(m, k);
        out.norm_estimate = norm;
        out.max_residual = residual_norm(m, out);
        if (out.max_residual > threshold)
            throw ConvergenceError("dense eigensolver residual above tolerance", out.max_residual);
        return out;
    }
    return solve_lanczos(m, k, opts, norm, threshold);
}

}  // namespace pgtr
