#include "pgtr/kernels.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <string>

#include "pgtr/error.hpp"

namespace pgtr::kernels {

KernelCounters& counters() {
    static KernelCounters c;
    return c;
}

void configure_threads_from_env() {
    if (const char* env = std::getenv("PGTR_THREADS")) {
        int n = std::atoi(env);
        if (n > 0) omp_set_num_threads(n);
    }
}

namespace {

// Row kernels shared by both variants so the arithmetic order is identical.

inline void matmul_row(const DenseMatrix& a, const DenseMatrix& b, DenseMatrix& c, std::size_t i) {
    auto out = c.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
        const double aik = a(i, k);
        if (aik == 0.0) continue;
        auto brow = b.row(k);
        for (std::size_t j = 0; j < b.cols(); ++j) out[j] += aik * brow[j];
    }
}

// Row i of A^T B = sum_k A(k, i) B(k, :), accumulated in k order.
inline void matmul_tn_row(const DenseMatrix& a, const DenseMatrix& b, DenseMatrix& c, std::size_t i) {
    auto out = c.row(i);
    for (std::size_t k = 0; k < a.rows(); ++k) {
        const double aki = a(k, i);
        if (aki == 0.0) continue;
        auto brow = b.row(k);
        for (std::size_t j = 0; j < b.cols(); ++j) out[j] += aki * brow[j];
    }
}

inline void spmm_row(const CsrMatrix& a, const DenseMatrix& x, DenseMatrix& y, std::size_t r) {
    auto out = y.row(r);
    for (std::size_t k = a.row_ptr[r]; k < a.row_ptr[r + 1]; ++k) {
        const double w = a.values[k];
        auto xrow = x.row(a.col_idx[k]);
        for (std::size_t j = 0; j < x.cols(); ++j) out[j] += w * xrow[j];
    }
}

// `wt` holds the directions transposed (d x m) so the inner loop runs over
// features. Returns the largest exponent argument seen, for the overflow check.
inline double feature_row(const DenseMatrix& x, const DenseMatrix& wt, double scale, DenseMatrix& phi,
                          std::size_t i) {
    const std::size_t d = x.cols();
    const std::size_t m = wt.cols();
    auto xrow = x.row(i);
    auto out = phi.row(i);
    double sq = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        const double xs = scale * xrow[k];
        sq += xs * xs;
        auto wrow = wt.row(k);
        for (std::size_t f = 0; f < m; ++f) out[f] += xs * wrow[f];
    }
    const double log_norm = -0.5 * sq - 0.5 * std::log(static_cast<double>(m));
    double max_arg = -INFINITY;
    for (std::size_t f = 0; f < m; ++f) {
        const double arg = out[f] + log_norm;
        max_arg = std::max(max_arg, arg);
        out[f] = std::exp(arg);
    }
    return max_arg;
}

void check_feature_range(double max_arg) {
    // exp overflows near 709.78
    if (!(max_arg < 700.0))
        throw NumericError("random feature map overflow: exponent argument " + std::to_string(max_arg) +
                           "; scale the attention input down");
}

inline void accumulate_summary_rows(const DenseMatrix& phi, const DenseMatrix& v, std::size_t begin,
                                    std::size_t end, DenseMatrix& kv, std::vector<double>& k) {
    const std::size_t m = phi.cols();
    const std::size_t d = v.cols();
    for (std::size_t j = begin; j < end; ++j) {
        auto prow = phi.row(j);
        auto vrow = v.row(j);
        for (std::size_t f = 0; f < m; ++f) {
            const double p = prow[f];
            k[f] += p;
            auto acc = kv.row(f);
            for (std::size_t c = 0; c < d; ++c) acc[c] += p * vrow[c];
        }
    }
}

inline void apply_row(const DenseMatrix& phi_q, const AttentionSummary& s, DenseMatrix& out,
                      std::vector<double>& den, std::size_t i) {
    const std::size_t m = phi_q.cols();
    auto prow = phi_q.row(i);
    auto orow = out.row(i);
    double denom = 0.0;
    for (std::size_t f = 0; f < m; ++f) {
        const double p = prow[f];
        denom += p * s.k[f];
        auto kvrow = s.kv.row(f);
        for (std::size_t c = 0; c < orow.size(); ++c) orow[c] += p * kvrow[c];
    }
    den[i] = denom;
    for (double& o : orow) o /= denom;
}

void check_apply_shapes(const DenseMatrix& phi_q, const AttentionSummary& s) {
    if (phi_q.cols() != s.kv.rows() || s.k.size() != s.kv.rows())
        throw Error("attention_apply: feature count mismatch");
}

void check_denominators(const std::vector<double>& den) {
    for (std::size_t i = 0; i < den.size(); ++i)
        if (!(den[i] >= 1e-30))
            throw NumericError("kernelized attention denominator underflow at row " + std::to_string(i));
}

}  // namespace

namespace serial {

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    assert(a.cols() == b.rows());
    DenseMatrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) matmul_row(a, b, c, i);
    return c;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
    assert(a.cols() == b.cols());
    const DenseMatrix bt = transpose(b);
    DenseMatrix c(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) matmul_row(a, bt, c, i);
    return c;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
    assert(a.rows() == b.rows());
    DenseMatrix c(a.cols(), b.cols());
    for (std::size_t i = 0; i < a.cols(); ++i) matmul_tn_row(a, b, c, i);
    return c;
}

DenseMatrix spmm(const CsrMatrix& a, const DenseMatrix& x) {
    assert(a.cols == x.rows());
    DenseMatrix y(a.rows, x.cols());
    for (std::size_t r = 0; r < a.rows; ++r) spmm_row(a, x, y, r);
    return y;
}

DenseMatrix random_features(const DenseMatrix& x, const DenseMatrix& directions, double input_scale) {
    assert(x.cols() == directions.cols());
    const DenseMatrix wt = transpose(directions);
    DenseMatrix phi(x.rows(), directions.rows());
    double max_arg = -INFINITY;
    for (std::size_t i = 0; i < x.rows(); ++i)
        max_arg = std::max(max_arg, feature_row(x, wt, input_scale, phi, i));
    if (x.rows() > 0) check_feature_range(max_arg);
    return phi;
}

AttentionSummary attention_summary(const DenseMatrix& phi_k, const DenseMatrix& v) {
    assert(phi_k.rows() == v.rows());
    AttentionSummary s{DenseMatrix(phi_k.cols(), v.cols()), std::vector<double>(phi_k.cols(), 0.0)};
    accumulate_summary_rows(phi_k, v, 0, phi_k.rows(), s.kv, s.k);
    counters().attention_madds += phi_k.rows() * phi_k.cols() * (v.cols() + 1);
    return s;
}

DenseMatrix attention_apply(const DenseMatrix& phi_q, const AttentionSummary& s, std::vector<double>& denominators) {
    check_apply_shapes(phi_q, s);
    DenseMatrix out(phi_q.rows(), s.kv.cols());
    denominators.assign(phi_q.rows(), 0.0);
    for (std::size_t i = 0; i < phi_q.rows(); ++i) apply_row(phi_q, s, out, denominators, i);
    counters().attention_madds += phi_q.rows() * phi_q.cols() * (s.kv.cols() + 1);
    check_denominators(denominators);
    return out;
}

}  // namespace serial

namespace omp {

DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b) {
    assert(a.cols() == b.rows());
    DenseMatrix c(a.rows(), b.cols());
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < a.rows(); ++i) matmul_row(a, b, c, i);
    return c;
}

DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b) {
    assert(a.cols() == b.cols());
    const DenseMatrix bt = transpose(b);
    DenseMatrix c(a.rows(), b.rows());
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < a.rows(); ++i) matmul_row(a, bt, c, i);
    return c;
}

DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b) {
    assert(a.rows() == b.rows());
    DenseMatrix c(a.cols(), b.cols());
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < a.cols(); ++i) matmul_tn_row(a, b, c, i);
    return c;
}

DenseMatrix spmm(const CsrMatrix& a, const DenseMatrix& x) {
    assert(a.cols == x.rows());
    DenseMatrix y(a.rows, x.cols());
#pragma omp parallel for schedule(dynamic, 64)
    for (std::size_t r = 0; r < a.rows; ++r) spmm_row(a, x, y, r);
    return y;
}

DenseMatrix random_features(const DenseMatrix& x, const DenseMatrix& directions, double input_scale) {
    assert(x.cols() == directions.cols());
    const DenseMatrix wt = transpose(directions);
    DenseMatrix phi(x.rows(), directions.rows());
    double max_arg = -INFINITY;
#pragma omp parallel for schedule(static) reduction(max : max_arg)
    for (std::size_t i = 0; i < x.rows(); ++i)
        max_arg = std::max(max_arg, feature_row(x, wt, input_scale, phi, i));
    if (x.rows() > 0) check_feature_range(max_arg);
    return phi;
}

AttentionSummary attention_summary(const DenseMatrix& phi_k, const DenseMatrix& v) {
    assert(phi_k.rows() == v.rows());
    const std::size_t m = phi_k.cols();
    const std::size_t d = v.cols();
    const std::size_t n_chunks = (phi_k.rows() + kReductionChunk - 1) / kReductionChunk;
    std::vector<AttentionSummary> partial(n_chunks);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::size_t c = 0; c < n_chunks; ++c) {
        partial[c] = AttentionSummary{DenseMatrix(m, d), std::vector<double>(m, 0.0)};
        const std::size_t begin = c * kReductionChunk;
        const std::size_t end = std::min(phi_k.rows(), begin + kReductionChunk);
        accumulate_summary_rows(phi_k, v, begin, end, partial[c].kv, partial[c].k);
    }
    AttentionSummary s{DenseMatrix(m, d), std::vector<double>(m, 0.0)};
    for (const auto& p : partial) {
        for (std::size_t f = 0; f < m; ++f) s.k[f] += p.k[f];
        for (std::size_t e = 0; e < s.kv.size(); ++e) s.kv.data()[e] += p.kv.data()[e];
    }
    counters().attention_madds += phi_k.rows() * m * (d + 1);
    return s;
}

DenseMatrix attention_apply(const DenseMatrix& phi_q, const AttentionSummary& s, std::vector<double>& denominators) {
    check_apply_shapes(phi_q, s);
    DenseMatrix out(phi_q.rows(), s.kv.cols());
    denominators.assign(phi_q.rows(), 0.0);
#pragma omp parallel for schedule(static)
    for (std::size_t i = 0; i < phi_q.rows(); ++i) apply_row(phi_q, s, out, denominators, i);
    counters().attention_madds += phi_q.rows() * phi_q.cols() * (s.kv.cols() + 1);
    check_denominators(denominators);
    return out;
}

}  // namespace omp

}  // namespace pgtr::kernels
