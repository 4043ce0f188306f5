#pragma once

// Data-parallel kernels behind the model. Every kernel has a plain serial
// reference in `serial` and an OpenMP version in `omp`; the unqualified names
// in `kernels` forward to the OpenMP versions. Row-parallel kernels produce
// bitwise-identical output to their serial reference. Reductions over rows use
// fixed-size chunks combined in chunk order, so the OpenMP result does not
// depend on the thread count.

#include <atomic>
#include <cstdint>
#include <vector>

#include "pgtr/dense.hpp"
#include "pgtr/sparse.hpp"

namespace pgtr::kernels {

/// Rows per partial sum in chunked reductions.
inline constexpr std::size_t kReductionChunk = 128;

/// Multiply-add counter for the attention kernels, used to check cost scaling.
struct KernelCounters {
    std::atomic<std::uint64_t> attention_madds{0};
    void reset() { attention_madds = 0; }
};
KernelCounters& counters();

/// Global summaries of kernelized attention: S = sum_j phi_k(j) v(j)^T, z = sum_j phi_k(j).
struct AttentionSummary {
    DenseMatrix kv;         // m x d
    std::vector<double> k;  // m
};

namespace serial {
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);     // A B
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);  // A B^T
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);  // A^T B
DenseMatrix spmm(const CsrMatrix& a, const DenseMatrix& x);
DenseMatrix random_features(const DenseMatrix& x, const DenseMatrix& directions, double input_scale);
AttentionSummary attention_summary(const DenseMatrix& phi_k, const DenseMatrix& v);
DenseMatrix attention_apply(const DenseMatrix& phi_q, const AttentionSummary& s, std::vector<double>& denominators);
}  // namespace serial

namespace omp {
DenseMatrix matmul(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix matmul_nt(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix matmul_tn(const DenseMatrix& a, const DenseMatrix& b);
DenseMatrix spmm(const CsrMatrix& a, const DenseMatrix& x);
DenseMatrix random_features(const DenseMatrix& x, const DenseMatrix& directions, double input_scale);
AttentionSummary attention_summary(const DenseMatrix& phi_k, const DenseMatrix& v);
DenseMatrix attention_apply(const DenseMatrix& phi_q, const AttentionSummary& s, std::vector<double>& denominators);
}  // namespace omp

using omp::attention_apply;
using omp::attention_summary;
using omp::matmul;
using omp::matmul_nt;
using omp::matmul_tn;
using omp::random_features;
using omp::spmm;

/// Caps the OpenMP team size from PGTR_THREADS when set. Called once by the CLI.
void configure_threads_from_env();

}  // namespace pgtr::kernels
