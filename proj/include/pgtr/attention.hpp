#pragma once

// Global all-pairs attention: the kernelized linear-cost estimator built on
// positive random features, and the exact softmax attention it approximates.

#include <cstdint>
#include <span>
#include <vector>

#include "pgtr/dense.hpp"

namespace pgtr {

/// m Gaussian directions in R^d, sampled once and then frozen.
struct RandomFeatureMap {
    std::uint64_t seed = 0;
    DenseMatrix directions;  // m x d

    static RandomFeatureMap sample(std::size_t d, std::size_t m, std::uint64_t seed);
    std::size_t features() const { return directions.rows(); }
    std::size_t dim() const { return directions.cols(); }
};

struct AttentionConfig {
    bool use_projections = false;
    std::size_t features = 256;
};

/// phi(x) = exp(-||x||^2 / 2) / sqrt(m) * [exp(w_1 . x), ..., exp(w_m . x)].
std::vector<double> feature_map(std::span<const double> x, const RandomFeatureMap& rf);

/// Row i = sum_j softmax_j(s^2 z_i . z_j) z_j, where s is `input_scale`. Quadratic cost.
DenseMatrix exact_attention(const DenseMatrix& z, double input_scale = 1.0);

/// Linear-cost estimate of `exact_attention` using phi(s z) for queries and keys:
/// row i = phi_i^T [sum_j phi_j z_j^T] / phi_i^T [sum_t phi_t].
DenseMatrix kernelized_attention(const DenseMatrix& z, const RandomFeatureMap& rf, double input_scale = 1.0);

}  // namespace pgtr
