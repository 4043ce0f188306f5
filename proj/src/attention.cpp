#include "pgtr/attention.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "pgtr/error.hpp"
#include "pgtr/kernels.hpp"

namespace pgtr {

RandomFeatureMap RandomFeatureMap::sample(std::size_t d, std::size_t m, std::uint64_t seed) {
    if (d == 0 || m == 0) throw Error("random feature map needs d >= 1 and m >= 1");
    RandomFeatureMap rf;
    rf.seed = seed;
    rf.directions = DenseMatrix(m, d);
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss;
    for (double& v : rf.directions.values()) v = gauss(rng);
    return rf;
}

std::vector<double> feature_map(std::span<const double> x, const RandomFeatureMap& rf) {
    if (x.size() != rf.dim()) throw Error("feature_map: input dimension mismatch");
    DenseMatrix row(1, x.size(), std::vector<double>(x.begin(), x.end()));
    return kernels::serial::random_features(row, rf.directions, 1.0).values();
}

DenseMatrix exact_attention(const DenseMatrix& z, double input_scale) {
    if (z.rows() == 0) throw Error("exact_attention: empty input");
    DenseMatrix w = kernels::matmul_nt(z, z);
    const double s2 = input_scale * input_scale;
    for (std::size_t r = 0; r < w.rows(); ++r) {
        auto row = w.row(r);
        for (double& v : row) v *= s2;
        const double peak = *std::max_element(row.begin(), row.end());
        double total = 0.0;
        for (double& v : row) {
            v = std::exp(v - peak);
            total += v;
        }
        for (double& v : row) v /= total;
    }
    return kernels::matmul(w, z);
}

DenseMatrix kernelized_attention(const DenseMatrix& z, const RandomFeatureMap& rf, double input_scale) {
    if (z.rows() == 0) throw Error("kernelized_attention: empty input");
    const DenseMatrix phi = kernels::random_features(z, rf.directions, input_scale);
    const auto summary = kernels::attention_summary(phi, z);
    std::vector<double> den;
    return kernels::attention_apply(phi, summary, den);
}

}  // namespace pgtr
