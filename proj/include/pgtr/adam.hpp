#pragma once

#include <vector>

#include "pgtr/autodiff.hpp"

namespace pgtr {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Bias-corrected Adam over a fixed list of parameters. Non-trainable
/// parameters are skipped.
class Adam {
public:
    Adam(std::vector<Parameter*> params, AdamConfig cfg = {});

    /// Applies one update from the accumulated gradients, then zeroes them.
    void step();
    std::size_t steps() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    std::vector<Parameter*> params_;
    std::vector<DenseMatrix> m_;
    std::vector<DenseMatrix> v_;
    AdamConfig cfg_;
    std::size_t t_ = 0;
};

}  // namespace pgtr
