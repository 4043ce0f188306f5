#include "pgtr/adam.hpp"

#include <cmath>

namespace pgtr {

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (const Parameter* p : params_) {
        m_.emplace_back(p->value.rows(), p->value.cols());
        v_.emplace_back(p->value.rows(), p->value.cols());
    }
}

void Adam::step() {
    ++t_;
    const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Parameter& p = *params_[k];
        if (!p.trainable) continue;
        double* w = p.value.data();
        double* g = p.grad.data();
        double* m = m_[k].data();
        double* v = v_[k].data();
        for (std::size_t e = 0; e < p.value.size(); ++e) {
            m[e] = cfg_.beta1 * m[e] + (1.0 - cfg_.beta1) * g[e];
            v[e] = cfg_.beta2 * v[e] + (1.0 - cfg_.beta2) * g[e] * g[e];
            const double mhat = m[e] / c1;
            const double vhat = v[e] / c2;
            w[e] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            g[e] = 0.0;
        }
    }
}

}  // namespace pgtr
