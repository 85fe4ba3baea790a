#include "msihist/nn/adam.hpp"
#include "msihist/error.hpp"

#include <cmath>

namespace msihist::nn {

Adam::Adam(std::vector<NamedTensor> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    require(cfg.lr >= 0.0 && cfg.beta1 >= 0.0 && cfg.beta1 < 1.0 && cfg.beta2 >= 0.0 && cfg.beta2 < 1.0 &&
                cfg.eps > 0.0,
            "Adam: invalid hyperparameters");
    for (const auto &p : params_) {
        m_.emplace_back(p.tensor.size(), 0.0);
        v_.emplace_back(p.tensor.size(), 0.0);
    }
}

void Adam::step() {
    for (const auto &p : params_)
        if (!p.tensor.has_grad()) throw InvalidInput("Adam::step: parameter '" + p.name + "' has no gradient");
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params_.size(); ++k) {
        Tensor p = params_[k].tensor;
        auto theta = p.data();
        auto g = p.grad();
        auto &m = m_[k];
        auto &v = v_[k];
        for (std::size_t i = 0; i < theta.size(); ++i) {
            m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
            v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1, vhat = v[i] / bc2;
            theta[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

void Adam::zero_grad() {
    for (auto &p : params_) {
        Tensor t = p.tensor;
        t.node().ensure_grad();
        t.zero_grad();
    }
}

} // namespace msihist::nn
