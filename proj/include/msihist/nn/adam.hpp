#pragma once

#include "msihist/nn/tensor.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace msihist::nn {

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Adam with bias correction. Moments are kept per parameter, in the order
/// the parameters were registered.
class Adam {
public:
    Adam() = default;
    Adam(std::vector<NamedTensor> params, AdamConfig cfg);

    // Throws InvalidInput if any parameter has no gradient buffer.
    void step();
    void zero_grad();

    const AdamConfig &config() const { return cfg_; }
    void set_lr(double lr) { cfg_.lr = lr; }
    std::int64_t steps() const { return t_; }
    void set_steps(std::int64_t t) { t_ = t; }

    const std::vector<NamedTensor> &params() const { return params_; }
    std::vector<double> &first_moment(std::size_t i) { return m_[i]; }
    std::vector<double> &second_moment(std::size_t i) { return v_[i]; }
    const std::vector<double> &first_moment(std::size_t i) const { return m_[i]; }
    const std::vector<double> &second_moment(std::size_t i) const { return v_[i]; }

private:
    std::vector<NamedTensor> params_;
    AdamConfig cfg_;
    std::vector<std::vector<double>> m_, v_;
    std::int64_t t_ = 0;
};

} // namespace msihist::nn
