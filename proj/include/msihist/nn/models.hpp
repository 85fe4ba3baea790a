#pragma once

// U-Net (baseline regressor and pix2pix generator), PatchGAN discriminator,
// and the two training steps built on them.

#include "msihist/nn/adam.hpp"
#include "msihist/nn/ops.hpp"
#include "msihist/nn/tensor.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace msihist::nn {

struct UNetConfig {
    int in_channels = 3;
    int out_channels = 3;
    int base_width = 8;
    int depth = 2;
    bool instance_norm = false;
    int patch = 32;  // spatial input size used in training

    void validate() const;
};

/// Encoder: per level two 3x3 conv (+ instance norm) + ReLU, then 2x2 max
/// pooling; channel width doubles per level. Decoder: 2x2 stride-2
/// transposed conv, concatenation with the skip, two 3x3 conv blocks.
/// A final 1x1 conv is followed by a sigmoid.
class UNet {
public:
    UNet() = default;
    explicit UNet(const UNetConfig &cfg);

    Tensor forward(const Tensor &x) const;

    const UNetConfig &config() const { return cfg_; }
    const std::vector<NamedTensor> &parameters() const { return params_; }

private:
    struct Block {
        Tensor w, b, gamma, beta;
    };
    Block make_block(const std::string &name, int in, int out, int k);
    Tensor apply_block(const Block &blk, const Tensor &x, int pad) const;

    UNetConfig cfg_;
    std::vector<NamedTensor> params_;
    std::vector<std::pair<Block, Block>> down_;  // depth levels
    std::pair<Block, Block> bottom_;
    std::vector<Block> up_;                      // transposed convs, level order
    std::vector<std::pair<Block, Block>> dec_;   // level order
    Block head_;
};

struct PatchGanConfig {
    int in_channels = 6;  // condition + image
    int base_width = 16;
    int layers = 3;       // stride-2 conv layers before the logit layer
    bool instance_norm = true;

    void validate() const;
};

/// 4x4 stride-2 convs with leaky ReLU(0.2) (instance norm from the second
/// layer on), then a 4x4 stride-1 conv to a single logit channel.
class PatchGan {
public:
    PatchGan() = default;
    explicit PatchGan(const PatchGanConfig &cfg);

    // condition and image are concatenated on channels.
    Tensor forward(const Tensor &condition, const Tensor &image) const;

    // Logit map size for an input of spatial size n.
    int output_size(int n) const;
    // Inclusive input index range (unclipped) seen by logit index i along one axis.
    std::pair<int, int> receptive_range(int i) const;

    const PatchGanConfig &config() const { return cfg_; }
    const std::vector<NamedTensor> &parameters() const { return params_; }

private:
    struct Layer {
        Tensor w, b, gamma, beta;
        int stride, pad;
        bool norm, act;
    };
    PatchGanConfig cfg_;
    std::vector<NamedTensor> params_;
    std::vector<Layer> layers_;
};

// Weights ~ N(0, sigma) drawn in registration order from a seeded engine;
// biases and shifts 0; norm scales 1.
void init_parameters(const std::vector<NamedTensor> &params, std::uint64_t seed, double sigma = 0.02);

// He normal: weights ~ N(0, sqrt(2 / fan_in)), fan_in counting the inputs
// feeding one output (C * k * k for conv, C_in for the 2x2 stride-2 up
// convs). Biases 0, norm scales 1. Used by the U-Net regressor.
void init_he(const std::vector<NamedTensor> &params, std::uint64_t seed);

// Sets every parameter to zero (norm scales to 1).
void zero_parameters(const std::vector<NamedTensor> &params);

std::size_t parameter_count(const std::vector<NamedTensor> &params);

struct Pix2PixConfig {
    int image_size = 64;
    double lambda_l1 = 200.0;
    double lr = 0.00002;
    double beta1 = 0.5;
    double beta2 = 0.999;
    UNetConfig gen{3, 3, 16, 3, true, 64};
    PatchGanConfig disc{6, 16, 2, true};

    void validate() const;
};

struct Pix2PixLosses {
    double d = 0.0;      // 0.5 * (BCE(real, 1) + BCE(fake, 0))
    double g = 0.0;      // g_adv + lambda * g_l1
    double g_adv = 0.0;  // BCE(D(x, G(x)), 1)
    double g_l1 = 0.0;
};

/// Generator + discriminator with their optimizers.
class Pix2Pix {
public:
    Pix2Pix() = default;
    Pix2Pix(const Pix2PixConfig &cfg, std::uint64_t seed);

    // One discriminator update on (real pair vs generated pair), then one
    // generator update on adversarial + lambda_l1 * L1.
    Pix2PixLosses step(const Tensor &condition, const Tensor &target);

    // Generator objective and its gradients without updating anything.
    Pix2PixLosses generator_objective(const Tensor &condition, const Tensor &target);

    const Pix2PixConfig &config() const { return cfg_; }
    UNet &generator() { return gen_; }
    PatchGan &discriminator() { return disc_; }
    const UNet &generator() const { return gen_; }
    const PatchGan &discriminator() const { return disc_; }
    Adam &gen_optimizer() { return opt_g_; }
    Adam &disc_optimizer() { return opt_d_; }
    const Adam &gen_optimizer() const { return opt_g_; }
    const Adam &disc_optimizer() const { return opt_d_; }

private:
    Pix2PixConfig cfg_;
    UNet gen_;
    PatchGan disc_;
    Adam opt_g_, opt_d_;
};

struct UNetTrainConfig {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
};

/// U-Net regressor trained with MSE and Adam.
class UNetRegressor {
public:
    UNetRegressor() = default;
    UNetRegressor(const UNetConfig &cfg, const UNetTrainConfig &tc, std::uint64_t seed);

    // One MSE/Adam update; returns the loss before the update.
    double train_step(const Tensor &input, const Tensor &target);

    UNet &model() { return net_; }
    const UNet &model() const { return net_; }
    Adam &optimizer() { return opt_; }
    const Adam &optimizer() const { return opt_; }

private:
    UNet net_;
    Adam opt_;
};

} // namespace msihist::nn
