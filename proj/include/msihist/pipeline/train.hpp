#pragma once

// Training loops for the U-Net baseline and pix2pix, with the validation
// stopping rule, CSV logs, best/last checkpoints and bit-identical resume.
//
// Files written into the model directory:
//   log.csv          step,loss            (U-Net)   or step,loss_g,loss_d (pix2pix)
//   val.csv          step,val_loss        (patch MSE for U-Net, image L1 for pix2pix)
//   last.msih        state after the latest evaluation, optimizer included
//   best.msih        state at the best validation loss

#include "msihist/nn/checkpoint.hpp"
#include "msihist/nn/models.hpp"
#include "msihist/pipeline/config.hpp"
#include "msihist/pipeline/prepare.hpp"

#include <filesystem>
#include <limits>
#include <string>

namespace msihist::pipeline {

/// "Trained until converged": stop once `patience` consecutive evaluations
/// fail to beat the reference loss by at least `min_improvement`. The best
/// checkpoint follows the lowest validation loss seen.
struct StoppingRule {
    Stopping cfg;
    double reference = std::numeric_limits<double>::infinity();
    int stale = 0;
    double best = std::numeric_limits<double>::infinity();
    long best_step = -1;

    // Returns true when `loss` is a new best.
    bool observe(double loss, long step);
    bool done() const { return stale >= cfg.patience; }
};

struct TrainResult {
    long steps = 0;  // optimizer steps taken in total
    double initial_val = 0.0;
    double best_val = 0.0;
    long best_step = 0;
    bool converged = false;  // stopped by the rule rather than max_steps
};

// Config echo stored in checkpoints; synth rebuilds the network from it.
std::string unet_echo(const nn::UNetConfig &net, const RunConfig &cfg);
std::string pix2pix_echo(const nn::Pix2PixConfig &net, const RunConfig &cfg);
ModelKind echo_kind(const std::string &echo);
nn::UNetConfig echo_unet(const std::string &echo);          // U-Net or pix2pix generator
nn::Pix2PixConfig echo_pix2pix(const std::string &echo);

/// Trains on the train split; validation on the val split (train split when
/// val is empty). With `resume`, continues from dir/last.msih if present.
TrainResult train_unet(const PreparedSet &set, const RunConfig &cfg, const std::filesystem::path &dir,
                       bool resume = false);
TrainResult train_pix2pix(const PreparedSet &set, const RunConfig &cfg, const std::filesystem::path &dir,
                          bool resume = false);

// Training patches of a set of pairs, stacked as (input, target) tensors.
struct PatchSet {
    nn::Tensor input;   // N x C x P x P
    nn::Tensor target;  // N x 3 x P x P
    std::size_t size() const { return input.defined() ? input.shape()[0] : 0; }
};
PatchSet make_patches(const std::vector<const ImagePair *> &pairs, int patch, int stride);

// Rows [first, first + count) of `order` gathered into a batch.
PatchSet gather(const PatchSet &all, const std::vector<std::size_t> &order, std::size_t first, std::size_t count);

// Seeded Fisher-Yates permutation of 0..n-1 for one epoch.
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, long epoch);

} // namespace msihist::pipeline
