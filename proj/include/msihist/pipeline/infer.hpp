#pragma once

// Inference with trained generators, and evaluation of synthesized images.

#include "msihist/image.hpp"
#include "msihist/metrics.hpp"
#include "msihist/nn/models.hpp"
#include "msihist/pipeline/config.hpp"
#include "msihist/pipeline/prepare.hpp"

#include <filesystem>
#include <map>
#include <string>

namespace msihist::pipeline {

nn::Tensor to_tensor(const Image &img);  // 1 x C x H x W
Image to_image(const nn::Tensor &t, std::size_t index = 0);

// Edge-flush patches of `input` (side = net patch size) run in batches of
// up to 64, then uniformly averaged back onto the full canvas.
Image synthesize_patched(const nn::UNet &net, const Image &input, int stride);

// One forward pass over the whole image (dims divisible by 2^depth).
Image synthesize_full(const nn::UNet &net, const Image &input);

/// A generator restored from a checkpoint's config echo and values.
class Synthesizer {
public:
    explicit Synthesizer(const std::filesystem::path &checkpoint);

    ModelKind kind() const { return kind_; }
    int input_channels() const { return net_.config().in_channels; }
    // U-Net: patched with stride = patch; pix2pix: whole image.
    Image run(const Image &input) const;

private:
    ModelKind kind_;
    nn::UNet net_;
};

/// Synthesizes every val and test pair; writes <dir>/<id>.png.
/// Returns the synthesized images by id.
std::map<std::string, Image> synthesize_set(const Synthesizer &s, const PreparedSet &set,
                                            const std::filesystem::path &dir);

/// MI/SSIM on whole images for one split; rows follow manifest order.
metrics::MetricReport evaluate_split(const PreparedSet &set, const std::map<std::string, Image> &synth, Split split,
                                     int bins);

} // namespace msihist::pipeline
