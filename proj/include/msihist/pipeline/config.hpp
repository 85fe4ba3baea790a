#pragma once

// Run configuration: an INI-style file with sections, validated against a
// fixed schema. Unknown sections or keys, malformed values and out-of-range
// values raise InvalidInput naming "section.key".

#include "msihist/imagereg.hpp"
#include "msihist/nn/models.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace msihist::pipeline {

enum class ModelInput { rgb, peaks };

enum class ModelKind { unet, pix2pix };

struct Variant {
    ModelKind kind = ModelKind::unet;
    imagereg::PadMode pad = imagereg::PadMode::black;

    // "unet_black", "pix2pix_white", ...
    std::string key() const;
    // "U-Net (B)", "pix2pix (W)", ...
    std::string label() const;
    bool operator==(const Variant &) const = default;
};

Variant parse_variant(const std::string &s);  // "unet:black"

struct Stopping {
    int patience = 10;              // evaluations without improvement
    double min_improvement = 1e-4;  // on validation loss
};

struct UNetSection {
    nn::UNetConfig net{3, 3, 8, 2, false, 32};
    nn::UNetTrainConfig train;
    int stride = 16;     // training patch stride
    int batch = 64;
    long max_steps = 1500;
    int eval_every = 25;
};

struct Pix2PixSection {
    nn::Pix2PixConfig net;
    long max_steps = 3000;
    int eval_every = 100;
};

struct RunConfig {
    std::string preset = "desk";
    std::uint64_t seed = 42;
    std::filesystem::path out_dir = "run";
    std::filesystem::path data_dir;  // empty: <out_dir>/data

    // synthetic data
    int n_samples = 40;
    int image_size = 64;

    // split fractions (train, val, test)
    double train_fraction = 0.7;
    double val_fraction = 0.1;
    double test_fraction = 0.2;

    // preprocessing
    imagereg::PadMode pad = imagereg::PadMode::white;
    int k_peaks = 50;
    double min_separation = 0.0;  // m/z
    double half_window = 0.0;     // m/z; 0 selects the single nearest bins
    ModelInput input = ModelInput::rgb;

    int bins_mi = 64;

    Stopping stopping;
    UNetSection unet;
    Pix2PixSection pix2pix;

    std::vector<Variant> variants;

    std::filesystem::path data_root() const;
    int input_channels() const { return input == ModelInput::rgb ? 3 : k_peaks; }
    // Propagates shared settings (input channels, image size) into the
    // network configs and checks every invariant.
    void finalize();
};

// Built-in presets: "desk" (64x64, small networks) and "full" (published
// hyperparameters, depth-4 width-64 networks).
RunConfig preset(const std::string &name);

// Loads a config file on top of its preset ([run] preset = ..., default desk).
RunConfig load_config(const std::filesystem::path &path);
// Parses config text (same rules as load_config).
RunConfig parse_config(const std::string &text);

// Canonical text form; parse_config(to_text(c)) reproduces c.
std::string to_text(const RunConfig &c);

// Schema listing: one "section.key  type  description" line per key.
std::string schema_text();

} // namespace msihist::pipeline
