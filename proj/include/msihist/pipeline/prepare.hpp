#pragma once

// From raw samples to registered, equally sized image pairs.

#include "msihist/image.hpp"
#include "msihist/imagereg.hpp"
#include "msihist/pipeline/config.hpp"
#include "msihist/pipeline/dataset.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace msihist::pipeline {

struct PairProvenance {
    imagereg::PadMode pad = imagereg::PadMode::black;
    int msi_width = 0, msi_height = 0;    // raw MSI grid
    int hist_width = 0, hist_height = 0;  // raw histology canvas
    imagereg::AffineTransform fitted;     // raw histology pixel -> raw MSI pixel
    imagereg::AffineTransform warp;       // prepared histology -> prepared MSI frame
    double control_rms = 0.0;             // fit residual over the control points
};

struct ImagePair {
    std::string id;
    Split split = Split::train;
    Image msi_rgb;    // 3-channel PCA rendering, image_size x image_size
    Image input;      // model input: msi_rgb or the normalized k-channel peak stack
    Image histology;  // registered onto the MSI frame
    PairProvenance provenance;
};

struct PreparedSet {
    std::vector<double> peak_mzs;  // picked from the dataset-wide summed spectrum
    std::vector<ImagePair> pairs;  // manifest order

    std::vector<const ImagePair *> select(Split s) const;
};

/// Per sample, in order: load, rebin onto the dataset-wide shared axis, sum
/// (dataset-wide), pick peaks once, build the peak stack, PCA to RGB, square
/// and resize both modalities to image_size (MSI padded black, histology with
/// cfg.pad), fit the control-point affine and warp the histology onto the MSI
/// frame. Splits come from split_dataset(ids, fractions, cfg.seed).
/// Any failure is rethrown as the same error type, prefixed with
/// "sample <id>: <stage>:".
PreparedSet prepare_pairs(const DatasetManifest &manifest, const RunConfig &cfg);

// Composite map from the padded-and-resized image frame back to raw pixels:
// prepared = resize_map(side) o translate(pad offset).
imagereg::AffineTransform square_resize_map(int w, int h, int size);

// Pads to a square (centered) then resizes to size x size.
Image square_resize(const Image &img, int size, imagereg::PadMode pad);

// Writes pairs.bin (all images, 64-bit), peaks.csv, provenance.json and PNG
// previews <id>_msi.png / <id>_histology.png.
void save_prepared(const PreparedSet &set, const std::filesystem::path &dir);
PreparedSet load_prepared(const std::filesystem::path &dir);

} // namespace msihist::pipeline
