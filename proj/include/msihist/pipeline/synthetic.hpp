#pragma once

// Seeded synthetic paired data with known ground truth, standing in for a
// real MSI/H&E collection.
//
// Each sample is a field of smooth "tissue" blobs split softly into four
// tissue types. The MSI side has per-pixel spectra with Gaussian peaks at
// fixed planted m/z loci whose amplitudes depend on the tissue type (plus
// noise), on a sample-specific jittered m/z axis. The histology side renders
// the same tissue with H&E-like colors and nuclei on a larger, non-square
// canvas, misaligned by a known affine. Control points are exact images of
// that affine.

#include "msihist/imagereg.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace msihist::pipeline {

struct SyntheticOptions {
    int n_samples = 40;
    int image_size = 64;  // MSI grid side
    std::uint64_t seed = 42;
};

struct SyntheticTruth {
    std::vector<double> planted_mz;  // ascending
    // Planted transform per sample: histology pixel -> MSI pixel.
    std::vector<imagereg::AffineTransform> transforms;
};

// Number of planted peak loci; more than the default k = 50 so that the top
// 50 of the summed spectrum are all planted.
inline constexpr int kPlantedPeaks = 54;

/// Writes <dir>/manifest.csv, <dir>/planted_peaks.csv and per sample
/// <dir>/<id>/{msi/, histology.png, control_points.csv, truth.json}.
/// Output bytes depend only on the options.
SyntheticTruth generate_synthetic_dataset(const std::filesystem::path &dir, const SyntheticOptions &opt);

// Ids are "s000", "s001", ...
std::string sample_id(int index);

} // namespace msihist::pipeline
