#pragma once

#include "msihist/image.hpp"
#include "msihist/spectra.hpp"

namespace msihist::reduce {

struct PcaOptions {
    double clip_lo_pct = 1.0;
    double clip_hi_pct = 99.0;
};

/// Principal components of the acquired pixels, kept for inspection.
struct PcaModel {
    std::vector<double> mean;                    // K
    std::vector<std::vector<double>> components; // 3 x K, unit length
    std::vector<double> eigenvalues;             // 3, descending
};

/// Three-channel pseudo-color rendering of a peak stack.
///
/// Each acquired pixel's K-vector is mean-centered and projected onto the top
/// three principal components of the K x K covariance (R, G, B). A component's
/// sign is chosen so that its largest-magnitude loading is positive. Every
/// channel is clipped at the given percentiles of its scores and mapped
/// linearly onto [0, 1]; a channel whose clip range collapses is constant 0.5.
/// Pixels outside the mask are black and do not contribute to the statistics.
///
/// Accumulation runs over the samples in lexicographic order of their
/// K-vectors, so permuting pixels permutes the output bit-exactly.
Image pca_rgb(const spectra::PeakImageStack &stack, const PcaOptions &opt = {},
              PcaModel *model = nullptr);

// Raw (unclipped) scores of each acquired pixel on the three components,
// laid out (component, pixel). Masked-off pixels score 0.
std::vector<double> pca_scores(const spectra::PeakImageStack &stack, const PcaModel &model);

PcaModel fit_pca(const spectra::PeakImageStack &stack);

// Linear-interpolated percentile (0..100) of unsorted values.
double percentile(std::vector<double> values, double pct);

} // namespace msihist::reduce
