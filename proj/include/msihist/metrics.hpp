#pragma once

// Image similarity for synthesized vs real histology: histogram mutual
// information (nats) and Gaussian-window SSIM, both on channel-mean
// luminance.

#include "msihist/image.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace msihist::metrics {

struct ImageScore {
    std::string id;
    double mi = 0.0;
    double ssim = 0.0;
};

struct MetricReport {
    double mi = 0.0;    // mean over per_image
    double ssim = 0.0;  // mean over per_image
    std::size_t n_images = 0;
    std::vector<ImageScore> per_image;
};

// Joint histogram on `bins` equal-width bins over [0, 1]; natural log.
double mutual_information(const Image &a, const Image &b, int bins = 64);

// Shannon entropy (nats) of the luminance histogram with the same binning.
double entropy(const Image &a, int bins = 64);

struct SsimParams {
    int window = 11;
    double sigma = 1.5;
    double k1 = 0.01;
    double k2 = 0.03;
    double dynamic_range = 1.0;
};

// Mean of the local SSIM map (Gaussian window, symmetric boundary).
double ssim(const Image &a, const Image &b, const SsimParams &p = {});

struct EvalPair {
    std::string id;
    Image real;
    Image synthesized;
};

MetricReport evaluate_set(const std::vector<EvalPair> &pairs, int bins = 64);

// `id,mi,ssim` rows; a leading comment line records how means are formed.
void write_report_csv(const MetricReport &r, const std::filesystem::path &path,
                      const std::string &label = {});
MetricReport read_report_csv(const std::filesystem::path &path);

} // namespace msihist::metrics
