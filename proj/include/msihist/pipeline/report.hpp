#pragma once

// Comparison table across model variants (Markdown + CSV).

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace msihist::pipeline {

struct VariantScore {
    std::string label;  // "U-Net (B)", "pix2pix (W)", ...
    double mi = 0.0;
    double ssim = 0.0;
    std::size_t n_images = 0;
};

struct Deltas {
    double mi = 0.0;    // best pix2pix MI minus best U-Net MI
    double ssim = 0.0;  // best pix2pix SSIM minus best U-Net SSIM
};

struct Report {
    std::string split;  // "test", "val", or empty
    std::vector<VariantScore> rows;  // canonical order: U-Net rows, then pix2pix rows; B before W
    std::optional<Deltas> deltas;    // present when both model families are present
};

// Rows are reordered canonically. Labels must start with "U-Net" or "pix2pix".
Report make_report(std::vector<VariantScore> rows, const std::string &split = "test");

// "+0.924" style: explicit sign, three decimals.
std::string signed3(double v);

std::string to_markdown(const Report &r);
std::string to_csv(const Report &r);  // variant,mi,ssim,n_images (full precision)

} // namespace msihist::pipeline
