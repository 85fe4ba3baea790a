#pragma once

// Mass spectrometry imaging data model: m/z axes, per-pixel spectra,
// container I/O, interpolation rebinning, peak picking and ion images.

#include "msihist/image.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace msihist::spectra {

/// Strictly increasing, finite, nonnegative list of m/z values (length >= 2).
class MzAxis {
public:
    MzAxis() = default;
    explicit MzAxis(std::vector<double> values);

    const std::vector<double> &values() const { return values_; }
    std::size_t size() const { return values_.size(); }
    double front() const { return values_.front(); }
    double back() const { return values_.back(); }
    double operator[](std::size_t i) const { return values_[i]; }

    // Median spacing between consecutive bins.
    double median_bin_width() const;

    bool operator==(const MzAxis &) const = default;

private:
    std::vector<double> values_;
};

/// A single spectrum on an axis. Standalone spectra (e.g. the summed
/// spectrum) carry 64-bit intensities; per-pixel storage inside MSIDataset
/// is 32-bit.
struct Spectrum {
    MzAxis axis;
    std::vector<double> intensities;

    void validate() const;
};

struct MSIDataset {
    int width = 0;
    int height = 0;
    double pixel_size_um = 100.0;
    MzAxis axis;
    std::vector<float> intensities;  // (y, x, bin) row-major
    std::vector<std::uint8_t> mask;  // (y, x), 1 = acquired

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    std::size_t pixel_index(int x, int y) const {
        return static_cast<std::size_t>(y) * width + x;
    }
    std::span<const float> spectrum(std::size_t pixel) const {
        return {intensities.data() + pixel * axis.size(), axis.size()};
    }
    std::span<float> spectrum(std::size_t pixel) {
        return {intensities.data() + pixel * axis.size(), axis.size()};
    }
    bool acquired(std::size_t pixel) const { return mask[pixel] != 0; }

    // Throws InvalidInput when any structural invariant is broken.
    void validate() const;
};

struct Peak {
    double mz = 0.0;
    double intensity = 0.0;
    bool operator==(const Peak &) const = default;
};

/// Picked peaks in descending intensity order.
struct PeakList {
    std::vector<Peak> peaks;
    std::size_t size() const { return peaks.size(); }
    bool empty() const { return peaks.empty(); }
};

/// Ion images for a PeakList: channel i is the ion image of peaks[i].
struct PeakImageStack {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;        // (channel, y, x)
    std::vector<double> peak_mzs;
    std::vector<std::uint8_t> mask;  // (y, x)

    std::size_t plane_size() const { return static_cast<std::size_t>(width) * height; }
    double at(int c, std::size_t pixel) const { return data[c * plane_size() + pixel]; }
};

// --- I/O -------------------------------------------------------------------

// Loads either a binary container directory (header.json, mzaxis.bin,
// spectra.bin, optional mask.bin) or a CSV file with header x,y,mz,intensity.
MSIDataset load_msi(const std::filesystem::path &path);

// Writes the binary container layout into directory `dir` (created if needed).
void save_msi(const MSIDataset &dataset, const std::filesystem::path &dir);

// Reads only mzaxis.bin/header.json of a container (or the CSV m/z set).
MzAxis load_axis(const std::filesystem::path &path);

void write_peaks_csv(const PeakList &peaks, const std::filesystem::path &path);
PeakList read_peaks_csv(const std::filesystem::path &path);

// --- processing ----------------------------------------------------------------

// Uniform axis from the global min to the global max m/z with bin width equal
// to the median source bin width over all axes.
MzAxis make_shared_axis(std::span<const MzAxis> axes);

// Point-sampled piecewise-linear interpolation of every spectrum onto
// `target`; target points outside the source range map to 0.
MSIDataset rebin(const MSIDataset &dataset, const MzAxis &target);

// Same interpolation for a single intensity row (64-bit accumulation).
void rebin_row(const MzAxis &source, std::span<const float> in, const MzAxis &target,
               std::span<float> out);

// Elementwise sum over acquired pixels.
Spectrum sum_spectra(const MSIDataset &dataset);

// Elementwise sum of spectra sharing one axis.
Spectrum add_spectra(const Spectrum &a, const Spectrum &b);

/// Interior local maxima (leftmost index of a plateau), accepted greedily in
/// descending intensity (ties: lower m/z first), skipping candidates closer
/// than `min_separation` to an accepted peak. At most `k` peaks.
PeakList pick_peaks(const Spectrum &spectrum, std::size_t k, double min_separation = 0.0);

// Per-pixel sum of bins within [mz - half_window, mz + half_window].
Image ion_image(const MSIDataset &dataset, double mz, double half_window);

PeakImageStack build_peak_stack(const MSIDataset &dataset, const PeakList &peaks,
                                double half_window);

} // namespace msihist::spectra
