#pragma once

// Sample manifests and the train/validation/test split.

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace msihist::pipeline {

enum class Split { train, val, test };

std::string to_string(Split s);

struct SampleEntry {
    std::string id;
    std::filesystem::path msi;             // container directory or CSV
    std::filesystem::path histology;       // PNG
    std::filesystem::path control_points;  // CSV
};

struct DatasetManifest {
    std::vector<SampleEntry> samples;  // manifest order
    std::vector<Split> splits;         // parallel to samples; empty until split

    std::vector<std::size_t> indices(Split s) const;
};

// manifest.csv: header "id,msi,histology,control_points"; relative paths are
// resolved against the manifest's directory. Ids must be unique.
DatasetManifest read_manifest(const std::filesystem::path &path);
void write_manifest(const DatasetManifest &m, const std::filesystem::path &path);

/// Split sizes for n items: floor(f * n) each, then the leftover items go to
/// the largest fractional remainders (ties: train before val before test).
std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3> &fractions);

/// Seeded Fisher-Yates shuffle of the ids, then contiguous train/val/test
/// blocks of split_sizes(). Returns one split per id in input order.
/// Fewer than 10 ids is allowed but logged as a warning.
std::vector<Split> split_dataset(const std::vector<std::string> &ids, const std::array<double, 3> &fractions,
                                 std::uint64_t seed);

} // namespace msihist::pipeline
