#pragma once

// Binary checkpoint: "MSIH", u32 version, config echo, u64 step, named
// parameter records (name, shape, f64 data, f64 Adam m, f64 Adam v) and named
// scalar metadata. All integers and reals little-endian.

#include "msihist/nn/adam.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace msihist::nn {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct ParamRecord {
    std::string name;
    Shape shape;
    std::vector<double> data;
    std::vector<double> m;
    std::vector<double> v;
    bool operator==(const ParamRecord &) const = default;
};

struct Checkpoint {
    std::string config;  // echo of the model/training configuration
    std::uint64_t step = 0;
    std::vector<ParamRecord> params;
    std::map<std::string, double> meta;
    bool operator==(const Checkpoint &) const = default;
};

void save_checkpoint(const Checkpoint &ck, const std::filesystem::path &path);
Checkpoint load_checkpoint(const std::filesystem::path &path);

// Appends every parameter of `opt` (with its moments) under `prefix`.
void capture(const Adam &opt, const std::string &prefix, Checkpoint &ck);

// Restores parameters and moments of `opt` from records named prefix + name.
// Throws InvalidInput on a missing record or shape mismatch.
void restore(const Checkpoint &ck, const std::string &prefix, Adam &opt);

// Copies parameter values only (no optimizer).
void restore_values(const Checkpoint &ck, const std::string &prefix, const std::vector<NamedTensor> &params);

} // namespace msihist::nn
