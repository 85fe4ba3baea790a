#pragma once

#include "msihist/image.hpp"

#include <filesystem>

namespace msihist {

// 8-bit PNG, one (gray) or three (RGB) channels; values are clamped to
// [0, 1] and stored as round(v * 255).
void write_png(const std::filesystem::path &path, const Image &img);

// Reads gray, gray+alpha, RGB or RGBA PNGs (alpha dropped) into [0, 1].
Image read_png(const std::filesystem::path &path);

} // namespace msihist
