#pragma once

// Geometric preparation of image pairs: padding, resizing, control-point
// affine fitting, warping and patch tiling.

#include "msihist/image.hpp"

#include <array>
#include <filesystem>
#include <string>
#include <vector>

namespace msihist::imagereg {

enum class PadMode { black, white };

inline double fill_value(PadMode m) { return m == PadMode::white ? 1.0 : 0.0; }
std::string to_string(PadMode m);
PadMode parse_pad_mode(const std::string &s);

/// (x, y) -> (a*x + b*y + tx, c*x + d*y + ty), in pixel coordinates with
/// pixel centers at integer positions.
struct AffineTransform {
    double a = 1.0, b = 0.0, tx = 0.0;
    double c = 0.0, d = 1.0, ty = 0.0;

    std::array<double, 2> apply(double x, double y) const {
        return {a * x + b * y + tx, c * x + d * y + ty};
    }
    double determinant() const { return a * d - b * c; }
    AffineTransform inverse() const;
    // (*this) after `first`: x -> this(first(x)).
    AffineTransform compose(const AffineTransform &first) const;

    static AffineTransform identity() { return {}; }
    bool operator==(const AffineTransform &) const = default;
};

struct PointPair {
    double src_x, src_y, dst_x, dst_y;
};

struct ControlPoints {
    std::vector<PointPair> pairs;
};

ControlPoints read_control_points(const std::filesystem::path &path);
void write_control_points(const ControlPoints &cp, const std::filesystem::path &path);

// Centers `img` on a target canvas (extra pixel right/bottom on odd slack).
Image pad_to(const Image &img, int target_w, int target_h, PadMode mode);

// Offset of the original image inside the padded canvas.
std::array<int, 2> pad_offset(int w, int h, int target_w, int target_h);

// Bilinear resampling with half-pixel-centered coordinates.
Image resize(const Image &img, int new_w, int new_h);

// Coordinate map for resize(): output pixel coordinates of an input point.
AffineTransform resize_map(int w, int h, int new_w, int new_h);

/// Least-squares affine mapping src -> dst from >= 3 non-collinear pairs,
/// solved with the normal equations of the 3x3 system for each output
/// coordinate (on centered, scaled source coordinates).
AffineTransform fit_affine(const ControlPoints &points);

/// Inverse-mapping warp: output pixel (x, y) samples `img` at t^-1(x, y)
/// bilinearly; taps falling outside the input take the fill value.
Image warp(const Image &img, const AffineTransform &t, int out_w, int out_h, PadMode fill);

struct Patch {
    int x = 0, y = 0;  // origin in the source image
    Image image;
};

// Per-axis tile origins: 0, stride, ... plus a final edge-flush origin.
std::vector<int> tile_origins(int dim, int patch, int stride);

// Row-major tiling with edge-flush patches so that every pixel is covered.
std::vector<Patch> extract_patches(const Image &img, int patch, int stride);

// Uniform average of overlapping patches on an out_w x out_h canvas.
Image reassemble(const std::vector<Patch> &patches, int out_w, int out_h);

} // namespace msihist::imagereg
