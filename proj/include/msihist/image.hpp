#pragma once

#include <cstddef>
#include <vector>

namespace msihist {

/// Planar floating-point image. Pixel (x, y) of channel c lives at
/// data[(c * height + y) * width + x]. Values are nominally in [0, 1].
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int c, double fill = 0.0);

    std::size_t plane_size() const { return static_cast<std::size_t>(width) * height; }
    bool empty() const { return data.empty(); }

    double &at(int c, int y, int x) {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }
    double at(int c, int y, int x) const {
        return data[(static_cast<std::size_t>(c) * height + y) * width + x];
    }

    bool same_dims(const Image &o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
};

// Channel-mean luminance as a single-channel image.
Image luminance(const Image &img);

// Copy of img with every value clamped to [0, 1].
Image clamp01(Image img);

} // namespace msihist
