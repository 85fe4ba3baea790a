#include "msihist/image.hpp"

#include <algorithm>

namespace msihist {

Image::Image(int w, int h, int c, double fill)
    : width(w), height(h), channels(c),
      data(static_cast<std::size_t>(w) * h * c, fill) {}

Image luminance(const Image &img) {
    if (img.channels == 1) return img;
    Image out(img.width, img.height, 1);
    const std::size_t n = img.plane_size();
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (int c = 0; c < img.channels; ++c) s += img.data[c * n + i];
        out.data[i] = s / img.channels;
    }
    return out;
}

Image clamp01(Image img) {
    for (double &v : img.data) v = std::clamp(v, 0.0, 1.0);
    return img;
}

} // namespace msihist
