#include "msihist/imagereg.hpp"
#include "msihist/error.hpp"

#include "csv.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace msihist::imagereg {

std::string to_string(PadMode m) { return m == PadMode::white ? "white" : "black"; }

PadMode parse_pad_mode(const std::string &s) {
    if (s == "black" || s == "B") return PadMode::black;
    if (s == "white" || s == "W") return PadMode::white;
    throw InvalidInput("pad mode must be 'black' or 'white', got '" + s + "'");
}

AffineTransform AffineTransform::inverse() const {
    const double det = determinant();
    if (!(std::abs(det) > 0.0) || !std::isfinite(det))
        throw InvalidInput("affine transform is not invertible (determinant " + std::to_string(det) + ")");
    AffineTransform r;
    r.a = d / det;
    r.b = -b / det;
    r.c = -c / det;
    r.d = a / det;
    r.tx = -(r.a * tx + r.b * ty);
    r.ty = -(r.c * tx + r.d * ty);
    return r;
}

AffineTransform AffineTransform::compose(const AffineTransform &f) const {
    AffineTransform r;
    r.a = a * f.a + b * f.c;
    r.b = a * f.b + b * f.d;
    r.c = c * f.a + d * f.c;
    r.d = c * f.b + d * f.d;
    r.tx = a * f.tx + b * f.ty + tx;
    r.ty = c * f.tx + d * f.ty + ty;
    return r;
}

ControlPoints read_control_points(const std::filesystem::path &path) {
    std::ifstream is(path);
    if (!is) throw InvalidInput("cannot open control points " + path.string());
    std::string line;
    std::getline(is, line);
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
    if (line != "src_x,src_y,dst_x,dst_y")
        throw InvalidInput("control points CSV must start with 'src_x,src_y,dst_x,dst_y'");
    ControlPoints cp;
    int lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (csv::blank(line)) continue;
        const std::string where = path.string() + ":" + std::to_string(lineno);
        const auto f = csv::split(line);
        if (f.size() != 4) throw InvalidInput("expected 4 fields in control point at " + where);
        cp.pairs.push_back({csv::to_double(f[0], where), csv::to_double(f[1], where),
                            csv::to_double(f[2], where), csv::to_double(f[3], where)});
    }
    return cp;
}

void write_control_points(const ControlPoints &cp, const std::filesystem::path &path) {
    std::ofstream os(path);
    os << "src_x,src_y,dst_x,dst_y\n";
    os.precision(17);
    for (const auto &p : cp.pairs) os << p.src_x << ',' << p.src_y << ',' << p.dst_x << ',' << p.dst_y << '\n';
    if (!os) throw RuntimeFailure("cannot write " + path.string());
}

std::array<int, 2> pad_offset(int w, int h, int target_w, int target_h) {
    return {(target_w - w) / 2, (target_h - h) / 2};
}

Image pad_to(const Image &img, int target_w, int target_h, PadMode mode) {
    require(target_w >= img.width && target_h >= img.height,
            "pad_to: target " + std::to_string(target_w) + "x" + std::to_string(target_h) +
                " is smaller than the image");
    if (target_w == img.width && target_h == img.height) return img;
    Image out(target_w, target_h, img.channels, fill_value(mode));
    const auto [ox, oy] = pad_offset(img.width, img.height, target_w, target_h);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < img.height; ++y)
            std::copy_n(&img.data[(static_cast<std::size_t>(c) * img.height + y) * img.width], img.width,
                        &out.at(c, y + oy, ox));
    return out;
}

AffineTransform resize_map(int w, int h, int new_w, int new_h) {
    // Output x' satisfies (x + 0.5) / w == (x' + 0.5) / new_w.
    const double sx = static_cast<double>(new_w) / w, sy = static_cast<double>(new_h) / h;
    AffineTransform t;
    t.a = sx;
    t.d = sy;
    t.tx = 0.5 * sx - 0.5;
    t.ty = 0.5 * sy - 0.5;
    return t;
}

Image resize(const Image &img, int new_w, int new_h) {
    require(new_w >= 1 && new_h >= 1, "resize: new dimensions must be >= 1");
    require(!img.empty(), "resize: empty image");
    if (new_w == img.width && new_h == img.height) return img;

    struct Tap {
        int i0, i1;
        double f;
    };
    auto taps = [](int n_in, int n_out) {
        std::vector<Tap> t(n_out);
        const double scale = static_cast<double>(n_in) / n_out;
        for (int o = 0; o < n_out; ++o) {
            const double s = std::clamp((o + 0.5) * scale - 0.5, 0.0, static_cast<double>(n_in - 1));
            const int i0 = static_cast<int>(std::floor(s));
            t[o] = {i0, std::min(i0 + 1, n_in - 1), s - i0};
        }
        return t;
    };
    const auto tx = taps(img.width, new_w), ty = taps(img.height, new_h);

    Image out(new_w, new_h, img.channels);
    for (int c = 0; c < img.channels; ++c)
        for (int y = 0; y < new_h; ++y) {
            const auto &vy = ty[y];
            for (int x = 0; x < new_w; ++x) {
                const auto &vx = tx[x];
                const double top = img.at(c, vy.i0, vx.i0) + vx.f * (img.at(c, vy.i0, vx.i1) - img.at(c, vy.i0, vx.i0));
                const double bot = img.at(c, vy.i1, vx.i0) + vx.f * (img.at(c, vy.i1, vx.i1) - img.at(c, vy.i1, vx.i0));
                out.at(c, y, x) = top + vy.f * (bot - top);
            }
        }
    return out;
}

namespace {

// Solves the symmetric 3x3 system m * x = r by Gaussian elimination with
// partial pivoting.
std::array<double, 3> solve3(std::array<std::array<double, 3>, 3> m, std::array<double, 3> r) {
    for (int col = 0; col < 3; ++col) {
        int piv = col;
        for (int row = col + 1; row < 3; ++row)
            if (std::abs(m[row][col]) > std::abs(m[piv][col])) piv = row;
        std::swap(m[col], m[piv]);
        std::swap(r[col], r[piv]);
        for (int row = col + 1; row < 3; ++row) {
            const double f = m[row][col] / m[col][col];
            for (int k = col; k < 3; ++k) m[row][k] -= f * m[col][k];
            r[row] -= f * r[col];
        }
    }
    std::array<double, 3> x{};
    for (int row = 2; row >= 0; --row) {
        double s = r[row];
        for (int k = row + 1; k < 3; ++k) s -= m[row][k] * x[k];
        x[row] = s / m[row][row];
    }
    return x;
}

} // namespace

AffineTransform fit_affine(const ControlPoints &points) {
    const auto &P = points.pairs;
    require(P.size() >= 3, "fit_affine: need at least 3 control point pairs, got " + std::to_string(P.size()));
    for (const auto &p : P)
        require(std::isfinite(p.src_x) && std::isfinite(p.src_y) && std::isfinite(p.dst_x) && std::isfinite(p.dst_y),
                "fit_affine: non-finite control point");

    const double n = static_cast<double>(P.size());
    double mx = 0.0, my = 0.0;
    for (const auto &p : P) {
        mx += p.src_x;
        my += p.src_y;
    }
    mx /= n;
    my /= n;
    double spread = 0.0;
    for (const auto &p : P) spread = std::max({spread, std::abs(p.src_x - mx), std::abs(p.src_y - my)});
    require(spread > 0.0, "fit_affine: source points are degenerate (all coincide)");
    const double s = 1.0 / spread;

    // Normal equations in normalized coordinates u = (x - mx) * s, v = (y - my) * s.
    std::array<std::array<double, 3>, 3> m{};
    std::array<double, 3> rx{}, ry{};
    for (const auto &p : P) {
        const double row[3] = {(p.src_x - mx) * s, (p.src_y - my) * s, 1.0};
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) m[i][j] += row[i] * row[j];
            rx[i] += row[i] * p.dst_x;
            ry[i] += row[i] * p.dst_y;
        }
    }
    const double suu = m[0][0] / n, svv = m[1][1] / n, suv = m[0][1] / n;
    const double mu = m[0][2] / n, mv = m[1][2] / n;
    const double det = (suu - mu * mu) * (svv - mv * mv) - (suv - mu * mv) * (suv - mu * mv);
    require(det > 1e-12 * std::max(1e-300, (suu + svv) * (suu + svv)),
            "fit_affine: source points are collinear (singular normal equations)");

    const auto px = solve3(m, rx);
    const auto py = solve3(m, ry);
    AffineTransform t;
    t.a = px[0] * s;
    t.b = px[1] * s;
    t.tx = px[2] - t.a * mx - t.b * my;
    t.c = py[0] * s;
    t.d = py[1] * s;
    t.ty = py[2] - t.c * mx - t.d * my;
    return t;
}

Image warp(const Image &img, const AffineTransform &t, int out_w, int out_h, PadMode fill) {
    require(out_w >= 1 && out_h >= 1, "warp: output dimensions must be >= 1");
    const AffineTransform inv = t.inverse();
    const double fv = fill_value(fill);
    Image out(out_w, out_h, img.channels);

    auto tap = [&](int c, int x, int y) {
        if (x < 0 || y < 0 || x >= img.width || y >= img.height) return fv;
        return img.at(c, y, x);
    };
    for (int y = 0; y < out_h; ++y)
        for (int x = 0; x < out_w; ++x) {
            const auto [sx, sy] = inv.apply(x, y);
            const double fx0 = std::floor(sx), fy0 = std::floor(sy);
            const double fx = sx - fx0, fy = sy - fy0;
            if (!(std::abs(fx0) < 1e9 && std::abs(fy0) < 1e9)) {
                for (int c = 0; c < img.channels; ++c) out.at(c, y, x) = fv;
                continue;
            }
            const int x0 = static_cast<int>(fx0), y0 = static_cast<int>(fy0);
            for (int c = 0; c < img.channels; ++c) {
                const double v00 = tap(c, x0, y0), v10 = tap(c, x0 + 1, y0);
                const double v01 = tap(c, x0, y0 + 1), v11 = tap(c, x0 + 1, y0 + 1);
                const double top = v00 + fx * (v10 - v00);
                const double bot = v01 + fx * (v11 - v01);
                out.at(c, y, x) = top + fy * (bot - top);
            }
        }
    return out;
}

std::vector<int> tile_origins(int dim, int patch, int stride) {
    require(patch >= 1 && stride >= 1, "patch and stride must be >= 1");
    require(patch <= dim, "patch size " + std::to_string(patch) + " exceeds image dimension " + std::to_string(dim));
    std::vector<int> o;
    for (int p = 0; p + patch <= dim; p += stride) o.push_back(p);
    if (o.back() + patch < dim) o.push_back(dim - patch);
    return o;
}

std::vector<Patch> extract_patches(const Image &img, int patch, int stride) {
    const auto xs = tile_origins(img.width, patch, stride);
    const auto ys = tile_origins(img.height, patch, stride);
    std::vector<Patch> out;
    out.reserve(xs.size() * ys.size());
    for (int oy : ys)
        for (int ox : xs) {
            Patch p{ox, oy, Image(patch, patch, img.channels)};
            for (int c = 0; c < img.channels; ++c)
                for (int y = 0; y < patch; ++y)
                    std::copy_n(img.data.begin() + static_cast<std::ptrdiff_t>((static_cast<std::size_t>(c) * img.height + oy + y) * img.width + ox), patch, &p.image.at(c, y, 0));
            out.push_back(std::move(p));
        }
    return out;
}

Image reassemble(const std::vector<Patch> &patches, int out_w, int out_h) {
    require(!patches.empty(), "reassemble: no patches");
    const int ch = patches.front().image.channels;
    Image sum(out_w, out_h, ch, 0.0);
    std::vector<int> count(static_cast<std::size_t>(out_w) * out_h, 0);
    for (const auto &p : patches) {
        require(p.image.channels == ch, "reassemble: patches disagree on channel count");
        require(p.x >= 0 && p.y >= 0 && p.x + p.image.width <= out_w && p.y + p.image.height <= out_h,
                "reassemble: patch lies outside the canvas");
        for (int y = 0; y < p.image.height; ++y)
            for (int x = 0; x < p.image.width; ++x) {
                ++count[static_cast<std::size_t>(p.y + y) * out_w + p.x + x];
                for (int c = 0; c < ch; ++c) sum.at(c, p.y + y, p.x + x) += p.image.at(c, y, x);
            }
    }
    for (std::size_t i = 0; i < count.size(); ++i) {
        if (count[i] == 0)
            throw InvalidInput("reassemble: pixel (" + std::to_string(i % out_w) + "," +
                               std::to_string(i / out_w) + ") is not covered by any patch");
        if (count[i] == 1) continue;
        for (int c = 0; c < ch; ++c) sum.data[c * sum.plane_size() + i] /= count[i];
    }
    return sum;
}

} // namespace msihist::imagereg
