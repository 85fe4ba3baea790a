#include "msihist/spectra.hpp"
#include "msihist/error.hpp"

#include "binio.hpp"
#include "csv.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

namespace msihist::spectra {

namespace fs = std::filesystem;
using nlohmann::json;

// --- MzAxis --------------------------------------------------------------------

MzAxis::MzAxis(std::vector<double> values) : values_(std::move(values)) {
    require(values_.size() >= 2, "m/z axis needs at least 2 bins");
    for (std::size_t i = 0; i < values_.size(); ++i) {
        const double v = values_[i];
        require(std::isfinite(v) && v >= 0.0, "m/z axis contains a non-finite or negative value");
        if (i > 0) require(v > values_[i - 1], "m/z axis is not strictly increasing");
    }
}

double MzAxis::median_bin_width() const {
    std::vector<double> d(values_.size() - 1);
    for (std::size_t i = 1; i < values_.size(); ++i) d[i - 1] = values_[i] - values_[i - 1];
    const std::size_t mid = d.size() / 2;
    std::nth_element(d.begin(), d.begin() + mid, d.end());
    if (d.size() % 2 == 1) return d[mid];
    const double upper = d[mid];
    const double lower = *std::max_element(d.begin(), d.begin() + mid);
    return 0.5 * (lower + upper);
}

void Spectrum::validate() const {
    require(intensities.size() == axis.size(), "spectrum length does not match its axis");
    for (double v : intensities)
        require(std::isfinite(v) && v >= 0.0, "spectrum intensity is negative or non-finite");
}

void MSIDataset::validate() const {
    require(width > 0 && height > 0, "dataset dimensions must be positive");
    require(pixel_size_um > 0.0 && std::isfinite(pixel_size_um), "pixel_size_um must be > 0");
    require(axis.size() >= 2, "dataset axis is missing");
    require(intensities.size() == pixel_count() * axis.size(),
            "spectra payload size does not match width x height x n_bins");
    require(mask.size() == pixel_count(), "mask size does not match width x height");
    for (float v : intensities)
        require(std::isfinite(v) && v >= 0.0f, "spectra contain negative or non-finite intensities");
}

// --- I/O -------------------------------------------------------------------

namespace {

std::ifstream open_binary(const fs::path &p) {
    std::ifstream is(p, std::ios::binary);
    if (!is) throw InvalidInput("cannot open " + p.string());
    return is;
}

std::string strip(std::string s) {
    while (!s.empty() && (s.back() == '\r' || s.back() == ' ')) s.pop_back();
    return s;
}

json read_header(const fs::path &dir) {
    std::ifstream is(dir / "header.json");
    if (!is) throw InvalidInput("missing header.json in " + dir.string());
    json h;
    try {
        is >> h;
    } catch (const json::exception &e) {
        throw InvalidInput("malformed header.json: " + std::string(e.what()));
    }
    for (const char *key : {"width", "height", "pixel_size_um", "n_bins", "dtype", "endianness", "version"})
        if (!h.contains(key)) throw InvalidInput(std::string("malformed header: missing field '") + key + "'");
    try {
        if (h.at("dtype").get<std::string>() != "f32")
            throw InvalidInput("malformed header: dtype must be \"f32\"");
        if (h.at("endianness").get<std::string>() != "little")
            throw InvalidInput("malformed header: endianness must be \"little\"");
        if (h.at("version").get<int>() != 1) throw InvalidInput("malformed header: unsupported version");
        if (h.at("width").get<long long>() <= 0 || h.at("height").get<long long>() <= 0 ||
            h.at("n_bins").get<long long>() < 2)
            throw InvalidInput("malformed header: non-positive dimensions");
    } catch (const json::exception &e) {
        throw InvalidInput("malformed header: " + std::string(e.what()));
    }
    return h;
}

MzAxis read_axis_bin(const fs::path &dir, std::size_t n_bins) {
    const auto p = dir / "mzaxis.bin";
    if (!fs::exists(p)) throw InvalidInput("missing mzaxis.bin in " + dir.string());
    if (fs::file_size(p) != n_bins * sizeof(double))
        throw InvalidInput("size mismatch: mzaxis.bin does not hold n_bins values");
    auto is = open_binary(p);
    std::vector<double> mz(n_bins);
    binio::get_array(is, mz.data(), n_bins);
    return MzAxis(std::move(mz));
}

MSIDataset load_container(const fs::path &dir) {
    const json h = read_header(dir);
    MSIDataset ds;
    ds.width = h["width"].get<int>();
    ds.height = h["height"].get<int>();
    ds.pixel_size_um = h["pixel_size_um"].get<double>();
    const auto n_bins = h["n_bins"].get<std::size_t>();
    ds.axis = read_axis_bin(dir, n_bins);

    const auto sp = dir / "spectra.bin";
    if (!fs::exists(sp)) throw InvalidInput("missing spectra.bin in " + dir.string());
    const std::size_t expected = ds.pixel_count() * n_bins;
    if (fs::file_size(sp) != expected * sizeof(float)) {
        throw InvalidInput("size mismatch: header declares " + std::to_string(ds.pixel_count()) +
                           " pixels x " + std::to_string(n_bins) + " bins but spectra.bin holds " +
                           std::to_string(fs::file_size(sp) / sizeof(float)) + " values");
    }
    ds.intensities.resize(expected);
    {
        auto is = open_binary(sp);
        binio::get_array(is, ds.intensities.data(), expected);
    }

    ds.mask.assign(ds.pixel_count(), 1);
    const auto mp = dir / "mask.bin";
    if (fs::exists(mp)) {
        if (fs::file_size(mp) != ds.pixel_count())
            throw InvalidInput("size mismatch: mask.bin does not hold width x height bytes");
        auto is = open_binary(mp);
        binio::get_array(is, ds.mask.data(), ds.pixel_count());
        for (std::size_t i = 0; i < ds.pixel_count(); ++i) {
            if (ds.mask[i] > 1) throw InvalidInput("mask.bin values must be 0 or 1");
            if (!ds.mask[i]) {
                auto s = ds.spectrum(i);
                std::fill(s.begin(), s.end(), 0.0f);
            }
        }
    }
    ds.validate();
    return ds;
}

MSIDataset load_csv(const fs::path &file) {
    std::ifstream is(file);
    if (!is) throw InvalidInput("cannot open " + file.string());
    std::string line;
    if (!std::getline(is, line) || strip(line) != "x,y,mz,intensity")
        throw InvalidInput("malformed header: CSV must start with 'x,y,mz,intensity'");

    std::map<std::pair<int, int>, std::map<double, double>> pixels;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        line = strip(line);
        if (line.empty()) continue;
        const auto f = csv::split(line);
        const std::string where = file.string() + ":" + std::to_string(lineno);
        if (f.size() != 4) throw InvalidInput("expected 4 fields at " + where);
        const double xd = csv::to_double(f[0], where), yd = csv::to_double(f[1], where);
        if (xd < 0 || yd < 0 || xd != std::floor(xd) || yd != std::floor(yd))
            throw InvalidInput("pixel coordinates must be nonnegative integers at " + where);
        const double mz = csv::to_double(f[2], where), v = csv::to_double(f[3], where);
        auto &spec = pixels[{static_cast<int>(yd), static_cast<int>(xd)}];
        if (!spec.emplace(mz, v).second) throw InvalidInput("duplicate (x,y,mz) at " + where);
    }
    if (pixels.empty()) throw InvalidInput("CSV contains no spectra");

    MSIDataset ds;
    int max_x = 0, max_y = 0;
    for (const auto &[yx, _] : pixels) {
        max_y = std::max(max_y, yx.first);
        max_x = std::max(max_x, yx.second);
    }
    ds.width = max_x + 1;
    ds.height = max_y + 1;
    std::vector<double> mz;
    for (const auto &[m, _] : pixels.begin()->second) mz.push_back(m);
    ds.axis = MzAxis(mz);
    ds.intensities.assign(ds.pixel_count() * ds.axis.size(), 0.0f);
    ds.mask.assign(ds.pixel_count(), 0);
    for (const auto &[yx, spec] : pixels) {
        if (spec.size() != mz.size())
            throw InvalidInput("size mismatch: pixel spectra do not share the same m/z set");
        const std::size_t p = ds.pixel_index(yx.second, yx.first);
        auto out = ds.spectrum(p);
        std::size_t i = 0;
        for (const auto &[m, v] : spec) {
            if (m != mz[i]) throw InvalidInput("pixel spectra do not share the same m/z set");
            out[i++] = static_cast<float>(v);
        }
        ds.mask[p] = 1;
    }
    ds.validate();
    return ds;
}

} // namespace

MSIDataset load_msi(const fs::path &path) {
    if (fs::is_directory(path)) return load_container(path);
    if (fs::is_regular_file(path)) return load_csv(path);
    throw InvalidInput("no MSI data at " + path.string());
}

MzAxis load_axis(const fs::path &path) {
    if (fs::is_directory(path)) {
        const json h = read_header(path);
        return read_axis_bin(path, h["n_bins"].get<std::size_t>());
    }
    return load_msi(path).axis;
}

void save_msi(const MSIDataset &ds, const fs::path &dir) {
    ds.validate();
    fs::create_directories(dir);
    json h = {{"width", ds.width},       {"height", ds.height},     {"pixel_size_um", ds.pixel_size_um},
              {"n_bins", ds.axis.size()}, {"dtype", "f32"},          {"endianness", "little"},
              {"version", 1}};
    {
        std::ofstream os(dir / "header.json");
        os << h.dump(2) << '\n';
        if (!os) throw RuntimeFailure("cannot write " + (dir / "header.json").string());
    }
    auto write = [&](const char *name, auto writer) {
        std::ofstream os(dir / name, std::ios::binary);
        writer(os);
        if (!os) throw RuntimeFailure("cannot write " + (dir / name).string());
    };
    write("mzaxis.bin", [&](std::ostream &os) {
        binio::put_array(os, ds.axis.values().data(), ds.axis.size());
    });
    write("spectra.bin", [&](std::ostream &os) {
        binio::put_array(os, ds.intensities.data(), ds.intensities.size());
    });
    write("mask.bin", [&](std::ostream &os) { binio::put_array(os, ds.mask.data(), ds.mask.size()); });
}

void write_peaks_csv(const PeakList &peaks, const fs::path &path) {
    std::ofstream os(path);
    os << "mz,intensity\n";
    os.precision(17);
    for (const auto &p : peaks.peaks) os << p.mz << ',' << p.intensity << '\n';
    if (!os) throw RuntimeFailure("cannot write " + path.string());
}

PeakList read_peaks_csv(const fs::path &path) {
    std::ifstream is(path);
    if (!is) throw InvalidInput("cannot open " + path.string());
    std::string line;
    if (!std::getline(is, line) || strip(line) != "mz,intensity")
        throw InvalidInput("peak CSV must start with 'mz,intensity'");
    PeakList out;
    while (std::getline(is, line)) {
        line = strip(line);
        if (line.empty()) continue;
        const auto f = csv::split(line);
        if (f.size() != 2) throw InvalidInput("expected 2 fields in " + path.string());
        out.peaks.push_back({csv::to_double(f[0], path.string()), csv::to_double(f[1], path.string())});
    }
    return out;
}

// --- processing ----------------------------------------------------------------

MzAxis make_shared_axis(std::span<const MzAxis> axes) {
    require(!axes.empty(), "make_shared_axis: no axes given");
    double lo = axes.front().front(), hi = axes.front().back();
    std::vector<double> widths;
    for (const auto &a : axes) {
        lo = std::min(lo, a.front());
        hi = std::max(hi, a.back());
        for (std::size_t i = 1; i < a.size(); ++i) widths.push_back(a[i] - a[i - 1]);
    }
    std::sort(widths.begin(), widths.end());
    const std::size_t m = widths.size() / 2;
    const double w = widths.size() % 2 ? widths[m] : 0.5 * (widths[m - 1] + widths[m]);
    const auto n = static_cast<std::size_t>(std::floor((hi - lo) / w + 1e-9)) + 1;
    std::vector<double> values(std::max<std::size_t>(n, 2));
    for (std::size_t i = 0; i < values.size(); ++i) values[i] = lo + static_cast<double>(i) * w;
    return MzAxis(std::move(values));
}

void rebin_row(const MzAxis &source, std::span<const float> in, const MzAxis &target,
               std::span<float> out) {
    const auto &src = source.values();
    const double lo = src.front(), hi = src.back();
    std::size_t j = 0;  // first source index with src[j] >= t; targets are increasing
    for (std::size_t i = 0; i < target.size(); ++i) {
        const double t = target[i];
        if (t < lo || t > hi) {
            out[i] = 0.0f;
            continue;
        }
        while (src[j] < t) ++j;
        if (src[j] == t) {
            out[i] = in[j];
            continue;
        }
        const double x0 = src[j - 1], x1 = src[j];
        const double y0 = in[j - 1], y1 = in[j];
        const double f = (t - x0) / (x1 - x0);
        out[i] = static_cast<float>(std::max(0.0, y0 + f * (y1 - y0)));
    }
}

MSIDataset rebin(const MSIDataset &dataset, const MzAxis &target) {
    dataset.validate();
    require(target.size() >= 2, "rebin: invalid target axis");
    MSIDataset out;
    out.width = dataset.width;
    out.height = dataset.height;
    out.pixel_size_um = dataset.pixel_size_um;
    out.axis = target;
    out.mask = dataset.mask;
    out.intensities.assign(dataset.pixel_count() * target.size(), 0.0f);
    for (std::size_t p = 0; p < dataset.pixel_count(); ++p)
        rebin_row(dataset.axis, dataset.spectrum(p), target, out.spectrum(p));
    return out;
}

Spectrum sum_spectra(const MSIDataset &dataset) {
    Spectrum s{dataset.axis, std::vector<double>(dataset.axis.size(), 0.0)};
    bool any = false;
    for (std::size_t p = 0; p < dataset.pixel_count(); ++p) {
        if (!dataset.acquired(p)) continue;
        any = true;
        const auto row = dataset.spectrum(p);
        for (std::size_t i = 0; i < row.size(); ++i) s.intensities[i] += row[i];
    }
    require(any, "sum_spectra: no acquired pixels (mask is empty)");
    return s;
}

Spectrum add_spectra(const Spectrum &a, const Spectrum &b) {
    require(a.axis == b.axis, "add_spectra: spectra are on different axes");
    Spectrum s = a;
    for (std::size_t i = 0; i < s.intensities.size(); ++i) s.intensities[i] += b.intensities[i];
    return s;
}

PeakList pick_peaks(const Spectrum &spectrum, std::size_t k, double min_separation) {
    spectrum.validate();
    require(k >= 1, "pick_peaks: k must be >= 1");
    require(min_separation >= 0.0, "pick_peaks: min_separation must be >= 0");
    const auto &v = spectrum.intensities;
    const std::size_t n = v.size();
    require(n >= 3, "pick_peaks: spectrum must have at least 3 bins");

    std::vector<std::size_t> candidates;
    for (std::size_t i = 1; i + 1 < n;) {
        if (!(v[i] > v[i - 1])) {
            ++i;
            continue;
        }
        std::size_t j = i;
        while (j + 1 < n && v[j + 1] == v[i]) ++j;
        if (j + 1 < n && v[j + 1] < v[i]) candidates.push_back(i);
        i = j + 1;
    }
    std::stable_sort(candidates.begin(), candidates.end(),
                     [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });

    PeakList out;
    for (std::size_t c : candidates) {
        if (out.size() == k) break;
        const double mz = spectrum.axis[c];
        const bool too_close = std::any_of(out.peaks.begin(), out.peaks.end(), [&](const Peak &p) {
            return std::abs(p.mz - mz) < min_separation;
        });
        if (!too_close) out.peaks.push_back({mz, v[c]});
    }
    return out;
}

Image ion_image(const MSIDataset &dataset, double mz, double half_window) {
    require(half_window >= 0.0, "ion_image: half_window must be >= 0");
    require(mz >= dataset.axis.front() && mz <= dataset.axis.back(),
            "ion_image: m/z " + std::to_string(mz) + " is outside the axis range");
    const auto &ax = dataset.axis.values();
    const auto first = std::lower_bound(ax.begin(), ax.end(), mz - half_window) - ax.begin();
    const auto last = std::upper_bound(ax.begin(), ax.end(), mz + half_window) - ax.begin();

    Image img(dataset.width, dataset.height, 1);
    for (std::size_t p = 0; p < dataset.pixel_count(); ++p) {
        if (!dataset.acquired(p)) continue;
        const auto row = dataset.spectrum(p);
        double s = 0.0;
        for (auto i = first; i < last; ++i) s += row[i];
        img.data[p] = s;
    }
    return img;
}

PeakImageStack build_peak_stack(const MSIDataset &dataset, const PeakList &peaks, double half_window) {
    require(!peaks.empty(), "build_peak_stack: empty peak list");
    PeakImageStack st;
    st.width = dataset.width;
    st.height = dataset.height;
    st.channels = static_cast<int>(peaks.size());
    st.mask = dataset.mask;
    st.data.reserve(st.plane_size() * peaks.size());
    for (const auto &p : peaks.peaks) {
        const Image img = ion_image(dataset, p.mz, half_window);
        st.data.insert(st.data.end(), img.data.begin(), img.data.end());
        st.peak_mzs.push_back(p.mz);
    }
    return st;
}

} // namespace msihist::spectra
