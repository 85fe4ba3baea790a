#include "msihist/pipeline/prepare.hpp"

#include "msihist/error.hpp"
#include "msihist/image_io.hpp"
#include "msihist/pipeline/log.hpp"
#include "msihist/reduce.hpp"
#include "msihist/spectra.hpp"

#include "../binio.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

namespace msihist::pipeline {

namespace fs = std::filesystem;
using imagereg::AffineTransform;
using imagereg::PadMode;

namespace {

template <class F>
auto stage(const std::string &id, const char *name, F &&fn) -> decltype(fn()) {
    try {
        return fn();
    } catch (const InvalidInput &e) {
        throw InvalidInput("sample " + id + ": " + name + ": " + e.what());
    } catch (const RuntimeFailure &e) {
        throw RuntimeFailure("sample " + id + ": " + name + ": " + e.what());
    } catch (const std::exception &e) {
        throw RuntimeFailure("sample " + id + ": " + name + ": " + e.what());
    }
}

Image stack_image(const spectra::PeakImageStack &s) {
    Image img(s.width, s.height, s.channels);
    img.data = s.data;
    return img;
}

// Each channel divided by its 99th percentile over acquired pixels, clamped to [0, 1].
Image normalized_stack(const spectra::PeakImageStack &s) {
    Image img = stack_image(s);
    const std::size_t plane = s.plane_size();
    for (int c = 0; c < s.channels; ++c) {
        std::vector<double> vals;
        for (std::size_t p = 0; p < plane; ++p)
            if (s.mask[p]) vals.push_back(s.at(c, p));
        const double hi = vals.empty() ? 0.0 : reduce::percentile(vals, 99.0);
        double *ch = img.data.data() + c * plane;
        for (std::size_t p = 0; p < plane; ++p)
            ch[p] = hi > 0.0 ? std::clamp(ch[p] / hi, 0.0, 1.0) : 0.0;
    }
    return img;
}

double rms_residual(const imagereg::ControlPoints &cp, const AffineTransform &t) {
    double s = 0.0;
    for (const auto &p : cp.pairs) {
        const auto q = t.apply(p.src_x, p.src_y);
        s += (q[0] - p.dst_x) * (q[0] - p.dst_x) + (q[1] - p.dst_y) * (q[1] - p.dst_y);
    }
    return std::sqrt(s / static_cast<double>(cp.pairs.size()));
}

nlohmann::ordered_json affine_json(const AffineTransform &t) { return {t.a, t.b, t.tx, t.c, t.d, t.ty}; }

void put_image(std::ostream &os, const Image &img) {
    binio::put<std::int32_t>(os, img.width);
    binio::put<std::int32_t>(os, img.height);
    binio::put<std::int32_t>(os, img.channels);
    binio::put_array(os, img.data.data(), img.data.size());
}

Image get_image(std::istream &is) {
    const int w = binio::get<std::int32_t>(is), h = binio::get<std::int32_t>(is), c = binio::get<std::int32_t>(is);
    require(w > 0 && h > 0 && c > 0 && static_cast<long long>(w) * h * c < (1LL << 31), "pairs.bin: bad image header");
    Image img(w, h, c);
    binio::get_array(is, img.data.data(), img.data.size());
    return img;
}

constexpr char kMagic[4] = {'M', 'S', 'I', 'P'};
constexpr std::uint32_t kVersion = 1;

} // namespace

std::vector<const ImagePair *> PreparedSet::select(Split s) const {
    std::vector<const ImagePair *> out;
    for (const auto &p : pairs)
        if (p.split == s) out.push_back(&p);
    return out;
}

AffineTransform square_resize_map(int w, int h, int size) {
    const int side = std::max(w, h);
    const auto [ox, oy] = imagereg::pad_offset(w, h, side, side);
    AffineTransform shift;
    shift.tx = ox;
    shift.ty = oy;
    return imagereg::resize_map(side, side, size, size).compose(shift);
}

Image square_resize(const Image &img, int size, PadMode pad) {
    const int side = std::max(img.width, img.height);
    return imagereg::resize(imagereg::pad_to(img, side, side, pad), size, size);
}

PreparedSet prepare_pairs(const DatasetManifest &manifest, const RunConfig &cfg) {
    require(!manifest.samples.empty(), "prepare: manifest has no samples");
    const auto &samples = manifest.samples;

    std::vector<std::string> ids;
    for (const auto &s : samples) ids.push_back(s.id);
    const auto splits = manifest.splits.size() == samples.size()
                            ? manifest.splits
                            : split_dataset(ids, {cfg.train_fraction, cfg.val_fraction, cfg.test_fraction}, cfg.seed);

    // Shared axis over every sample, then the dataset-wide summed spectrum.
    std::vector<spectra::MzAxis> axes;
    for (const auto &s : samples) axes.push_back(stage(s.id, "load", [&] { return spectra::load_axis(s.msi); }));
    const spectra::MzAxis shared = spectra::make_shared_axis(axes);
    log_info("prepare: shared axis " + std::to_string(shared.size()) + " bins over " +
             std::to_string(samples.size()) + " samples");

    spectra::Spectrum total;
    for (const auto &s : samples) {
        const auto ds = stage(s.id, "rebin", [&] { return spectra::rebin(spectra::load_msi(s.msi), shared); });
        const auto sum = stage(s.id, "sum", [&] { return spectra::sum_spectra(ds); });
        total = total.intensities.empty() ? sum : spectra::add_spectra(total, sum);
    }
    const auto peaks = spectra::pick_peaks(total, static_cast<std::size_t>(cfg.k_peaks), cfg.min_separation);
    require(peaks.size() == static_cast<std::size_t>(cfg.k_peaks),
            "prepare: summed spectrum has only " + std::to_string(peaks.size()) + " peaks, fewer than k_peaks = " +
                std::to_string(cfg.k_peaks));

    PreparedSet out;
    for (const auto &p : peaks.peaks) out.peak_mzs.push_back(p.mz);

    const int S = cfg.image_size;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto &s = samples[i];
        ImagePair pair;
        pair.id = s.id;
        pair.split = splits[i];
        auto &prov = pair.provenance;
        prov.pad = cfg.pad;

        const auto ds = stage(s.id, "rebin", [&] { return spectra::rebin(spectra::load_msi(s.msi), shared); });
        const auto stack = stage(s.id, "stack", [&] { return spectra::build_peak_stack(ds, peaks, cfg.half_window); });
        const Image rgb = stage(s.id, "reduce", [&] { return reduce::pca_rgb(stack); });
        prov.msi_width = rgb.width;
        prov.msi_height = rgb.height;

        const Image hist = stage(s.id, "histology", [&] { return read_png(s.histology); });
        prov.hist_width = hist.width;
        prov.hist_height = hist.height;

        stage(s.id, "resize", [&] {
            pair.msi_rgb = square_resize(rgb, S, PadMode::black);
            pair.input = cfg.input == ModelInput::rgb ? pair.msi_rgb
                                                     : square_resize(normalized_stack(stack), S, PadMode::black);
        });

        stage(s.id, "register", [&] {
            const auto cp = imagereg::read_control_points(s.control_points);
            prov.fitted = imagereg::fit_affine(cp);
            prov.control_rms = rms_residual(cp, prov.fitted);
            const AffineTransform to_msi = square_resize_map(rgb.width, rgb.height, S);
            const AffineTransform from_hist = square_resize_map(hist.width, hist.height, S).inverse();
            prov.warp = to_msi.compose(prov.fitted).compose(from_hist);
            pair.histology = imagereg::warp(square_resize(hist, S, cfg.pad), prov.warp, S, S, cfg.pad);
        });
        log_debug("prepare: " + s.id + " (" + to_string(pair.split) + ")");
        out.pairs.push_back(std::move(pair));
    }
    return out;
}

void save_prepared(const PreparedSet &set, const fs::path &dir) {
    fs::create_directories(dir);
    {
        std::ofstream os(dir / "pairs.bin", std::ios::binary);
        os.write(kMagic, 4);
        binio::put<std::uint32_t>(os, kVersion);
        binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(set.peak_mzs.size()));
        binio::put_array(os, set.peak_mzs.data(), set.peak_mzs.size());
        binio::put<std::uint32_t>(os, static_cast<std::uint32_t>(set.pairs.size()));
        for (const auto &p : set.pairs) {
            binio::put_string(os, p.id);
            binio::put<std::uint8_t>(os, static_cast<std::uint8_t>(p.split));
            binio::put<std::uint8_t>(os, p.provenance.pad == PadMode::white);
            put_image(os, p.msi_rgb);
            put_image(os, p.input);
            put_image(os, p.histology);
        }
        if (!os) throw RuntimeFailure("cannot write " + (dir / "pairs.bin").string());
    }
    {
        std::ofstream os(dir / "peaks.csv", std::ios::binary);
        os << "mz\n";
        os.precision(17);
        for (double m : set.peak_mzs) os << m << '\n';
    }
    nlohmann::ordered_json prov = nlohmann::ordered_json::array();
    for (const auto &p : set.pairs) {
        const auto &v = p.provenance;
        prov.push_back({{"id", p.id},
                        {"split", to_string(p.split)},
                        {"pad", imagereg::to_string(v.pad)},
                        {"msi_size", {v.msi_width, v.msi_height}},
                        {"histology_size", {v.hist_width, v.hist_height}},
                        {"fitted_affine", affine_json(v.fitted)},
                        {"warp_affine", affine_json(v.warp)},
                        {"control_rms", v.control_rms}});
        write_png(dir / (p.id + "_msi.png"), p.msi_rgb);
        write_png(dir / (p.id + "_histology.png"), p.histology);
    }
    std::ofstream os(dir / "provenance.json", std::ios::binary);
    os << prov.dump(2) << '\n';
    if (!os) throw RuntimeFailure("cannot write " + (dir / "provenance.json").string());
}

PreparedSet load_prepared(const fs::path &dir) {
    const fs::path file = dir / "pairs.bin";
    std::ifstream is(file, std::ios::binary);
    if (!is) throw InvalidInput("no prepared pairs at " + file.string() + " (run prepare first)");
    char magic[4];
    if (!is.read(magic, 4) || !std::equal(magic, magic + 4, kMagic)) throw InvalidInput(file.string() + ": bad magic");
    const auto version = binio::get<std::uint32_t>(is);
    require(version == kVersion, file.string() + ": unsupported version " + std::to_string(version));
    PreparedSet set;
    set.peak_mzs.resize(binio::get<std::uint32_t>(is));
    binio::get_array(is, set.peak_mzs.data(), set.peak_mzs.size());
    const auto n = binio::get<std::uint32_t>(is);
    for (std::uint32_t i = 0; i < n; ++i) {
        ImagePair p;
        p.id = binio::get_string(is, 4096);
        const auto split = binio::get<std::uint8_t>(is);
        require(split <= 2, file.string() + ": bad split code");
        p.split = static_cast<Split>(split);
        p.provenance.pad = binio::get<std::uint8_t>(is) ? PadMode::white : PadMode::black;
        p.msi_rgb = get_image(is);
        p.input = get_image(is);
        p.histology = get_image(is);
        set.pairs.push_back(std::move(p));
    }
    return set;
}

} // namespace msihist::pipeline
