#include "msihist/error.hpp"
#include "msihist/image_io.hpp"
#include "msihist/nn/checkpoint.hpp"
#include "msihist/pipeline/config.hpp"
#include "msihist/pipeline/dataset.hpp"
#include "msihist/pipeline/infer.hpp"
#include "msihist/pipeline/log.hpp"
#include "msihist/pipeline/prepare.hpp"
#include "msihist/pipeline/report.hpp"
#include "msihist/pipeline/run.hpp"
#include "msihist/pipeline/synthetic.hpp"
#include "msihist/pipeline/train.hpp"
#include "msihist/spectra.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

using namespace msihist;
using namespace msihist::pipeline;
namespace fs = std::filesystem;

namespace {

struct QuietLogs {
    QuietLogs() { set_log_level(LogLevel::quiet); }
    ~QuietLogs() { set_log_level(LogLevel::info); }
};

// Small, fast configuration for end-to-end tests.
RunConfig tiny_config(const fs::path &out) {
    RunConfig c = preset("desk");
    c.out_dir = out;
    c.n_samples = 12;
    c.image_size = 32;
    c.unet.net = {3, 3, 4, 2, false, 16};
    c.unet.stride = 8;
    c.unet.batch = 16;
    c.unet.max_steps = 6;
    c.unet.eval_every = 2;
    c.pix2pix.net.gen = {3, 3, 4, 2, true, 32};
    c.pix2pix.net.disc = {6, 4, 2, true};
    c.pix2pix.max_steps = 6;
    c.pix2pix.eval_every = 2;
    c.finalize();
    return c;
}

bool same_bytes(const fs::path &a, const fs::path &b) { return testutil::slurp(a) == testutil::slurp(b); }

std::vector<std::string> ids(int n) {
    std::vector<std::string> v;
    for (int i = 0; i < n; ++i) v.push_back("id" + std::to_string(i));
    return v;
}

} // namespace

TEST_CASE("config: presets, parsing and validation") {
    const RunConfig desk = preset("desk");
    CHECK(desk.unet.train.lr == 0.01);
    CHECK(desk.unet.batch == 64);
    CHECK(desk.pix2pix.net.lr == 0.0002);
    CHECK(desk.pix2pix.net.lambda_l1 == 200.0);
    CHECK(desk.k_peaks == 50);
    CHECK(desk.train_fraction == 0.7);
    CHECK(desk.val_fraction == 0.1);
    CHECK(desk.test_fraction == 0.2);
    CHECK(desk.stopping.patience == 10);
    CHECK(desk.stopping.min_improvement == 1e-4);
    CHECK(desk.pix2pix.net.disc.in_channels == 6);
    const RunConfig full = preset("full");
    CHECK(full.unet.net.depth == 4);
    CHECK(full.unet.net.base_width == 64);
    CHECK(full.pix2pix.net.lr == 0.00002);
    CHECK(full.unet.train.lr == 0.01);

    const RunConfig c = parse_config("[run]\nseed = 7\n\n[preprocess]\npad = black\nk_peaks = 20\n\n[unet]\nlr = 0.5\n");
    CHECK(c.seed == 7);
    CHECK(c.pad == imagereg::PadMode::black);
    CHECK(c.k_peaks == 20);
    CHECK(c.unet.train.lr == 0.5);
    CHECK(c.unet.batch == 64);

    // to_text is a faithful serialization.
    RunConfig d = preset("full");
    d.seed = 123456789012345ULL;
    d.input = ModelInput::peaks;
    d.finalize();
    CHECK(to_text(parse_config(to_text(d))) == to_text(d));
    CHECK(parse_config(to_text(d)).pix2pix.net.gen.in_channels == 50);

    auto message = [](const std::string &text) {
        try {
            parse_config(text);
        } catch (const InvalidInput &e) {
            return std::string(e.what());
        }
        return std::string("(no error)");
    };
    CHECK(message("[unet]\nlearning_rate = 1\n").find("unet.learning_rate") != std::string::npos);
    CHECK(message("[unet]\nlr = fast\n").find("unet.lr") != std::string::npos);
    CHECK(message("[bogus]\nx = 1\n").find("bogus") != std::string::npos);
    CHECK(message("[split]\ntrain = 0.5\n").find("split") != std::string::npos);
    CHECK(message("[unet]\ndepth = 3\npatch = 36\n").find("unet") != std::string::npos);
    CHECK(message("[preprocess]\npad = grey\n").find("preprocess.pad") != std::string::npos);
    CHECK(message("[run]\npreset = huge\n").find("run.preset") != std::string::npos);
    CHECK(message("seed = 3\n").find("section") != std::string::npos);
    CHECK(schema_text().find("pix2pix.lambda_l1") != std::string::npos);

    CHECK(parse_variant("pix2pix:white").label() == "pix2pix (W)");
    CHECK(parse_variant("unet:black").key() == "unet_black");
    CHECK_THROWS_AS(parse_variant("gan:white"), InvalidInput);
}

TEST_CASE("split_dataset: worked examples") {
    CHECK(split_sizes(10, {0.7, 0.1, 0.2}) == std::array<std::size_t, 3>{7, 1, 2});
    CHECK(split_sizes(40, {0.7, 0.1, 0.2}) == std::array<std::size_t, 3>{28, 4, 8});
    CHECK(split_sizes(111, {0.7, 0.1, 0.2}) == std::array<std::size_t, 3>{78, 11, 22});

    const auto a = split_dataset(ids(10), {0.7, 0.1, 0.2}, 3);
    CHECK(a == split_dataset(ids(10), {0.7, 0.1, 0.2}, 3));
    CHECK(std::count(a.begin(), a.end(), Split::train) == 7);
    CHECK(std::count(a.begin(), a.end(), Split::val) == 1);
    CHECK(std::count(a.begin(), a.end(), Split::test) == 2);
    CHECK(a != split_dataset(ids(10), {0.7, 0.1, 0.2}, 4));

    const auto all = split_dataset(ids(13), {1, 0, 0}, 1);
    CHECK(std::count(all.begin(), all.end(), Split::train) == 13);

    CHECK_THROWS_AS(split_dataset({}, {0.7, 0.1, 0.2}, 1), InvalidInput);
    CHECK_THROWS_AS(split_dataset(ids(4), {0.7, 0.1, 0.1}, 1), InvalidInput);
}

TEST_CASE("split_dataset: sizes stay within one item of the request") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    QuietLogs quiet;
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t n = 1 + rng() % 200;
        double f0 = u(rng), f1 = u(rng) * (1 - f0);
        const std::array<double, 3> f{f0, f1, 1.0 - f0 - f1};
        const auto s = split_dataset(ids(static_cast<int>(n)), f, rng());
        REQUIRE(s.size() == n);
        for (int k = 0; k < 3; ++k) {
            const double got = static_cast<double>(std::count(s.begin(), s.end(), static_cast<Split>(k)));
            CHECK(std::abs(got - f[k] * n) <= 1.0);
        }
    }
}

TEST_CASE("manifest roundtrip and validation") {
    testutil::TempDir dir("manifest");
    DatasetManifest m;
    m.samples.push_back({"a", dir / "a/msi", dir / "a/h.png", dir / "a/cp.csv"});
    m.samples.push_back({"b", dir / "b/msi", dir / "b/h.png", dir / "b/cp.csv"});
    write_manifest(m, dir / "manifest.csv");
    CHECK(testutil::slurp(dir / "manifest.csv").find("a,a/msi,a/h.png,a/cp.csv") != std::string::npos);
    const auto back = read_manifest(dir / "manifest.csv");
    REQUIRE(back.samples.size() == 2);
    CHECK(back.samples[1].histology == dir / "b/h.png");

    testutil::write_text(dir / "dup.csv", "id,msi,histology,control_points\nx,m,h,c\nx,m,h,c\n");
    CHECK_THROWS_AS(read_manifest(dir / "dup.csv"), InvalidInput);
    testutil::write_text(dir / "bad.csv", "id,msi\nx,m\n");
    CHECK_THROWS_AS(read_manifest(dir / "bad.csv"), InvalidInput);
}

TEST_CASE("synthetic data: determinism and planted ground truth") {
    testutil::TempDir a("syn-a"), b("syn-b");
    const auto truth = generate_synthetic_dataset(a.path(), {1, 24, 9});
    generate_synthetic_dataset(b.path(), {1, 24, 9});
    for (const char *f : {"manifest.csv", "planted_peaks.csv", "s000/histology.png", "s000/control_points.csv",
                          "s000/truth.json", "s000/msi/spectra.bin", "s000/msi/mzaxis.bin", "s000/msi/header.json"})
        CHECK_MESSAGE(same_bytes(a / f, b / f), std::string(f));

    // The emitted control points determine the planted affine.
    const auto t = imagereg::fit_affine(imagereg::read_control_points(a / "s000/control_points.csv"));
    const auto &g = truth.transforms[0];
    for (auto [x, y] : {std::pair{t.a, g.a}, {t.b, g.b}, {t.c, g.c}, {t.d, g.d}, {t.tx, g.tx}, {t.ty, g.ty}})
        CHECK(std::abs(x - y) <= 1e-9);
}

TEST_CASE("synthetic data: the top 50 peaks are the planted loci") {
    testutil::TempDir dir("syn-peaks");
    const auto truth = generate_synthetic_dataset(dir.path(), {4, 24, 5});
    const auto m = read_manifest(dir / "manifest.csv");
    std::vector<spectra::MzAxis> axes;
    for (const auto &s : m.samples) axes.push_back(spectra::load_axis(s.msi));
    const auto shared = spectra::make_shared_axis(axes);
    spectra::Spectrum total;
    for (const auto &s : m.samples) {
        const auto sum = spectra::sum_spectra(spectra::rebin(spectra::load_msi(s.msi), shared));
        total = total.intensities.empty() ? sum : spectra::add_spectra(total, sum);
    }
    const auto peaks = spectra::pick_peaks(total, 50);
    REQUIRE(peaks.size() == 50);
    std::set<std::size_t> matched;
    const double tol = shared.median_bin_width();
    for (const auto &p : peaks.peaks) {
        std::size_t best = 0;
        for (std::size_t k = 1; k < truth.planted_mz.size(); ++k)
            if (std::abs(truth.planted_mz[k] - p.mz) < std::abs(truth.planted_mz[best] - p.mz)) best = k;
        CHECK(std::abs(truth.planted_mz[best] - p.mz) <= tol);
        matched.insert(best);
    }
    CHECK(matched.size() == 50);
}

TEST_CASE("prepare_pairs: identity registration leaves histology unchanged") {
    testutil::TempDir dir("prep-id");
    const int S = 16;
    std::vector<double> axis;
    for (int j = 0; j < 8; ++j) axis.push_back(100.0 + j);
    std::vector<float> v(static_cast<std::size_t>(S) * S * 8);
    std::mt19937_64 rng(1);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>((i % 8 == 1 || i % 8 == 3 || i % 8 == 5) ? 1.0 + (rng() % 100) / 50.0 : 0.1);
    spectra::save_msi(testutil::make_dataset(S, S, axis, v), dir / "s/msi");
    fs::create_directories(dir / "s");
    const Image hist = testutil::random_image(rng, S, S, 3);
    write_png(dir / "s/h.png", hist);
    imagereg::ControlPoints cp;
    for (auto [x, y] : {std::pair{0.0, 0.0}, {15.0, 0.0}, {0.0, 15.0}, {9.0, 4.0}}) cp.pairs.push_back({x, y, x, y});
    imagereg::write_control_points(cp, dir / "s/cp.csv");

    DatasetManifest m;
    m.samples.push_back({"s", dir / "s/msi", dir / "s/h.png", dir / "s/cp.csv"});
    RunConfig cfg = tiny_config(dir.path());
    cfg.image_size = S;
    cfg.k_peaks = 3;
    cfg.unet.net.patch = 16;
    cfg.pix2pix.net.gen.depth = 2;
    cfg.finalize();
    QuietLogs quiet;
    const auto set = prepare_pairs(m, cfg);
    REQUIRE(set.pairs.size() == 1);
    const Image stored = read_png(dir / "s/h.png");
    double worst = 0.0;
    for (std::size_t i = 0; i < stored.data.size(); ++i)
        worst = std::max(worst, std::abs(set.pairs[0].histology.data[i] - stored.data[i]));
    CHECK(worst <= 1e-12);
    CHECK(set.peak_mzs.size() == 3);

    // Stage errors name the sample and the stage.
    m.samples[0].histology = dir / "s/missing.png";
    try {
        prepare_pairs(m, cfg);
        FAIL("expected an error");
    } catch (const InvalidInput &e) {
        CHECK(std::string(e.what()).find("sample s: histology") != std::string::npos);
    } catch (const RuntimeFailure &e) {
        CHECK(std::string(e.what()).find("sample s: histology") != std::string::npos);
    }
}

TEST_CASE("prepare_pairs: known affine recovered against ground truth") {
    testutil::TempDir dir("prep-affine");
    const int S = 48;
    // Ground truth in the MSI frame; the histology is a larger rotated,
    // scaled and shifted view of it.
    const Image truth = testutil::smooth_image(S, S, 3, 0.4);
    imagereg::AffineTransform t;  // histology -> MSI
    const double th = 0.1, sc = 0.55;
    t.a = sc * std::cos(th);
    t.b = -sc * std::sin(th);
    t.c = sc * std::sin(th);
    t.d = sc * std::cos(th);
    t.tx = 3.0;
    t.ty = -1.5;
    const int W = 96, H = 80;
    fs::create_directories(dir / "s");
    write_png(dir / "s/h.png", imagereg::warp(truth, t.inverse(), W, H, imagereg::PadMode::white));
    imagereg::ControlPoints cp;
    for (auto [x, y] : {std::pair{10.0, 12.0}, {80.0, 9.0}, {20.0, 70.0}, {77.0, 66.0}}) {
        const auto d = t.apply(x, y);
        cp.pairs.push_back({x, y, d[0], d[1]});
    }
    imagereg::write_control_points(cp, dir / "s/cp.csv");
    std::vector<double> axis;
    for (int j = 0; j < 9; ++j) axis.push_back(100.0 + j);
    std::vector<float> v(static_cast<std::size_t>(S) * S * 9);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = (i % 3 == 1) ? 1.0f + static_cast<float>(i % 7) : 0.0f;
    spectra::save_msi(testutil::make_dataset(S, S, axis, v), dir / "s/msi");

    DatasetManifest m;
    m.samples.push_back({"s", dir / "s/msi", dir / "s/h.png", dir / "s/cp.csv"});
    RunConfig cfg = tiny_config(dir.path());
    cfg.image_size = S;
    cfg.k_peaks = 3;
    cfg.pix2pix.net.gen.depth = 2;
    cfg.finalize();
    QuietLogs quiet;
    const auto set = prepare_pairs(m, cfg);
    const Image &reg = set.pairs[0].histology;
    // Only pixels whose source lies inside the histology canvas are comparable.
    const auto back = t.inverse();
    double err = 0.0;
    int n = 0;
    for (int y = 0; y < S; ++y)
        for (int x = 0; x < S; ++x) {
            const auto s = back.apply(x, y);
            if (s[0] < 2 || s[1] < 2 || s[0] > W - 3 || s[1] > H - 3) continue;
            for (int c = 0; c < 3; ++c) err += std::abs(reg.at(c, y, x) - truth.at(c, y, x));
            n += 3;
        }
    REQUIRE(n > 3 * S * S / 2);
    CHECK(err / n < 2e-2);
}

TEST_CASE("prepare_pairs: rerun is bit-identical and padding only touches borders") {
    testutil::TempDir dir("prep-pad");
    QuietLogs quiet;
    RunConfig cfg = tiny_config(dir.path());
    stage_generate(cfg);
    const auto manifest = read_manifest(cfg.data_root() / "manifest.csv");
    cfg.pad = imagereg::PadMode::white;
    const auto white = prepare_pairs(manifest, cfg);
    const auto white2 = prepare_pairs(manifest, cfg);
    cfg.pad = imagereg::PadMode::black;
    const auto black = prepare_pairs(manifest, cfg);
    REQUIRE(white.pairs.size() == 12);
    CHECK(white.peak_mzs == black.peak_mzs);

    int interior = 0, differing = 0;
    for (std::size_t i = 0; i < white.pairs.size(); ++i) {
        const auto &w = white.pairs[i], &b = black.pairs[i];
        CHECK(w.histology.data == white2.pairs[i].histology.data);
        CHECK(w.input.data == white2.pairs[i].input.data);
        CHECK(w.split == b.split);
        CHECK(w.msi_rgb.data == b.msi_rgb.data);
        // Prepared pixel -> raw histology pixel.
        const auto &p = w.provenance;
        const auto raw = square_resize_map(p.hist_width, p.hist_height, cfg.image_size).inverse().compose(p.warp.inverse());
        for (int y = 0; y < cfg.image_size; ++y)
            for (int x = 0; x < cfg.image_size; ++x) {
                const auto r = raw.apply(x, y);
                const bool inside = r[0] >= 3 && r[1] >= 3 && r[0] <= p.hist_width - 4 && r[1] <= p.hist_height - 4;
                for (int c = 0; c < 3; ++c) {
                    const bool same = w.histology.at(c, y, x) == b.histology.at(c, y, x);
                    if (inside) {
                        ++interior;
                        CHECK(same);
                    }
                    differing += !same;
                }
            }
    }
    CHECK(interior > 0);
    CHECK(differing > 0);

    save_prepared(white, dir / "pw");
    const auto loaded = load_prepared(dir / "pw");
    REQUIRE(loaded.pairs.size() == white.pairs.size());
    CHECK(loaded.pairs[3].histology.data == white.pairs[3].histology.data);
    CHECK(loaded.pairs[3].split == white.pairs[3].split);
    CHECK(loaded.peak_mzs == white.peak_mzs);
}

TEST_CASE("stopping rule") {
    StoppingRule r;
    r.cfg = {2, 0.1};
    CHECK(r.observe(1.0, 0));
    CHECK(r.observe(0.95, 1));  // new best, but not a meaningful improvement
    CHECK(r.stale == 1);
    CHECK(!r.done());
    CHECK(r.observe(0.8, 2));
    CHECK(r.stale == 0);
    CHECK(!r.observe(0.85, 3));
    CHECK(!r.observe(0.8, 4));
    CHECK(r.done());
    CHECK(r.best == 0.8);
    CHECK(r.best_step == 2);
}

TEST_CASE("training: zero steps, resume and determinism") {
    testutil::TempDir dir("train");
    QuietLogs quiet;
    RunConfig cfg = tiny_config(dir.path());
    stage_generate(cfg);
    cfg.pad = imagereg::PadMode::black;
    const PreparedSet set = stage_prepare(cfg);

    SUBCASE("max_steps = 0 keeps the initialization") {
        RunConfig c = cfg;
        c.unet.max_steps = 0;
        const auto r = train_unet(set, c, dir / "u0");
        CHECK(r.steps == 0);
        const auto ck = nn::load_checkpoint(dir / "u0/best.msih");
        nn::UNetRegressor fresh(c.unet.net, c.unet.train, c.seed);
        REQUIRE(ck.params.size() == fresh.model().parameters().size());
        for (std::size_t i = 0; i < ck.params.size(); ++i)
            CHECK(ck.params[i].data == fresh.model().parameters()[i].tensor.values());
        CHECK(same_bytes(dir / "u0/best.msih", dir / "u0/last.msih"));
    }

    SUBCASE("U-Net resume continues bit-identically") {
        train_unet(set, cfg, dir / "full");
        RunConfig c = cfg;
        c.unet.max_steps = 4;
        train_unet(set, c, dir / "part");
        train_unet(set, cfg, dir / "part", true);
        for (const char *f : {"last.msih", "best.msih", "log.csv", "val.csv"})
            CHECK_MESSAGE(same_bytes(dir / "full" / f, dir / "part" / f), std::string(f));
        // A different config refuses to resume.
        c.unet.train.lr = 0.5;
        CHECK_THROWS_AS(train_unet(set, c, dir / "part", true), InvalidInput);
    }

    SUBCASE("pix2pix resume continues bit-identically") {
        train_pix2pix(set, cfg, dir / "full");
        RunConfig c = cfg;
        c.pix2pix.max_steps = 4;  // a multiple of eval_every, so the evaluation schedule matches
        train_pix2pix(set, c, dir / "part");
        train_pix2pix(set, cfg, dir / "part", true);
        for (const char *f : {"last.msih", "best.msih", "log.csv", "val.csv"})
            CHECK_MESSAGE(same_bytes(dir / "full" / f, dir / "part" / f), std::string(f));
        CHECK(testutil::slurp(dir / "full/log.csv").rfind("step,loss_g,loss_d\n", 0) == 0);
    }
}

TEST_CASE("synth: zero generator, patched path and determinism") {
    testutil::TempDir dir("synth");
    RunConfig cfg = tiny_config(dir.path());

    // All-zero pix2pix generator: uniform 0.5 gray.
    nn::Pix2Pix p2p(cfg.pix2pix.net, 1);
    nn::zero_parameters(p2p.generator().parameters());
    nn::Checkpoint ck;
    ck.config = pix2pix_echo(cfg.pix2pix.net, cfg);
    nn::capture(p2p.gen_optimizer(), "g.", ck);
    nn::save_checkpoint(ck, dir / "zero.msih");
    const Synthesizer zero(dir / "zero.msih");
    std::mt19937_64 rng(4);
    const Image gray = zero.run(testutil::random_image(rng, 32, 32, 3));
    for (double v : gray.data) CHECK(v == 0.5);
    write_png(dir / "gray.png", gray);
    for (double v : read_png(dir / "gray.png").data) CHECK(std::abs(v - 128.0 / 255.0) <= 1e-12);

    // U-Net path on 48x32: edge-flush patches, averaged reassembly.
    nn::UNetRegressor reg(cfg.unet.net, cfg.unet.train, 11);
    nn::Checkpoint uck;
    uck.config = unet_echo(cfg.unet.net, cfg);
    nn::capture(reg.optimizer(), "", uck);
    nn::save_checkpoint(uck, dir / "unet.msih");
    const Synthesizer unet(dir / "unet.msih");
    const Image in = testutil::random_image(rng, 48, 32, 3);
    const Image out = unet.run(in);
    CHECK(out.width == 48);
    CHECK(out.height == 32);
    auto patches = imagereg::extract_patches(in, 16, 16);
    for (auto &p : patches) p.image = synthesize_full(reg.model(), p.image);
    const Image manual = clamp01(imagereg::reassemble(patches, 48, 32));
    double worst = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i) worst = std::max(worst, std::abs(out.data[i] - manual.data[i]));
    CHECK(worst <= 1e-12);

    write_png(dir / "a.png", unet.run(in));
    write_png(dir / "b.png", Synthesizer(dir / "unet.msih").run(in));
    CHECK(same_bytes(dir / "a.png", dir / "b.png"));

    CHECK_THROWS_AS(unet.run(testutil::random_image(rng, 32, 32, 2)), InvalidInput);
    CHECK_THROWS_AS(zero.run(testutil::random_image(rng, 34, 32, 3)), InvalidInput);
}

TEST_CASE("report: deltas and rows") {
    const Report r = make_report({{"pix2pix (W)", 1.353, 0.949, 22}, {"U-Net (B)", 0.429, 0.530, 22},
                                  {"pix2pix (B)", 1.349, 0.949, 22}});
    REQUIRE(r.deltas.has_value());
    CHECK(std::abs(r.deltas->mi - 0.924) <= 1e-9);
    CHECK(std::abs(r.deltas->ssim - 0.419) <= 1e-9);
    CHECK(r.rows[0].label == "U-Net (B)");
    CHECK(r.rows[1].label == "pix2pix (B)");
    CHECK(r.rows[2].label == "pix2pix (W)");
    const std::string md = to_markdown(r);
    CHECK(md.find("MI +0.924, SSIM +0.419") != std::string::npos);
    CHECK(md.find("| pix2pix (W) | 1.353 | 0.949 |") != std::string::npos);
    CHECK(to_csv(r).rfind("variant,mi,ssim,n_images\nU-Net (B),0.42899999999999999,0.53000000000000003,22\n", 0) == 0);

    const Report one = make_report({{"U-Net (B)", 0.4, 0.5, 3}});
    CHECK(!one.deltas.has_value());
    CHECK(to_markdown(one).find("vs") == std::string::npos);
    CHECK(to_csv(one).find("delta") == std::string::npos);

    const Report same = make_report({{"U-Net (B)", 0.7, 0.6, 3}, {"pix2pix (B)", 0.7, 0.6, 3}});
    CHECK(same.deltas->mi == 0.0);
    CHECK(same.deltas->ssim == 0.0);
    CHECK(signed3(same.deltas->mi) == "+0.000");
    CHECK(signed3(-0.25) == "-0.250");

    CHECK_THROWS_AS(make_report({}), InvalidInput);
    CHECK_THROWS_AS(make_report({{"GAN", 1, 1, 1}}), InvalidInput);
}

TEST_CASE("output directory lock") {
    testutil::TempDir dir("lock");
    {
        OutputLock a(dir.path());
        CHECK(fs::exists(dir / ".lock"));
        CHECK_THROWS_AS(OutputLock(dir.path()), RuntimeFailure);
    }
    CHECK(!fs::exists(dir / ".lock"));
    OutputLock again(dir.path());
}

TEST_CASE("full pipeline on the tiny config is reproducible") {
    testutil::TempDir a("run-a"), b("run-b");
    QuietLogs quiet;
    const Report ra = run_all(tiny_config(a.path()));
    const Report rb = run_all(tiny_config(b.path()));
    CHECK(to_csv(ra) == to_csv(rb));
    CHECK(ra.rows.size() == 3);
    CHECK(ra.deltas.has_value());
    for (const char *f : {"report.md", "report.csv", "report_val.csv", "unet_black/best.msih",
                          "pix2pix_white/last.msih", "pix2pix_black/log.csv", "prepared_white/pairs.bin"})
        CHECK_MESSAGE(same_bytes(a / f, b / f), std::string(f));
    for (const auto &e : fs::directory_iterator(a / "pix2pix_black/synth"))
        CHECK(same_bytes(e.path(), b / "pix2pix_black/synth" / e.path().filename()));
    CHECK(!fs::exists(a / ".lock"));
}
