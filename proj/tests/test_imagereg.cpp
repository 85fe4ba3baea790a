#include "msihist/error.hpp"
#include "msihist/imagereg.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace msihist;
using namespace msihist::imagereg;

namespace {

Image make_image(int w, int h, int c, std::vector<double> v) {
    Image img(w, h, c);
    img.data = std::move(v);
    return img;
}

double mae(const Image &a, const Image &b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.data.size(); ++i) s += std::abs(a.data[i] - b.data[i]);
    return s / a.data.size();
}

AffineTransform random_affine(std::mt19937_64 &rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    AffineTransform t;
    do {
        t = {u(rng) * 2, u(rng) * 2, u(rng) * 20, u(rng) * 2, u(rng) * 2, u(rng) * 20};
    } while (std::abs(t.determinant()) < 0.1);
    return t;
}

ControlPoints points_from(const AffineTransform &t, const std::vector<std::array<double, 2>> &src) {
    ControlPoints cp;
    for (const auto &p : src) {
        const auto q = t.apply(p[0], p[1]);
        cp.pairs.push_back({p[0], p[1], q[0], q[1]});
    }
    return cp;
}

} // namespace

TEST_CASE("pad_to") {
    const Image one = make_image(1, 1, 1, {0.3});
    const Image p = pad_to(one, 3, 3, PadMode::white);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x) CHECK(p.at(0, y, x) == ((x == 1 && y == 1) ? 0.3 : 1.0));

    const Image two = make_image(2, 2, 1, {0.1, 0.2, 0.3, 0.4});
    const Image q = pad_to(two, 5, 5, PadMode::black);
    CHECK(pad_offset(2, 2, 5, 5) == std::array<int, 2>{1, 1});
    CHECK(q.at(0, 1, 1) == 0.1);
    CHECK(q.at(0, 2, 2) == 0.4);
    CHECK(q.at(0, 0, 0) == 0.0);
    CHECK(q.at(0, 4, 4) == 0.0);
    CHECK(q.at(0, 3, 3) == 0.0);

    CHECK(pad_to(two, 2, 2, PadMode::white).data == two.data);
    CHECK_THROWS_AS(pad_to(two, 1, 3, PadMode::white), InvalidInput);
}

TEST_CASE("resize") {
    const Image r = make_image(2, 1, 1, {0.0, 1.0});
    const Image up = resize(r, 4, 1);
    CHECK(up.data[0] == doctest::Approx(0.0));
    CHECK(up.data[1] == doctest::Approx(0.25));
    CHECK(up.data[2] == doctest::Approx(0.75));
    CHECK(up.data[3] == doctest::Approx(1.0));

    std::mt19937_64 rng(1);
    const Image img = testutil::random_image(rng, 7, 5, 3);
    CHECK(resize(img, 7, 5).data == img.data);

    Image c(5, 4, 2);
    std::fill(c.data.begin(), c.data.end(), 0.37);
    for (auto [w, h] : {std::pair{9, 3}, std::pair{1, 1}, std::pair{13, 17}})
        for (double v : resize(c, w, h).data) CHECK(v == doctest::Approx(0.37).epsilon(1e-15));

    // resize_map sends input pixel centers to where resize samples them.
    const auto m = resize_map(2, 1, 4, 1);
    CHECK(m.apply(0, 0)[0] == doctest::Approx(0.5));
    CHECK(m.apply(1, 0)[0] == doctest::Approx(2.5));
}

TEST_CASE("fit_affine: worked examples") {
    ControlPoints same{{{0, 0, 0, 0}, {5, 1, 5, 1}, {2, 7, 2, 7}}};
    const auto id = fit_affine(same);
    CHECK(id.a == doctest::Approx(1.0));
    CHECK(id.d == doctest::Approx(1.0));
    CHECK(std::abs(id.b) < 1e-12);
    CHECK(std::abs(id.tx) < 1e-12);

    ControlPoints cp{{{0, 0, 1, 0}, {1, 0, 3, 0}, {0, 1, 1, 1}}};
    const auto t = fit_affine(cp);
    CHECK(t.a == doctest::Approx(2.0));
    CHECK(std::abs(t.b) < 1e-12);
    CHECK(t.tx == doctest::Approx(1.0));
    CHECK(std::abs(t.c) < 1e-12);
    CHECK(t.d == doctest::Approx(1.0));
    CHECK(std::abs(t.ty) < 1e-12);

    ControlPoints line{{{0, 0, 1, 0}, {1, 1, 3, 0}, {2, 2, 1, 1}}};
    CHECK_THROWS_AS(fit_affine(line), InvalidInput);
    ControlPoints two{{{0, 0, 1, 0}, {1, 1, 3, 0}}};
    CHECK_THROWS_AS(fit_affine(two), InvalidInput);
}

TEST_CASE("fit_affine: exact recovery, noise tolerance, translation equivariance") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 64.0);
    for (int trial = 0; trial < 200; ++trial) {
        const auto t = random_affine(rng);
        std::vector<std::array<double, 2>> src;
        do {
            src = {{u(rng), u(rng)}, {u(rng), u(rng)}, {u(rng), u(rng)}};
        } while (std::abs((src[1][0] - src[0][0]) * (src[2][1] - src[0][1]) -
                          (src[2][0] - src[0][0]) * (src[1][1] - src[0][1])) < 50.0);
        const auto f = fit_affine(points_from(t, src));
        for (auto [x, y] : {std::pair{f.a, t.a}, {f.b, t.b}, {f.c, t.c}, {f.d, t.d}, {f.tx, t.tx}, {f.ty, t.ty}})
            CHECK(std::abs(x - y) <= 1e-9);

        auto shifted = points_from(t, src);
        for (auto &p : shifted.pairs) {
            p.dst_x += 3.25;
            p.dst_y -= 7.5;
        }
        const auto g = fit_affine(shifted);
        // Equal up to the rounding of the shifted coordinates themselves.
        for (auto [x, y] : {std::pair{g.a, f.a}, {g.b, f.b}, {g.c, f.c}, {g.d, f.d}}) CHECK(std::abs(x - y) <= 1e-12);
        CHECK(std::abs(g.tx - f.tx - 3.25) <= 1e-10);
        CHECK(std::abs(g.ty - f.ty + 7.5) <= 1e-10);
    }

    std::normal_distribution<double> noise(0.0, 0.1);
    std::vector<double> errs;
    for (int trial = 0; trial < 100; ++trial) {
        const auto t = random_affine(rng);
        std::vector<std::array<double, 2>> src;
        for (int i = 0; i < 20; ++i) src.push_back({u(rng), u(rng)});
        auto cp = points_from(t, src);
        for (auto &p : cp.pairs) {
            p.dst_x += noise(rng);
            p.dst_y += noise(rng);
        }
        const auto f = fit_affine(cp);
        errs.push_back(std::max({std::abs(f.a - t.a), std::abs(f.b - t.b), std::abs(f.c - t.c), std::abs(f.d - t.d)}));
    }
    std::nth_element(errs.begin(), errs.begin() + 50, errs.end());
    CHECK(errs[50] <= 1e-2);
}

TEST_CASE("affine algebra") {
    std::mt19937_64 rng(4);
    const auto t = random_affine(rng), s = random_affine(rng);
    const auto p = t.compose(s).apply(3.0, -2.0);
    const auto q0 = s.apply(3.0, -2.0);
    const auto q = t.apply(q0[0], q0[1]);
    CHECK(p[0] == doctest::Approx(q[0]));
    CHECK(p[1] == doctest::Approx(q[1]));
    const auto r = t.inverse().apply(q[0], q[1]);
    CHECK(r[0] == doctest::Approx(q0[0]));
    CHECK(r[1] == doctest::Approx(q0[1]));
    CHECK_THROWS_AS((AffineTransform{1, 2, 0, 2, 4, 0}.inverse()), InvalidInput);
}

TEST_CASE("warp: worked examples") {
    std::mt19937_64 rng(2);
    const Image img = testutil::random_image(rng, 6, 4, 3);
    CHECK(warp(img, AffineTransform::identity(), 6, 4, PadMode::white).data == img.data);

    const Image ramp = make_image(3, 1, 1, {0.0, 0.5, 1.0});
    const AffineTransform shift{1, 0, 1, 0, 1, 0};
    const Image w = warp(ramp, shift, 3, 1, PadMode::black);
    CHECK(w.data[0] == 0.0);
    CHECK(w.data[1] == 0.0);
    CHECK(w.data[2] == 0.5);
    const Image ww = warp(ramp, shift, 3, 1, PadMode::white);
    CHECK(ww.data[0] == 1.0);

    // 90-degree rotation of a 2x2 about its center: (x, y) -> (1 - y, x).
    const Image sq = make_image(2, 2, 1, {0.1, 0.2, 0.3, 0.4});
    const AffineTransform rot{0, -1, 1, 1, 0, 0};
    const Image rw = warp(sq, rot, 2, 2, PadMode::black);
    // output(x, y) = input(y, 1 - x)
    CHECK(rw.at(0, 0, 0) == doctest::Approx(sq.at(0, 1, 0)));
    CHECK(rw.at(0, 0, 1) == doctest::Approx(sq.at(0, 0, 0)));
    CHECK(rw.at(0, 1, 0) == doctest::Approx(sq.at(0, 1, 1)));
    CHECK(rw.at(0, 1, 1) == doctest::Approx(sq.at(0, 0, 1)));

    CHECK_THROWS_AS(warp(sq, AffineTransform{1, 1, 0, 1, 1, 0}, 2, 2, PadMode::black), InvalidInput);
}

TEST_CASE("warp: forward then inverse on smooth images") {
    std::mt19937_64 rng(6);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int trial = 0; trial < 20; ++trial) {
        const Image img = testutil::smooth_image(64, 64, 3, 3.0 * u(rng));
        // Mild rotation/scale about the center so the interior stays in view.
        const double ang = u(rng) * 0.2, sc = 1.0 + u(rng) * 0.05;
        AffineTransform t{sc * std::cos(ang), -sc * std::sin(ang), 0, sc * std::sin(ang), sc * std::cos(ang), 0};
        const auto c = t.apply(31.5, 31.5);
        t.tx = 31.5 - c[0] + u(rng);
        t.ty = 31.5 - c[1] + u(rng);
        const Image back = warp(warp(img, t, 64, 64, PadMode::black), t.inverse(), 64, 64, PadMode::black);
        // Compare the central region that never left the canvas.
        double s = 0.0;
        int n = 0;
        for (int ch = 0; ch < 3; ++ch)
            for (int y = 12; y < 52; ++y)
                for (int x = 12; x < 52; ++x) {
                    s += std::abs(back.at(ch, y, x) - img.at(ch, y, x));
                    ++n;
                }
        CHECK(s / n <= 2e-2);
    }
}

TEST_CASE("extract_patches and reassemble") {
    std::mt19937_64 rng(12);
    const Image i32 = testutil::random_image(rng, 32, 32, 3);
    auto p = extract_patches(i32, 32, 32);
    REQUIRE(p.size() == 1);
    CHECK(p[0].x == 0);

    const Image i64 = testutil::random_image(rng, 64, 64, 3);
    p = extract_patches(i64, 32, 32);
    REQUIRE(p.size() == 4);
    CHECK((p[1].x == 32 && p[1].y == 0));
    CHECK((p[2].x == 0 && p[2].y == 32));
    CHECK((p[3].x == 32 && p[3].y == 32));
    CHECK(reassemble(p, 64, 64).data == i64.data);

    const Image i48 = testutil::random_image(rng, 48, 32, 3);
    p = extract_patches(i48, 32, 32);
    REQUIRE(p.size() == 2);
    CHECK((p[1].x == 16 && p[1].y == 0));
    CHECK(mae(reassemble(p, 48, 32), i48) <= 1e-6);

    Image zero(32, 32, 1), one(32, 32, 1);
    std::fill(one.data.begin(), one.data.end(), 1.0);
    const Image avg = reassemble({{0, 0, zero}, {16, 0, one}}, 48, 32);
    CHECK(avg.at(0, 5, 20) == 0.5);
    CHECK(avg.at(0, 5, 2) == 0.0);
    CHECK(avg.at(0, 5, 40) == 1.0);

    CHECK_THROWS_AS(reassemble({{0, 0, zero}}, 48, 32), InvalidInput);
    CHECK_THROWS_AS(extract_patches(i32, 33, 32), InvalidInput);

    for (int trial = 0; trial < 20; ++trial) {
        const int w = 32 + static_cast<int>(rng() % 40), h = 32 + static_cast<int>(rng() % 40);
        const Image img = testutil::random_image(rng, w, h, 2);
        const int stride = 8 + static_cast<int>(rng() % 25);
        CHECK(mae(reassemble(extract_patches(img, 32, stride), w, h), img) <= 1e-12);
    }
}

TEST_CASE("control points CSV") {
    testutil::TempDir dir("cp");
    ControlPoints cp{{{1.5, 2, 3, 4}, {0.1, 0.2, 0.3, 0.4}, {7, 8, 9, 10}}};
    write_control_points(cp, dir / "cp.csv");
    const auto back = read_control_points(dir / "cp.csv");
    REQUIRE(back.pairs.size() == 3);
    CHECK(back.pairs[1].src_y == 0.2);
    CHECK(back.pairs[2].dst_y == 10.0);
    testutil::write_text(dir / "bad.csv", "a,b,c,d\n1,2,3,4\n");
    CHECK_THROWS_AS(read_control_points(dir / "bad.csv"), InvalidInput);
    CHECK(parse_pad_mode("white") == PadMode::white);
    CHECK_THROWS_AS(parse_pad_mode("grey"), InvalidInput);
}
