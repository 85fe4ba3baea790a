#include "msihist/error.hpp"
#include "msihist/metrics.hpp"

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <random>

using namespace msihist;
using namespace msihist::metrics;

namespace {

Image gray(int w, int h, std::vector<double> v) {
    Image img(w, h, 1);
    img.data = std::move(v);
    return img;
}

Image constant(int w, int h, double v) { return Image(w, h, 1, v); }

// Joint-histogram MI by counting value pairs in a map.
double mi_oracle(const Image &a, const Image &b, int bins) {
    auto bin = [&](double v) { return std::min(bins - 1, static_cast<int>(std::floor(v * bins))); };
    const Image la = luminance(a), lb = luminance(b);
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> pa, pb;
    const double n = static_cast<double>(la.data.size());
    for (std::size_t i = 0; i < la.data.size(); ++i) {
        const int x = bin(la.data[i]), y = bin(lb.data[i]);
        joint[{x, y}] += 1.0 / n;
        pa[x] += 1.0 / n;
        pb[y] += 1.0 / n;
    }
    double mi = 0.0;
    for (const auto &[k, p] : joint) mi += p * std::log(p / (pa[k.first] * pb[k.second]));
    return mi;
}

} // namespace

TEST_CASE("mutual information: worked examples") {
    const Image a = gray(4, 1, {0, 0, 1, 1});
    const Image b = gray(4, 1, {1, 1, 0, 0});
    CHECK(std::abs(mutual_information(a, a, 2) - std::log(2.0)) <= 1e-12);
    CHECK(std::abs(mutual_information(a, b, 2) - std::log(2.0)) <= 1e-12);
    std::mt19937_64 rng(1);
    const Image r = testutil::random_image(rng, 9, 9, 3);
    CHECK(mutual_information(constant(9, 9, 0.4), r) == 0.0);
    CHECK_THROWS_AS(mutual_information(a, constant(2, 2, 0.0)), InvalidInput);
    CHECK_THROWS_AS(mutual_information(a, a, 1), InvalidInput);
}

TEST_CASE("mutual information: properties on random images") {
    std::mt19937_64 rng(44);
    for (int trial = 0; trial < 100; ++trial) {
        const int w = 4 + static_cast<int>(rng() % 30), h = 4 + static_cast<int>(rng() % 30);
        const int bins = 2 + static_cast<int>(rng() % 70);
        const Image a = testutil::random_image(rng, w, h, 1 + trial % 3);
        Image b = testutil::random_image(rng, w, h, 1 + trial % 3);
        if (trial % 2)
            for (std::size_t i = 0; i < b.data.size(); ++i) b.data[i] = 0.5 * (b.data[i] + a.data[i]);
        const double ab = mutual_information(a, b, bins), ba = mutual_information(b, a, bins);
        CHECK(ab == ba);
        CHECK(ab >= 0.0);
        CHECK(ab <= std::min(entropy(a, bins), entropy(b, bins)) + 1e-12);
        CHECK(std::abs(mutual_information(a, a, bins) - entropy(a, bins)) <= 1e-12);
        CHECK(ab == doctest::Approx(mi_oracle(a, b, bins)).epsilon(1e-10));
    }
}

TEST_CASE("ssim: worked examples and properties") {
    std::mt19937_64 rng(3);
    const Image x = testutil::random_image(rng, 20, 17, 3);
    CHECK(ssim(x, x) == 1.0);

    const double c1 = 0.01 * 0.01;
    CHECK(std::abs(ssim(constant(12, 12, 0.0), constant(12, 12, 1.0)) - c1 / (1.0 + c1)) <= 1e-9);
    CHECK(ssim(constant(12, 12, 0.3), constant(12, 12, 0.3)) == 1.0);
    for (double d : {0.05, 0.2, 0.7}) {
        CHECK(std::abs(ssim(constant(14, 11, 0.0), constant(14, 11, d)) - c1 / (d * d + c1)) <= 1e-9);
        const double m = 0.1, expect = (2 * m * (m + d) + c1) / (m * m + (m + d) * (m + d) + c1);
        CHECK(std::abs(ssim(constant(14, 11, m), constant(14, 11, m + d)) - expect) <= 1e-9);
    }

    for (int trial = 0; trial < 20; ++trial) {
        const Image a = testutil::random_image(rng, 11 + trial, 13, 1);
        const Image b = testutil::random_image(rng, 11 + trial, 13, 1);
        const double s = ssim(a, b);
        CHECK(std::abs(s - ssim(b, a)) <= 1e-12);
        CHECK(s <= 1.0);
        CHECK(s >= -1.0);
    }

    CHECK_THROWS_AS(ssim(constant(10, 12, 0.0), constant(10, 12, 0.0)), InvalidInput);
    CHECK_THROWS_AS(ssim(constant(12, 12, 0.0), constant(13, 12, 0.0)), InvalidInput);
}

TEST_CASE("ssim decreases with added noise") {
    const Image base = testutil::smooth_image(32, 32, 3);
    std::mt19937_64 rng(9);
    std::normal_distribution<double> nd(0.0, 1.0);
    double prev = 1.0;
    for (double sigma : {0.01, 0.05, 0.2}) {
        Image noisy = base;
        for (double &v : noisy.data) v = std::clamp(v + sigma * nd(rng), 0.0, 1.0);
        const double s = ssim(base, noisy);
        CHECK(s < prev);
        prev = s;
    }
}

TEST_CASE("evaluate_set and report CSV") {
    std::mt19937_64 rng(5);
    const Image x = testutil::random_image(rng, 16, 16, 3);
    auto r = evaluate_set({{"s0", x, x}});
    CHECK(r.n_images == 1);
    CHECK(std::abs(r.mi - entropy(x)) <= 1e-12);
    CHECK(r.ssim == 1.0);

    const Image y = testutil::random_image(rng, 16, 16, 3);
    r = evaluate_set({{"a", x, x}, {"b", x, y}});
    CHECK(r.mi == doctest::Approx((entropy(x) + mutual_information(x, y)) / 2.0));
    CHECK(r.ssim == doctest::Approx((1.0 + ssim(x, y)) / 2.0));
    CHECK(r.per_image[1].id == "b");

    testutil::TempDir dir("metrics");
    write_report_csv(r, dir / "r.csv", "test");
    const std::string text = testutil::slurp(dir / "r.csv");
    CHECK(text.rfind("# ", 0) == 0);
    CHECK(text.find("not patches") != std::string::npos);
    CHECK(text.find("id,mi,ssim") != std::string::npos);
    const auto back = read_report_csv(dir / "r.csv");
    REQUIRE(back.n_images == 2);
    CHECK(back.per_image[0].mi == r.per_image[0].mi);
    CHECK(back.ssim == r.ssim);

    CHECK_THROWS_AS(evaluate_set({}), InvalidInput);
}
