#include <doctest.h>

#include <cmath>
#include <random>

#include "tmc/colorspace.hpp"
#include "tmc/errors.hpp"

using namespace tmc;

namespace {

using M3 = std::array<std::array<double, 3>, 3>;

M3 mul(const M3& a, const M3& b) {
    M3 c{};
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j)
            for (int k = 0; k < 3; ++k) c[i][j] += a[i][k] * b[k][j];
    return c;
}

// Scalar re-evaluation of the IPT forward path, kept apart from the library code.
Pixel reference_ipt(const Pixel& rgb) {
    M3 m = mul(ipt::kXyzToLms, ipt::kSrgbToXyz);
    for (auto& row : m) {
        const double s = row[0] + row[1] + row[2];
        for (double& v : row) v /= s;
    }
    double lin[3];
    for (int k = 0; k < 3; ++k) {
        const double v = rgb[k];
        lin[k] = v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
    }
    double lms[3];
    for (int i = 0; i < 3; ++i) {
        const double v = m[i][0] * lin[0] + m[i][1] * lin[1] + m[i][2] * lin[2];
        lms[i] = v < 0 ? -std::pow(-v, 0.43) : std::pow(v, 0.43);
    }
    double out[3];
    for (int i = 0; i < 3; ++i) out[i] = ipt::kLmsToIpt[i][0] * lms[0] + ipt::kLmsToIpt[i][1] * lms[1] + ipt::kLmsToIpt[i][2] * lms[2];
    return {out[0], 0.5 + 0.5 * out[1], 0.5 + 0.5 * out[2]};
}

double max_diff(const Pixel& a, const Pixel& b) {
    return std::max({std::abs(a[0] - b[0]), std::abs(a[1] - b[1]), std::abs(a[2] - b[2])});
}

}  // namespace

TEST_CASE("Y'CbCr reference points") {
    CHECK(max_diff(rgb_to_ycbcr(Pixel{1, 1, 1}), Pixel{1, 0.5, 0.5}) < 1e-15);
    CHECK(max_diff(rgb_to_ycbcr(Pixel{0, 0, 0}), Pixel{0, 0.5, 0.5}) < 1e-15);
    const Pixel red = rgb_to_ycbcr(Pixel{1, 0, 0});
    CHECK(red[0] == doctest::Approx(0.299).epsilon(1e-12));
    CHECK(red[1] == doctest::Approx(0.5 - 0.299 / 1.772).epsilon(1e-12));
    CHECK(red[1] == doctest::Approx(0.33127).epsilon(1e-5));
    CHECK(red[2] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(max_diff(rgb_to_ycbcr(Pixel{0.5, 0.5, 0.5}), Pixel{0.5, 0.5, 0.5}) < 1e-15);
}

TEST_CASE("Y'CbCr round trip on random pixels") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Pixel p{u(rng), u(rng), u(rng)};
        worst = std::max(worst, max_diff(ycbcr_to_rgb_unclamped(rgb_to_ycbcr(p)), p));
    }
    CHECK(worst < 1e-12);
    CHECK(max_diff(ycbcr_to_rgb_unclamped(Pixel{1, 0.5, 0.5}), Pixel{1, 1, 1}) < 1e-15);
    CHECK(max_diff(ycbcr_to_rgb_unclamped(Pixel{0, 0.5, 0.5}), Pixel{0, 0, 0}) < 1e-15);
}

TEST_CASE("IPT white and black") {
    CHECK(max_diff(rgb_to_ipt(Pixel{1, 1, 1}), Pixel{1, 0.5, 0.5}) < 1e-12);
    CHECK(max_diff(rgb_to_ipt(Pixel{0, 0, 0}), Pixel{0, 0.5, 0.5}) < 1e-15);
}

TEST_CASE("IPT matches an independent scalar evaluation") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 200; ++i) {
        const Pixel p{u(rng), u(rng), u(rng)};
        CHECK(max_diff(rgb_to_ipt(p), reference_ipt(p)) < 1e-12);
    }
}

TEST_CASE("grays have neutral chroma in both spaces") {
    for (int k = 0; k <= 10; ++k) {
        const double g = k / 10.0;
        const Pixel ipt = rgb_to_ipt(Pixel{g, g, g});
        CHECK(std::abs(ipt[1] - 0.5) < 1e-6);
        CHECK(std::abs(ipt[2] - 0.5) < 1e-6);
        const Pixel ycc = rgb_to_ycbcr(Pixel{g, g, g});
        CHECK(std::abs(ycc[1] - 0.5) < 1e-12);
        CHECK(std::abs(ycc[2] - 0.5) < 1e-12);
    }
}

TEST_CASE("IPT round trip") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const Pixel p{u(rng), u(rng), u(rng)};
        worst = std::max(worst, max_diff(ipt_to_rgb_unclamped(rgb_to_ipt(p)), p));
    }
    CHECK(worst < 1e-4);
    CHECK(max_diff(ipt_to_rgb_unclamped(rgb_to_ipt(Pixel{1, 0, 0})), Pixel{1, 0, 0}) < 1e-4);
    CHECK(max_diff(ipt_to_rgb_unclamped(rgb_to_ipt(Pixel{1, 1, 1})), Pixel{1, 1, 1}) < 1e-4);
    CHECK(max_diff(ipt_to_rgb_unclamped(rgb_to_ipt(Pixel{0, 0, 0})), Pixel{0, 0, 0}) < 1e-4);
}

TEST_CASE("image transforms check the space tag and count clamping") {
    ColorImage img(2, 1, ColorSpace::RGB);
    img.set_pixel(0, {0.2, 0.4, 0.6});
    img.set_pixel(1, {1.0, 0.0, 0.5});
    CHECK_THROWS_AS(ycbcr_to_rgb(img), ArgumentError);
    CHECK_THROWS_AS(ipt_to_rgb(img), ArgumentError);
    CHECK_THROWS_AS(rgb_to_ipt(rgb_to_ipt(img)), ArgumentError);

    const ColorImage ycc = rgb_to_ycbcr(img);
    CHECK(ycc.space == ColorSpace::YCbCr);
    const ColorImage back = ycbcr_to_rgb(ycc);
    for (int c = 0; c < 3; ++c)
        for (int i = 0; i < 2; ++i) CHECK(back.planes[c][i] == doctest::Approx(img.planes[c][i]).epsilon(1e-12));

    ColorImage ipt = rgb_to_ipt(img);
    ClampStats stats;
    ipt_to_rgb(ipt, &stats);
    CHECK(stats.clamped_pixels == 0);
    ipt.planes[1][0] = 1.0;  // push far out of gamut
    ipt_to_rgb(ipt, &stats);
    CHECK(stats.clamped_pixels == 1);
}

TEST_CASE("transforms are pixelwise") {
    ColorImage img(3, 1, ColorSpace::RGB);
    img.set_pixel(0, {0.1, 0.2, 0.3});
    img.set_pixel(1, {0.9, 0.5, 0.1});
    img.set_pixel(2, {0.4, 0.4, 0.8});
    ColorImage swapped = img;
    swapped.set_pixel(0, img.pixel(2));
    swapped.set_pixel(2, img.pixel(0));
    for (ColorSpace s : {ColorSpace::YCbCr, ColorSpace::IPT}) {
        const ColorImage a = to_color_space(img, s);
        const ColorImage b = to_color_space(swapped, s);
        CHECK(a.pixel(0) == b.pixel(2));
        CHECK(a.pixel(1) == b.pixel(1));
        CHECK(a.pixel(2) == b.pixel(0));
    }
}

TEST_CASE("color space names") {
    CHECK(parse_color_space("YCbCr") == ColorSpace::YCbCr);
    CHECK(parse_color_space("ipt") == ColorSpace::IPT);
    CHECK(to_string(ColorSpace::IPT) == "ipt");
    CHECK_THROWS_AS(parse_color_space("lab"), ArgumentError);
}
