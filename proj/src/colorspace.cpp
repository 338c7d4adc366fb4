#include "tmc/colorspace.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Dense>

#include "tmc/errors.hpp"

namespace tmc {

namespace {

constexpr double kKr = 0.299;
constexpr double kKb = 0.114;
constexpr double kKg = 1.0 - kKr - kKb;

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;

Mat3 to_mat(const std::array<std::array<double, 3>, 3>& a) {
    Mat3 m;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) m(r, c) = a[r][c];
    return m;
}

struct IptMatrices {
    Mat3 rgb_to_lms;
    Mat3 lms_to_rgb;
    Mat3 lms_to_ipt;
    Mat3 ipt_to_lms;
};

// Linear RGB -> LMS with each row rescaled so RGB white lands on LMS (1,1,1);
// without it the rounded published matrices leave D65 white slightly chromatic.
const IptMatrices& ipt_matrices() {
    static const IptMatrices m = [] {
        IptMatrices out;
        Mat3 rgb_to_lms = to_mat(ipt::kXyzToLms) * to_mat(ipt::kSrgbToXyz);
        for (int r = 0; r < 3; ++r) rgb_to_lms.row(r) /= rgb_to_lms.row(r).sum();
        out.rgb_to_lms = rgb_to_lms;
        out.lms_to_rgb = rgb_to_lms.inverse();
        out.lms_to_ipt = to_mat(ipt::kLmsToIpt);
        out.ipt_to_lms = out.lms_to_ipt.inverse();
        return out;
    }();
    return m;
}

double signed_pow(double v, double e) { return std::copysign(std::pow(std::abs(v), e), v); }

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

void require_space(const ColorImage& img, ColorSpace expected, const char* op) {
    if (img.space != expected) {
        throw ArgumentError(std::string(op) + ": expected " + std::string(to_string(expected)) + " image, got " +
                            std::string(to_string(img.space)));
    }
}

template <class F>
ColorImage map_pixels(const ColorImage& img, ColorSpace out_space, F&& f) {
    img.validate();
    ColorImage out(img.width, img.height, out_space);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) out.set_pixel(i, f(img.pixel(i)));
    return out;
}

}  // namespace

std::string_view to_string(ColorSpace space) {
    switch (space) {
        case ColorSpace::RGB: return "rgb";
        case ColorSpace::YCbCr: return "ycbcr";
        case ColorSpace::IPT: return "ipt";
    }
    return "unknown";
}

ColorSpace parse_color_space(std::string_view name) {
    std::string lower(name);
    std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
    if (lower == "rgb") return ColorSpace::RGB;
    if (lower == "ycbcr") return ColorSpace::YCbCr;
    if (lower == "ipt") return ColorSpace::IPT;
    throw ArgumentError("unknown color space '" + std::string(name) + "'");
}

ColorImage::ColorImage(std::size_t w, std::size_t h, ColorSpace s) : width(w), height(h), space(s) {
    for (auto& p : planes) p.assign(w * h, 0.0);
}

void ColorImage::set_pixel(std::size_t i, const Pixel& p) {
    planes[0][i] = p[0];
    planes[1][i] = p[1];
    planes[2][i] = p[2];
}

void ColorImage::validate() const {
    for (const auto& p : planes) {
        if (p.size() != width * height) throw ArgumentError("color plane length does not match width*height");
    }
}

Pixel rgb_to_ycbcr(const Pixel& rgb) {
    const auto [r, g, b] = rgb;
    const double y = kKr * r + kKg * g + kKb * b;
    const double cb = 0.5 * (b - y) / (1.0 - kKb) + 0.5;
    const double cr = 0.5 * (r - y) / (1.0 - kKr) + 0.5;
    return {clamp01(y), clamp01(cb), clamp01(cr)};
}

Pixel ycbcr_to_rgb_unclamped(const Pixel& ycc) {
    const double y = ycc[0];
    const double r = y + 2.0 * (1.0 - kKr) * (ycc[2] - 0.5);
    const double b = y + 2.0 * (1.0 - kKb) * (ycc[1] - 0.5);
    const double g = (y - kKr * r - kKb * b) / kKg;
    return {r, g, b};
}

double srgb_to_linear(double v) {
    return v <= 0.04045 ? v / 12.92 : std::pow((v + 0.055) / 1.055, 2.4);
}

double linear_to_srgb(double v) {
    return v <= 0.0031308 ? 12.92 * v : 1.055 * std::pow(v, 1.0 / 2.4) - 0.055;
}

Pixel rgb_to_ipt(const Pixel& rgb) {
    const auto& m = ipt_matrices();
    const Vec3 lin(srgb_to_linear(rgb[0]), srgb_to_linear(rgb[1]), srgb_to_linear(rgb[2]));
    Vec3 lms = m.rgb_to_lms * lin;
    for (int k = 0; k < 3; ++k) lms(k) = signed_pow(lms(k), ipt::kExponent);
    const Vec3 ipt = m.lms_to_ipt * lms;
    return {ipt(0), 0.5 * ipt(1) + 0.5, 0.5 * ipt(2) + 0.5};
}

Pixel ipt_to_rgb_unclamped(const Pixel& enc) {
    const auto& m = ipt_matrices();
    const Vec3 ipt(enc[0], 2.0 * (enc[1] - 0.5), 2.0 * (enc[2] - 0.5));
    Vec3 lms = m.ipt_to_lms * ipt;
    for (int k = 0; k < 3; ++k) lms(k) = signed_pow(lms(k), 1.0 / ipt::kExponent);
    const Vec3 lin = m.lms_to_rgb * lms;
    Pixel out;
    for (int k = 0; k < 3; ++k) {
        // The sRGB OETF is only defined on [0, inf); negative linear light is out of gamut anyway.
        out[static_cast<std::size_t>(k)] = lin(k) < 0.0 ? 12.92 * lin(k) : linear_to_srgb(lin(k));
    }
    return out;
}

ColorImage rgb_to_ycbcr(const ColorImage& img) {
    require_space(img, ColorSpace::RGB, "rgb_to_ycbcr");
    return map_pixels(img, ColorSpace::YCbCr, [](const Pixel& p) { return rgb_to_ycbcr(p); });
}

ColorImage ycbcr_to_rgb(const ColorImage& img) {
    require_space(img, ColorSpace::YCbCr, "ycbcr_to_rgb");
    return map_pixels(img, ColorSpace::RGB, [](const Pixel& p) {
        const Pixel rgb = ycbcr_to_rgb_unclamped(p);
        return Pixel{clamp01(rgb[0]), clamp01(rgb[1]), clamp01(rgb[2])};
    });
}

ColorImage rgb_to_ipt(const ColorImage& img) {
    require_space(img, ColorSpace::RGB, "rgb_to_ipt");
    return map_pixels(img, ColorSpace::IPT, [](const Pixel& p) { return rgb_to_ipt(p); });
}

ColorImage ipt_to_rgb(const ColorImage& img, ClampStats* stats) {
    require_space(img, ColorSpace::IPT, "ipt_to_rgb");
    std::size_t clamped = 0;
    ColorImage out = map_pixels(img, ColorSpace::RGB, [&](const Pixel& p) {
        const Pixel rgb = ipt_to_rgb_unclamped(p);
        const Pixel c{clamp01(rgb[0]), clamp01(rgb[1]), clamp01(rgb[2])};
        // Tolerate round-off at the gamut boundary.
        constexpr double slack = 1e-9;
        for (int k = 0; k < 3; ++k) {
            if (std::abs(c[static_cast<std::size_t>(k)] - rgb[static_cast<std::size_t>(k)]) > slack) {
                ++clamped;
                break;
            }
        }
        return c;
    });
    if (stats) stats->clamped_pixels = clamped;
    return out;
}

ColorImage to_color_space(const ColorImage& rgb, ColorSpace space) {
    require_space(rgb, ColorSpace::RGB, "to_color_space");
    switch (space) {
        case ColorSpace::RGB: return rgb;
        case ColorSpace::YCbCr: return rgb_to_ycbcr(rgb);
        case ColorSpace::IPT: return rgb_to_ipt(rgb);
    }
    throw ArgumentError("unknown color space");
}

ColorImage to_rgb(const ColorImage& img) {
    switch (img.space) {
        case ColorSpace::RGB: return img;
        case ColorSpace::YCbCr: return ycbcr_to_rgb(img);
        case ColorSpace::IPT: return ipt_to_rgb(img);
    }
    throw ArgumentError("unknown color space");
}

}  // namespace tmc
