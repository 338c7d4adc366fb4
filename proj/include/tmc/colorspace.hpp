#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace tmc {

enum class ColorSpace : std::uint8_t { RGB = 0, YCbCr = 1, IPT = 2 };

// Transfer function of the camera RGB. sRGB is the only supported encoding.
enum class RgbEncoding : std::uint8_t { Srgb = 0 };

std::string_view to_string(ColorSpace space);
ColorSpace parse_color_space(std::string_view name);

using Pixel = std::array<double, 3>;

// Three planes of width*height samples (row-major), nominal range [0,1].
struct ColorImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::array<std::vector<double>, 3> planes;
    ColorSpace space = ColorSpace::RGB;

    ColorImage() = default;
    ColorImage(std::size_t w, std::size_t h, ColorSpace s);

    std::size_t pixel_count() const noexcept { return width * height; }
    Pixel pixel(std::size_t i) const { return {planes[0][i], planes[1][i], planes[2][i]}; }
    void set_pixel(std::size_t i, const Pixel& p);
    void validate() const;
};

// Full-range BT.601 on gamma-encoded RGB.
Pixel rgb_to_ycbcr(const Pixel& rgb);
Pixel ycbcr_to_rgb_unclamped(const Pixel& ycc);

// Linearize (sRGB EOTF), to LMS, 0.43 power, opponent matrix; P and T stored as 0.5 + 0.5 * value.
Pixel rgb_to_ipt(const Pixel& rgb);
Pixel ipt_to_rgb_unclamped(const Pixel& ipt);

double srgb_to_linear(double v);
double linear_to_srgb(double v);

ColorImage rgb_to_ycbcr(const ColorImage& img);
ColorImage ycbcr_to_rgb(const ColorImage& img);
ColorImage rgb_to_ipt(const ColorImage& img);

struct ClampStats {
    std::size_t clamped_pixels = 0;
};
ColorImage ipt_to_rgb(const ColorImage& img, ClampStats* stats = nullptr);

// Dispatch helpers: RGB -> `space` and back.
ColorImage to_color_space(const ColorImage& rgb, ColorSpace space);
ColorImage to_rgb(const ColorImage& img);

// Matrices used by the IPT path, exposed for inspection.
namespace ipt {
// D65 XYZ -> LMS (Hunt-Pointer-Estevez, as used by Ebner & Fairchild's IPT).
inline constexpr std::array<std::array<double, 3>, 3> kXyzToLms{{
    {0.4002, 0.7075, -0.0807},
    {-0.2280, 1.1500, 0.0612},
    {0.0000, 0.0000, 0.9184},
}};
// Nonlinear L'M'S' -> IPT (Ebner & Fairchild 1998).
inline constexpr std::array<std::array<double, 3>, 3> kLmsToIpt{{
    {0.4000, 0.4000, 0.2000},
    {4.4550, -4.8510, 0.3960},
    {0.8056, 0.3572, -1.1628},
}};
// Linear sRGB -> XYZ, D65 white (IEC 61966-2-1).
inline constexpr std::array<std::array<double, 3>, 3> kSrgbToXyz{{
    {0.4124564, 0.3575761, 0.1804375},
    {0.2126729, 0.7151522, 0.0721750},
    {0.0193339, 0.1191920, 0.9503041},
}};
inline constexpr double kExponent = 0.43;
}  // namespace ipt

}  // namespace tmc
