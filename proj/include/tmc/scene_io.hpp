#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tmc/colorspace.hpp"
#include "tmc/tensor.hpp"

namespace tmc {

// Per-channel tensor layout: modes (height, width, exposure, view).
struct TensorLayout {
    static constexpr std::uint8_t kId = 1;
    static constexpr std::size_t kOrder = 4;
    static constexpr std::size_t kHeight = 0;
    static constexpr std::size_t kWidth = 1;
    static constexpr std::size_t kExposure = 2;
    static constexpr std::size_t kView = 3;
};

struct SceneMeta {
    std::string name;
    std::size_t views = 0;
    std::size_t exposures = 0;
    std::size_t width = 0;
    std::size_t height = 0;
    ColorSpace space = ColorSpace::RGB;

    friend bool operator==(const SceneMeta&, const SceneMeta&) = default;
};

// V x E images of equal size and color space, indexed view-major.
struct SceneStack {
    SceneMeta meta;
    std::vector<ColorImage> images;

    const ColorImage& image(std::size_t view, std::size_t exposure) const;
    ColorImage& image(std::size_t view, std::size_t exposure);
    void validate() const;
};

enum class ImageFormat { Png, Ppm };

std::string_view view_name(std::size_t view);  // "left", "right"
std::string format_extension(ImageFormat format);

// 8-bit RGB image, samples divided by 255. Gray and alpha PNGs are converted to RGB.
ColorImage read_image(const std::filesystem::path& path);
// Clamps to [0,1] and rounds x*255 half away from zero.
void write_image(const ColorImage& img, const std::filesystem::path& path, ImageFormat format);
std::uint8_t to_8bit(double v);

inline constexpr std::string_view kDefaultPattern = "{view}_{exposure}";

// Loads `pattern` with {view} in {left,right} and {exposure} = 0..E-1, .png or .ppm.
// E is inferred from the left view; a scene without any right images is mono (V=1).
SceneStack load_scene(const std::filesystem::path& dir, std::string_view pattern = kDefaultPattern);
void write_scene(const SceneStack& scene, const std::filesystem::path& dir, ImageFormat format,
                 std::string_view pattern = kDefaultPattern);

// Channel `channel` of every image as a (H, W, E, V) tensor.
DenseTensor stack_to_tensor(const SceneStack& s, std::size_t channel);
// Inverse of stack_to_tensor over all three channels. Values are not clamped.
SceneStack tensor_to_stack(std::span<const DenseTensor> channels, const SceneMeta& meta);

SceneStack convert_scene(const SceneStack& s, ColorSpace space);  // from RGB
SceneStack scene_to_rgb(const SceneStack& s);
// Rounds every sample to the nearest 8-bit level (what write_scene would store).
SceneStack quantize_scene(const SceneStack& s);

// Textured multi-exposure stereo scene: a random radiance map seen through an
// exposure ladder (one stop apart) with a gamma tone curve and 8-bit quantization.
// The right view is the left radiance shifted by a fixed disparity.
SceneStack synthesize_scene(std::size_t width, std::size_t height, std::size_t exposures, std::size_t views,
                            std::uint64_t seed, std::string name = "synthetic");

}  // namespace tmc
