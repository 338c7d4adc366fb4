#include "tmc/scene_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>

#include "tmc/errors.hpp"

namespace tmc {

namespace fs = std::filesystem;

namespace {

std::string expand_pattern(std::string_view pattern, std::string_view view, std::size_t exposure) {
    std::string out(pattern);
    auto replace = [&out](std::string_view key, const std::string& value) {
        for (auto pos = out.find(key); pos != std::string::npos; pos = out.find(key, pos + value.size())) {
            out.replace(pos, key.size(), value);
        }
    };
    replace("{view}", std::string(view));
    replace("{exposure}", std::to_string(exposure));
    return out;
}

// Returns the existing file for (view, exposure), preferring PNG.
std::optional<fs::path> find_image(const fs::path& dir, std::string_view pattern, std::string_view view,
                                   std::size_t exposure) {
    const std::string stem = expand_pattern(pattern, view, exposure);
    for (const char* ext : {".png", ".ppm"}) {
        fs::path p = dir / (stem + ext);
        if (fs::is_regular_file(p)) return p;
    }
    return std::nullopt;
}

ColorImage read_png(const fs::path& path) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&image, path.c_str())) {
        throw IoError("cannot read PNG " + path.string() + ": " + image.message);
    }
    image.format = PNG_FORMAT_RGB;
    std::vector<png_byte> buf(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
        const std::string msg = image.message;
        png_image_free(&image);
        throw IoError("cannot decode PNG " + path.string() + ": " + msg);
    }
    ColorImage out(image.width, image.height, ColorSpace::RGB);
    for (std::size_t i = 0; i < out.pixel_count(); ++i) {
        for (int c = 0; c < 3; ++c) out.planes[c][i] = buf[3 * i + c] / 255.0;
    }
    return out;
}

void skip_ppm_space(std::istream& in) {
    while (in) {
        const int c = in.peek();
        if (c == '#') {
            std::string line;
            std::getline(in, line);
        } else if (std::isspace(c)) {
            in.get();
        } else {
            break;
        }
    }
}

ColorImage read_ppm(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::string magic;
    in >> magic;
    if (magic != "P6") throw IoError(path.string() + ": only binary PPM (P6) is supported");
    std::size_t w = 0, h = 0, maxval = 0;
    skip_ppm_space(in);
    in >> w;
    skip_ppm_space(in);
    in >> h;
    skip_ppm_space(in);
    in >> maxval;
    if (!in || w == 0 || h == 0) throw IoError(path.string() + ": malformed PPM header");
    if (maxval != 255) throw IoError(path.string() + ": only 8-bit PPM (maxval 255) is supported");
    in.get();  // single whitespace before the raster
    std::vector<unsigned char> buf(w * h * 3);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size())) throw IoError(path.string() + ": truncated PPM raster");
    ColorImage out(w, h, ColorSpace::RGB);
    for (std::size_t i = 0; i < out.pixel_count(); ++i) {
        for (int c = 0; c < 3; ++c) out.planes[c][i] = buf[3 * i + c] / 255.0;
    }
    return out;
}

}  // namespace

const ColorImage& SceneStack::image(std::size_t view, std::size_t exposure) const {
    return images.at(view * meta.exposures + exposure);
}

ColorImage& SceneStack::image(std::size_t view, std::size_t exposure) {
    return images.at(view * meta.exposures + exposure);
}

void SceneStack::validate() const {
    if (meta.views == 0 || meta.exposures == 0) throw ArgumentError("scene has no images");
    if (images.size() != meta.views * meta.exposures) throw ArgumentError("scene image table is incomplete");
    for (const auto& img : images) {
        if (img.width != meta.width || img.height != meta.height) throw ArgumentError("scene images differ in size");
        if (img.space != meta.space) throw ArgumentError("scene images differ in color space");
        img.validate();
    }
}

std::string_view view_name(std::size_t view) {
    switch (view) {
        case 0: return "left";
        case 1: return "right";
    }
    throw ArgumentError("view index " + std::to_string(view) + " has no name (stereo only)");
}

std::string format_extension(ImageFormat format) { return format == ImageFormat::Png ? ".png" : ".ppm"; }

std::uint8_t to_8bit(double v) {
    if (std::isnan(v)) throw ArgumentError("cannot quantize NaN sample");
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

ColorImage read_image(const fs::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".png") return read_png(path);
    if (ext == ".ppm") return read_ppm(path);
    throw IoError("unsupported image extension: " + path.string());
}

void write_image(const ColorImage& img, const fs::path& path, ImageFormat format) {
    img.validate();
    std::vector<unsigned char> buf(img.pixel_count() * 3);
    for (std::size_t i = 0; i < img.pixel_count(); ++i) {
        for (int c = 0; c < 3; ++c) buf[3 * i + c] = to_8bit(img.planes[c][i]);
    }
    if (format == ImageFormat::Png) {
        png_image image;
        std::memset(&image, 0, sizeof image);
        image.version = PNG_IMAGE_VERSION;
        image.width = static_cast<png_uint_32>(img.width);
        image.height = static_cast<png_uint_32>(img.height);
        image.format = PNG_FORMAT_RGB;
        if (!png_image_write_to_file(&image, path.c_str(), 0, buf.data(), 0, nullptr)) {
            throw IoError("cannot write PNG " + path.string() + ": " + image.message);
        }
        return;
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << "P6\n" << img.width << " " << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("failed writing " + path.string());
}

SceneStack load_scene(const fs::path& dir, std::string_view pattern) {
    if (!fs::is_directory(dir)) throw IoError("scene directory not found: " + dir.string());

    std::size_t exposures = 0;
    while (find_image(dir, pattern, "left", exposures)) ++exposures;
    if (exposures == 0) {
        throw IoError("no images matching '" + expand_pattern(pattern, "left", 0) + ".{png,ppm}' in " + dir.string());
    }
    bool any_right = false;
    for (std::size_t e = 0; e <= exposures; ++e) any_right = any_right || find_image(dir, pattern, "right", e).has_value();
    const std::size_t views = any_right ? 2 : 1;

    SceneStack s;
    s.meta.name = fs::absolute(dir).lexically_normal().filename().string();
    if (s.meta.name.empty()) s.meta.name = fs::absolute(dir).parent_path().filename().string();
    s.meta.views = views;
    s.meta.exposures = exposures;
    s.meta.space = ColorSpace::RGB;
    for (std::size_t v = 0; v < views; ++v) {
        for (std::size_t e = 0; e < exposures; ++e) {
            const auto path = find_image(dir, pattern, view_name(v), e);
            if (!path) {
                throw IoError("missing image for (view=" + std::string(view_name(v)) + ", exposure=" + std::to_string(e) +
                              ") in " + dir.string());
            }
            ColorImage img = read_image(*path);
            if (s.images.empty()) {
                s.meta.width = img.width;
                s.meta.height = img.height;
            } else if (img.width != s.meta.width || img.height != s.meta.height) {
                throw IoError("image " + path->string() + " is " + std::to_string(img.width) + "x" +
                              std::to_string(img.height) + ", expected " + std::to_string(s.meta.width) + "x" +
                              std::to_string(s.meta.height));
            }
            s.images.push_back(std::move(img));
        }
    }
    if (views == 2 && find_image(dir, pattern, "right", exposures)) {
        throw IoError("right view has more exposures than the left view in " + dir.string());
    }
    return s;
}

void write_scene(const SceneStack& scene, const fs::path& dir, ImageFormat format, std::string_view pattern) {
    scene.validate();
    fs::create_directories(dir);
    const SceneStack rgb = scene_to_rgb(scene);
    for (std::size_t v = 0; v < rgb.meta.views; ++v) {
        for (std::size_t e = 0; e < rgb.meta.exposures; ++e) {
            write_image(rgb.image(v, e), dir / (expand_pattern(pattern, view_name(v), e) + format_extension(format)),
                        format);
        }
    }
}

DenseTensor stack_to_tensor(const SceneStack& s, std::size_t channel) {
    if (channel > 2) throw ArgumentError("channel " + std::to_string(channel) + " out of range 0..2");
    s.validate();
    const auto& m = s.meta;
    DenseTensor t({m.height, m.width, m.exposures, m.views});
    auto data = t.data();
    for (std::size_t v = 0; v < m.views; ++v) {
        for (std::size_t e = 0; e < m.exposures; ++e) {
            const auto& plane = s.image(v, e).planes[channel];
            const std::size_t base = m.height * m.width * (e + m.exposures * v);
            for (std::size_t y = 0; y < m.height; ++y) {
                for (std::size_t x = 0; x < m.width; ++x) data[base + y + m.height * x] = plane[y * m.width + x];
            }
        }
    }
    return t;
}

SceneStack tensor_to_stack(std::span<const DenseTensor> channels, const SceneMeta& meta) {
    if (channels.size() != 3) throw ArgumentError("tensor_to_stack needs exactly three channel tensors");
    const Dims expect{meta.height, meta.width, meta.exposures, meta.views};
    for (const auto& t : channels) {
        if (t.dims() != expect) throw ArgumentError("channel tensor dims inconsistent with scene metadata");
        if (!t.all_finite()) throw ArgumentError("channel tensor contains NaN or Inf");
    }
    SceneStack s;
    s.meta = meta;
    for (std::size_t v = 0; v < meta.views; ++v) {
        for (std::size_t e = 0; e < meta.exposures; ++e) {
            ColorImage img(meta.width, meta.height, meta.space);
            const std::size_t base = meta.height * meta.width * (e + meta.exposures * v);
            for (std::size_t c = 0; c < 3; ++c) {
                auto data = channels[c].data();
                for (std::size_t y = 0; y < meta.height; ++y) {
                    for (std::size_t x = 0; x < meta.width; ++x) {
                        img.planes[c][y * meta.width + x] = data[base + y + meta.height * x];
                    }
                }
            }
            s.images.push_back(std::move(img));
        }
    }
    return s;
}

SceneStack convert_scene(const SceneStack& s, ColorSpace space) {
    SceneStack out;
    out.meta = s.meta;
    out.meta.space = space;
    for (const auto& img : s.images) out.images.push_back(to_color_space(img, space));
    return out;
}

SceneStack scene_to_rgb(const SceneStack& s) {
    if (s.meta.space == ColorSpace::RGB) return s;
    SceneStack out;
    out.meta = s.meta;
    out.meta.space = ColorSpace::RGB;
    for (const auto& img : s.images) out.images.push_back(to_rgb(img));
    return out;
}

SceneStack quantize_scene(const SceneStack& s) {
    SceneStack out = s;
    for (auto& img : out.images) {
        for (auto& plane : img.planes) {
            for (double& v : plane) v = to_8bit(v) / 255.0;
        }
    }
    return out;
}

SceneStack synthesize_scene(std::size_t width, std::size_t height, std::size_t exposures, std::size_t views,
                            std::uint64_t seed, std::string name) {
    if (width == 0 || height == 0 || exposures == 0 || views == 0 || views > 2) {
        throw ArgumentError("synthesize_scene: invalid scene shape");
    }
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> normal;

    const std::size_t disparity = std::max<std::size_t>(1, width / 64);
    const std::size_t wide = width + disparity;

    struct Wave {
        double fx, fy, phase, amp[3];
    };
    std::vector<Wave> waves(24);
    for (auto& w : waves) {
        const double scale = 1.0 + 6.0 * uni(rng) * uni(rng);
        w.fx = scale * (uni(rng) - 0.5) * 2.0 * std::numbers::pi / 8.0;
        w.fy = scale * (uni(rng) - 0.5) * 2.0 * std::numbers::pi / 8.0;
        w.phase = 2.0 * std::numbers::pi * uni(rng);
        for (double& a : w.amp) a = 0.12 * (uni(rng) + 0.2) / scale;
    }
    struct Rect {
        double x0, y0, x1, y1, gain[3];
    };
    std::vector<Rect> rects(10);
    for (auto& r : rects) {
        r.x0 = uni(rng) * wide;
        r.y0 = uni(rng) * height;
        r.x1 = r.x0 + (0.05 + 0.3 * uni(rng)) * wide;
        r.y1 = r.y0 + (0.05 + 0.3 * uni(rng)) * height;
        for (double& g : r.gain) g = 0.4 + 1.6 * uni(rng);
    }

    // Radiance over the widened canvas, log-ish so exposures matter.
    std::array<std::vector<double>, 3> radiance;
    for (auto& plane : radiance) plane.assign(wide * height, 0.0);
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < wide; ++x) {
            const double gx = static_cast<double>(x) / static_cast<double>(wide);
            for (int c = 0; c < 3; ++c) {
                double v = 0.35 + 0.25 * gx;
                for (const auto& w : waves) v += w.amp[c] * std::sin(w.fx * x + w.fy * y + w.phase);
                for (const auto& r : rects) {
                    if (x >= r.x0 && x < r.x1 && y >= r.y0 && y < r.y1) v *= r.gain[c];
                }
                v += 0.02 * normal(rng);
                radiance[c][y * wide + x] = std::max(0.0, v);
            }
        }
    }

    SceneStack s;
    s.meta = {std::move(name), views, exposures, width, height, ColorSpace::RGB};
    for (std::size_t v = 0; v < views; ++v) {
        const std::size_t offset = v == 0 ? disparity : 0;
        for (std::size_t e = 0; e < exposures; ++e) {
            const double gain = std::pow(2.0, static_cast<double>(e) - 0.5 * static_cast<double>(exposures - 1));
            ColorImage img(width, height, ColorSpace::RGB);
            for (std::size_t y = 0; y < height; ++y) {
                for (std::size_t x = 0; x < width; ++x) {
                    for (int c = 0; c < 3; ++c) {
                        const double lin = std::min(1.0, gain * radiance[c][y * wide + x + offset]);
                        img.planes[c][y * width + x] = to_8bit(std::pow(lin, 1.0 / 2.2)) / 255.0;
                    }
                }
            }
            s.images.push_back(std::move(img));
        }
    }
    return s;
}

}  // namespace tmc
