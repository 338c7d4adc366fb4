#include "tmc/frames_codec.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tmc/errors.hpp"

namespace tmc {

namespace {

void check_qp(int qp) {
    if (qp < 0 || qp > 51) throw ArgumentError("qp " + std::to_string(qp) + " outside 0..51");
}

// Quantization levels of every plane, same layout as FramePlanes::samples.
std::vector<int> quantize_levels(const FramePlanes& frames, int step) {
    std::vector<int> levels(frames.samples.size());
    for (std::size_t i = 0; i < levels.size(); ++i) {
        levels[i] = static_cast<int>(std::lround(static_cast<double>(frames.samples[i]) / step));
    }
    return levels;
}

void check_shape(const FramePlanes& f) {
    if (f.samples.size() != f.width * f.height * f.exposures * f.views) {
        throw ArgumentError("frame sample count does not match width*height*exposures*views");
    }
}

// Visits every sample of a plane with its MED prediction from already-visited neighbours.
template <class F>
void for_each_predicted(const int* plane, std::size_t width, std::size_t height, F&& f) {
    for (std::size_t y = 0; y < height; ++y) {
        for (std::size_t x = 0; x < width; ++x) {
            int pred = 0;
            if (y == 0 && x > 0) {
                pred = plane[x - 1];
            } else if (y > 0 && x == 0) {
                pred = plane[(y - 1) * width];
            } else if (y > 0) {
                pred = med_predict(plane[y * width + x - 1], plane[(y - 1) * width + x], plane[(y - 1) * width + x - 1]);
            }
            f(y * width + x, pred);
        }
    }
}

}  // namespace

int frame_step(int qp) {
    check_qp(qp);
    return std::max(1, static_cast<int>(std::lround(std::exp2(qp / 6.0))));
}

int med_predict(int left, int above, int above_left) {
    const int lo = std::min(left, above);
    const int hi = std::max(left, above);
    if (above_left >= hi) return lo;
    if (above_left <= lo) return hi;
    return left + above - above_left;
}

Bytes builtin_frames_encode(const FramePlanes& frames, int qp, EntropyTag entropy) {
    check_shape(frames);
    const int step = frame_step(qp);
    const std::vector<int> levels = quantize_levels(frames, step);
    const std::size_t n = frames.plane_size();

    ByteWriter residuals;
    std::vector<int> plane(n);
    for (std::size_t v = 0; v < frames.views; ++v) {
        for (std::size_t e = 0; e < frames.exposures; ++e) {
            const int* cur = levels.data() + frames.plane_offset(v, e);
            if (v == 0) {
                std::copy(cur, cur + n, plane.begin());
            } else {
                const int* ref = levels.data() + frames.plane_offset(0, e);
                for (std::size_t i = 0; i < n; ++i) plane[i] = cur[i] - ref[i];
            }
            for_each_predicted(plane.data(), frames.width, frames.height,
                               [&](std::size_t i, int pred) { residuals.svarint(plane[i] - pred); });
        }
    }
    return entropy_encode(residuals.data(), entropy);
}

FramePlanes builtin_frames_decode(std::span<const std::uint8_t> payload, const FramePlanes& shape, int qp,
                                  EntropyTag entropy) {
    const int step = frame_step(qp);
    const Bytes raw = entropy_decode(payload, entropy);
    ByteReader reader(raw);
    FramePlanes out(shape.width, shape.height, shape.exposures, shape.views);
    const std::size_t n = out.plane_size();
    std::vector<int> levels(out.samples.size());
    std::vector<int> plane(n);
    for (std::size_t v = 0; v < out.views; ++v) {
        for (std::size_t e = 0; e < out.exposures; ++e) {
            for_each_predicted(plane.data(), out.width, out.height, [&](std::size_t i, int pred) {
                plane[i] = pred + static_cast<int>(reader.svarint("frame residual"));
            });
            int* cur = levels.data() + out.plane_offset(v, e);
            if (v == 0) {
                std::copy(plane.begin(), plane.end(), cur);
            } else {
                const int* ref = levels.data() + out.plane_offset(0, e);
                for (std::size_t i = 0; i < n; ++i) cur[i] = plane[i] + ref[i];
            }
        }
    }
    if (!reader.done()) throw FormatError("trailing bytes after frame residuals");
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (levels[i] < 0) throw FormatError("negative frame level");
        out.samples[i] = static_cast<std::uint8_t>(std::min(255, levels[i] * step));
    }
    return out;
}

FramePlanes builtin_frames_reconstruction(const FramePlanes& frames, int qp) {
    check_shape(frames);
    const int step = frame_step(qp);
    const std::vector<int> levels = quantize_levels(frames, step);
    FramePlanes out = frames;
    for (std::size_t i = 0; i < levels.size(); ++i) out.samples[i] = static_cast<std::uint8_t>(std::min(255, levels[i] * step));
    return out;
}

}  // namespace tmc
