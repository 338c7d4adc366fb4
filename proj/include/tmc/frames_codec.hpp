#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "tmc/entropy.hpp"

namespace tmc {

// 8-bit planes of one channel for every (view, exposure), view-major, each plane row-major.
struct FramePlanes {
    std::size_t width = 0;
    std::size_t height = 0;
    std::size_t exposures = 0;
    std::size_t views = 0;
    std::vector<std::uint8_t> samples;

    FramePlanes() = default;
    FramePlanes(std::size_t w, std::size_t h, std::size_t e, std::size_t v)
        : width(w), height(h), exposures(e), views(v), samples(w * h * e * v, 0) {}

    std::size_t plane_size() const noexcept { return width * height; }
    std::size_t plane_offset(std::size_t view, std::size_t exposure) const noexcept {
        return plane_size() * (view * exposures + exposure);
    }
    friend bool operator==(const FramePlanes&, const FramePlanes&) = default;
};

// Quantizer step for the builtin frame coder: round(2^(qp/6)), at least 1.
int frame_step(int qp);

// Median edge detector prediction from the left, above and above-left neighbours.
int med_predict(int left, int above, int above_left);

// Builtin lossy frame coder. Samples are quantized with frame_step(qp); each
// plane is predicted with MED, right-view planes are first differenced against
// the same-exposure left-view plane. Residuals are zigzag/varint coded and
// passed through the entropy stage.
Bytes builtin_frames_encode(const FramePlanes& frames, int qp, EntropyTag entropy);

// Decodes to the reconstructed 8-bit samples (level * step, clamped to 255).
// `shape` supplies width/height/exposures/views; its samples are ignored.
FramePlanes builtin_frames_decode(std::span<const std::uint8_t> payload, const FramePlanes& shape, int qp,
                                  EntropyTag entropy);

// What the decoder will reconstruct for a given input, without coding.
FramePlanes builtin_frames_reconstruction(const FramePlanes& frames, int qp);

}  // namespace tmc
