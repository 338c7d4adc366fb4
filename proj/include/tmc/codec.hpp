#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "tmc/entropy.hpp"
#include "tmc/external_backend.hpp"
#include "tmc/scene_io.hpp"
#include "tmc/tucker.hpp"

namespace tmc {

enum class CodingPath : std::uint8_t { Latent = 0, Frames = 1 };

std::string to_string(CodingPath path);
CodingPath parse_coding_path(std::string_view name);  // "latent" | "frames"

// Preset k in 1..5 -> (ceil(rho*k*H/5), ceil(rho*k*W/5), min(k,E), min(k,V)), each clamped to [1, dim].
struct RankPresetTable {
    static constexpr int kMinPreset = 1;
    static constexpr int kMaxPreset = 5;
    double spatial_density = 0.25;

    Dims ranks(int preset, const SceneMeta& meta) const;
};

struct QuantizedModel {
    Dims dims;   // source tensor dims
    Dims ranks;  // core dims
    std::vector<std::vector<float>> factors;  // column-major, dims[r] x ranks[r]
    std::vector<std::int32_t> levels;         // core, same linear order as DenseTensor
    double step = 1.0;
    int qp = 0;
};

// Uniform scalar quantizer with step max|core| * 2^((qp-51)/6) / 256 (1 for an all-zero core).
double core_step(double max_abs, int qp);
QuantizedModel quantize_core(const TuckerModel& model, int qp);
TuckerModel dequantize(const QuantizedModel& q);

struct StreamHeader {
    static constexpr std::array<char, 4> kMagic{'T', 'M', 'C', '1'};
    static constexpr std::uint8_t kVersion = 1;
    static constexpr std::size_t kSize = 31;

    std::uint8_t version = kVersion;
    CodingPath path = CodingPath::Latent;
    ColorSpace space = ColorSpace::YCbCr;
    std::uint8_t views = 0;
    std::uint8_t exposures = 0;
    std::uint16_t height = 0;
    std::uint16_t width = 0;
    std::uint8_t order = 4;
    std::array<std::uint16_t, 4> ranks{};
    std::uint8_t qp = 0;
    EntropyTag entropy = EntropyTag::Range;
    std::uint8_t layout = TensorLayout::kId;

    Dims dims() const;  // (H, W, E, V)
    Dims rank_dims() const;
    friend bool operator==(const StreamHeader&, const StreamHeader&) = default;
};

struct CompressedStream {
    StreamHeader header;
    std::vector<Bytes> blocks;
};

Bytes serialize(const CompressedStream& stream);
// Throws FormatError on bad magic, unsupported version, unknown tags or truncation.
CompressedStream parse_stream(std::span<const std::uint8_t> data);

struct EncodeConfig {
    // Explicit ranks win over the preset.
    std::optional<Dims> ranks;
    int preset = 5;
    RankPresetTable presets;
    int qp = 0;
    CodingPath path = CodingPath::Latent;
    ColorSpace space = ColorSpace::YCbCr;
    EntropyTag entropy = EntropyTag::Range;
    BackendConfig backend;
    // Ranks are filled in per scene; max_sweeps = 0 gives the plain T-HOSVD.
    SolveConfig solver;
    bool parallel_channels = true;

    void validate() const;
    Dims resolve_ranks(const SceneMeta& meta) const;
};

struct EncodeStats {
    std::uint64_t bits_latent = 0;
    std::uint64_t bits_backend = 0;
    std::uint64_t bits_total = 0;
    std::array<double, 3> fit{};  // per channel, before quantization
    std::array<std::size_t, 3> sweeps{};
    std::string backend_command;
};

struct EncodeResult {
    CompressedStream stream;
    Bytes bytes;
    EncodeStats stats;
};

// `scene` is RGB. The color transform, solve and coding all happen here.
EncodeResult encode_stream(const SceneStack& scene, const EncodeConfig& cfg);

struct DecodeOptions {
    // Used for external FRAMES payloads; decode_template may be left empty for raw YUV payloads.
    BackendConfig backend;
    std::string name = "decoded";
};

// Returns the RGB scene clamped to [0, 1].
SceneStack decode_stream(std::span<const std::uint8_t> data, const DecodeOptions& opts = {});

// The three per-channel 8-bit planes the FRAMES path hands to its backend.
std::array<FramePlanes, 3> scene_to_frames(const SceneStack& coded);
SceneStack frames_to_scene(const std::array<FramePlanes, 3>& frames, const SceneMeta& meta);

}  // namespace tmc
