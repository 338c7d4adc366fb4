#include "tmc/codec.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>

#include "tmc/errors.hpp"

namespace tmc {

namespace {

constexpr std::uint8_t kFramesBuiltin = 0;
constexpr std::uint8_t kFramesExternal = 1;

void check_qp(int qp) {
    if (qp < 0 || qp > 51) throw ArgumentError("qp " + std::to_string(qp) + " outside 0..51");
}

template <class T>
T narrow_field(std::size_t v, const char* what) {
    if (v > std::numeric_limits<T>::max()) {
        throw ArgumentError(std::string(what) + " " + std::to_string(v) + " does not fit the container header");
    }
    return static_cast<T>(v);
}

// Round half away from zero into int32.
std::int32_t round_level(double x) {
    const double r = std::round(x);
    if (!(std::abs(r) <= static_cast<double>(std::numeric_limits<std::int32_t>::max()))) {
        throw NumericError("quantized core level out of range");
    }
    return static_cast<std::int32_t>(r);
}

// A zero channel has no dominant subspace; any orthonormal basis gives the exact (zero) model.
TuckerModel zero_model(const Dims& dims, const Dims& ranks) {
    TuckerModel m;
    m.core = DenseTensor(ranks);
    for (std::size_t r = 0; r < dims.size(); ++r) {
        m.factors.push_back(Matrix::Identity(static_cast<Eigen::Index>(dims[r]), static_cast<Eigen::Index>(ranks[r])));
    }
    return m;
}

struct ChannelSolve {
    TuckerModel model;
    double fit = 1.0;
    std::size_t sweeps = 0;
};

ChannelSolve solve_channel(const DenseTensor& t, const SolveConfig& cfg) {
    if (fro_norm(t) == 0.0) return {zero_model(t.dims(), cfg.ranks), 1.0, 0};
    SolveResult r = tucker_als(t, cfg);
    ChannelSolve out;
    out.fit = r.trace.empty() ? fit(t, r.model) : r.trace.back().fit;
    for (const auto& rec : r.trace) out.sweeps += rec.kind != SweepKind::Init;
    out.model = std::move(r.model);
    return out;
}

Bytes encode_latent_block(const QuantizedModel& q, EntropyTag entropy) {
    ByteWriter w;
    w.f64(q.step);
    for (const auto& f : q.factors)
        for (float x : f) w.f32(x);
    for (auto l : q.levels) w.svarint(l);
    return entropy_encode(w.data(), entropy);
}

QuantizedModel decode_latent_block(std::span<const std::uint8_t> block, const StreamHeader& h) {
    const Bytes raw = entropy_decode(block, h.entropy);
    ByteReader r(raw);
    QuantizedModel q;
    q.dims = h.dims();
    q.ranks = h.rank_dims();
    q.qp = h.qp;
    q.step = r.f64("core step");
    if (!(q.step > 0.0) || !std::isfinite(q.step)) throw FormatError("core step is not positive");
    for (std::size_t m = 0; m < q.dims.size(); ++m) {
        std::vector<float> f(q.dims[m] * q.ranks[m]);
        for (float& x : f) x = r.f32("factor payload");
        q.factors.push_back(std::move(f));
    }
    q.levels.resize(dims_product(q.ranks));
    for (auto& l : q.levels) {
        const std::int64_t v = r.svarint("core levels");
        if (v < std::numeric_limits<std::int32_t>::min() || v > std::numeric_limits<std::int32_t>::max()) {
            throw FormatError("core level out of range");
        }
        l = static_cast<std::int32_t>(v);
    }
    if (!r.done()) throw FormatError("trailing bytes after core levels");
    return q;
}

SceneMeta meta_from_header(const StreamHeader& h, std::string name) {
    SceneMeta m;
    m.name = std::move(name);
    m.views = h.views;
    m.exposures = h.exposures;
    m.width = h.width;
    m.height = h.height;
    m.space = h.space;
    return m;
}

FramePlanes frame_shape(const StreamHeader& h) { return FramePlanes(h.width, h.height, h.exposures, h.views); }

SceneStack clamp_unit(SceneStack s) {
    for (auto& img : s.images)
        for (auto& p : img.planes)
            for (double& v : p) v = std::clamp(v, 0.0, 1.0);
    return s;
}

}  // namespace

std::string to_string(CodingPath path) { return path == CodingPath::Latent ? "latent" : "frames"; }

CodingPath parse_coding_path(std::string_view name) {
    if (name == "latent") return CodingPath::Latent;
    if (name == "frames") return CodingPath::Frames;
    throw ArgumentError("path must be 'latent' or 'frames', got '" + std::string(name) + "'");
}

Dims RankPresetTable::ranks(int preset, const SceneMeta& meta) const {
    if (preset < kMinPreset || preset > kMaxPreset) {
        throw ArgumentError("rank preset " + std::to_string(preset) + " outside 1..5");
    }
    const double k = preset;
    auto spatial = [&](std::size_t dim) {
        const auto r = static_cast<std::size_t>(std::ceil(spatial_density * k * static_cast<double>(dim) / 5.0 - 1e-9));
        return std::clamp<std::size_t>(r, 1, dim);
    };
    const auto kk = static_cast<std::size_t>(preset);
    return {spatial(meta.height), spatial(meta.width), std::clamp<std::size_t>(kk, 1, meta.exposures),
            std::clamp<std::size_t>(kk, 1, meta.views)};
}

double core_step(double max_abs, int qp) {
    check_qp(qp);
    if (!(max_abs > 0.0)) return 1.0;
    // qp - 51 = 6q + r with 0 <= r < 6, so 2^((qp-51)/6) = 2^q * 2^(r/6) and
    // a shift of qp by 6 changes only the exact power of two.
    const int d = qp - 51;
    const int q = (d >= 0 ? d : d - 5) / 6;
    const int r = d - 6 * q;
    return max_abs * std::ldexp(std::exp2(r / 6.0), q - 8);
}

QuantizedModel quantize_core(const TuckerModel& model, int qp) {
    check_qp(qp);
    model.validate(1e-6);
    QuantizedModel q;
    q.dims = model.source_dims();
    q.ranks = model.ranks();
    q.qp = qp;
    double max_abs = 0.0;
    for (double v : model.core.data()) max_abs = std::max(max_abs, std::abs(v));
    q.step = core_step(max_abs, qp);
    q.levels.reserve(model.core.size());
    for (double v : model.core.data()) q.levels.push_back(round_level(v / q.step));
    for (const auto& f : model.factors) {
        std::vector<float> col_major(static_cast<std::size_t>(f.size()));
        for (Eigen::Index j = 0; j < f.cols(); ++j)
            for (Eigen::Index i = 0; i < f.rows(); ++i)
                col_major[static_cast<std::size_t>(j * f.rows() + i)] = static_cast<float>(f(i, j));
        q.factors.push_back(std::move(col_major));
    }
    return q;
}

TuckerModel dequantize(const QuantizedModel& q) {
    if (q.dims.size() != q.ranks.size() || q.factors.size() != q.dims.size()) {
        throw FormatError("quantized model has inconsistent mode count");
    }
    if (q.levels.size() != dims_product(q.ranks)) throw FormatError("core payload size does not match ranks");
    if (!(q.step > 0.0)) throw FormatError("quantizer step must be positive");
    TuckerModel m;
    std::vector<double> core(q.levels.size());
    for (std::size_t i = 0; i < core.size(); ++i) core[i] = q.levels[i] * q.step;
    m.core = DenseTensor(q.ranks, std::move(core));
    for (std::size_t r = 0; r < q.dims.size(); ++r) {
        const auto rows = static_cast<Eigen::Index>(q.dims[r]);
        const auto cols = static_cast<Eigen::Index>(q.ranks[r]);
        if (q.factors[r].size() != q.dims[r] * q.ranks[r]) {
            throw FormatError("factor payload size does not match mode " + std::to_string(r));
        }
        Matrix f(rows, cols);
        for (Eigen::Index j = 0; j < cols; ++j)
            for (Eigen::Index i = 0; i < rows; ++i) f(i, j) = q.factors[r][static_cast<std::size_t>(j * rows + i)];
        m.factors.push_back(std::move(f));
    }
    try {
        m.validate(1e-3);
    } catch (const ArgumentError& e) {
        throw FormatError(std::string("decoded model invalid: ") + e.what());
    }
    return m;
}

Dims StreamHeader::dims() const { return {height, width, exposures, views}; }

Dims StreamHeader::rank_dims() const { return {ranks[0], ranks[1], ranks[2], ranks[3]}; }

Bytes serialize(const CompressedStream& stream) {
    const StreamHeader& h = stream.header;
    ByteWriter w;
    for (char c : StreamHeader::kMagic) w.u8(static_cast<std::uint8_t>(c));
    w.u8(h.version);
    w.u8(static_cast<std::uint8_t>(h.path));
    w.u8(static_cast<std::uint8_t>(h.space));
    w.u8(h.views);
    w.u8(h.exposures);
    w.u16(h.height);
    w.u16(h.width);
    w.u8(h.order);
    for (auto r : h.ranks) w.u16(r);
    w.u8(h.qp);
    w.u8(static_cast<std::uint8_t>(h.entropy));
    w.u8(h.layout);
    for (int i = 0; i < 6; ++i) w.u8(0);
    for (const auto& b : stream.blocks) {
        w.u32(narrow_field<std::uint32_t>(b.size(), "block size"));
        w.bytes(b);
    }
    return w.take();
}

CompressedStream parse_stream(std::span<const std::uint8_t> data) {
    ByteReader r(data);
    if (data.size() < 4 || !std::equal(StreamHeader::kMagic.begin(), StreamHeader::kMagic.end(), data.begin(),
                                       [](char a, std::uint8_t b) { return static_cast<std::uint8_t>(a) == b; })) {
        throw FormatError("bad magic");
    }
    r.bytes(4, "magic");
    CompressedStream s;
    StreamHeader& h = s.header;
    h.version = r.u8("header");
    if (h.version != StreamHeader::kVersion) throw FormatError("unsupported version " + std::to_string(h.version));
    const std::uint8_t path = r.u8("header");
    if (path > 1) throw FormatError("unknown path tag " + std::to_string(path));
    h.path = static_cast<CodingPath>(path);
    const std::uint8_t space = r.u8("header");
    if (space > 2) throw FormatError("unknown color space tag " + std::to_string(space));
    h.space = static_cast<ColorSpace>(space);
    h.views = r.u8("header");
    h.exposures = r.u8("header");
    h.height = r.u16("header");
    h.width = r.u16("header");
    h.order = r.u8("header");
    if (h.order != 4) throw FormatError("unsupported tensor order " + std::to_string(h.order));
    for (auto& rk : h.ranks) rk = r.u16("header");
    h.qp = r.u8("header");
    if (h.qp > 51) throw FormatError("qp " + std::to_string(h.qp) + " outside 0..51");
    h.entropy = parse_entropy_tag(r.u8("header"));
    h.layout = r.u8("header");
    if (h.layout != TensorLayout::kId) throw FormatError("unknown layout id " + std::to_string(h.layout));
    r.bytes(6, "header");

    if (h.views < 1 || h.views > 2 || h.exposures < 1 || h.height < 1 || h.width < 1) {
        throw FormatError("invalid scene shape in header");
    }
    const Dims dims = h.dims();
    for (std::size_t m = 0; m < 4; ++m) {
        if (h.ranks[m] < 1 || h.ranks[m] > dims[m]) throw FormatError("rank out of range for mode " + std::to_string(m));
    }
    while (!r.done()) {
        const std::uint32_t n = r.u32("block length");
        const auto b = r.bytes(n, "block");
        s.blocks.emplace_back(b.begin(), b.end());
    }
    const std::size_t expected_blocks =
        h.path == CodingPath::Latent ? 3 : (!s.blocks.empty() && !s.blocks[0].empty() && s.blocks[0][0] == kFramesExternal ? 1 : 3);
    if (s.blocks.size() != expected_blocks) {
        throw FormatError("truncated payload: expected " + std::to_string(expected_blocks) + " blocks, found " +
                          std::to_string(s.blocks.size()));
    }
    return s;
}

void EncodeConfig::validate() const {
    check_qp(qp);
    backend.validate();
    if (path == CodingPath::Latent && backend.kind == BackendKind::External) {
        throw ArgumentError("the external backend only applies to the frames path");
    }
    if (!ranks && (preset < RankPresetTable::kMinPreset || preset > RankPresetTable::kMaxPreset)) {
        throw ArgumentError("rank preset " + std::to_string(preset) + " outside 1..5");
    }
}

Dims EncodeConfig::resolve_ranks(const SceneMeta& meta) const {
    if (!ranks) return presets.ranks(preset, meta);
    const Dims& r = *ranks;
    const Dims dims{meta.height, meta.width, meta.exposures, meta.views};
    if (r.size() != 4) throw ArgumentError("expected 4 ranks, got " + std::to_string(r.size()));
    for (std::size_t m = 0; m < 4; ++m) {
        if (r[m] < 1 || r[m] > dims[m]) {
            throw ArgumentError("rank " + std::to_string(r[m]) + " for mode " + std::to_string(m) + " outside 1.." +
                                std::to_string(dims[m]));
        }
    }
    return r;
}

std::array<FramePlanes, 3> scene_to_frames(const SceneStack& coded) {
    coded.validate();
    const auto& m = coded.meta;
    std::array<FramePlanes, 3> out;
    for (std::size_t c = 0; c < 3; ++c) {
        out[c] = FramePlanes(m.width, m.height, m.exposures, m.views);
        for (std::size_t v = 0; v < m.views; ++v) {
            for (std::size_t e = 0; e < m.exposures; ++e) {
                const auto& plane = coded.image(v, e).planes[c];
                std::uint8_t* dst = out[c].samples.data() + out[c].plane_offset(v, e);
                for (std::size_t i = 0; i < plane.size(); ++i) dst[i] = to_8bit(plane[i]);
            }
        }
    }
    return out;
}

SceneStack frames_to_scene(const std::array<FramePlanes, 3>& frames, const SceneMeta& meta) {
    SceneStack s;
    s.meta = meta;
    for (std::size_t v = 0; v < meta.views; ++v) {
        for (std::size_t e = 0; e < meta.exposures; ++e) {
            ColorImage img(meta.width, meta.height, meta.space);
            for (std::size_t c = 0; c < 3; ++c) {
                const std::uint8_t* src = frames[c].samples.data() + frames[c].plane_offset(v, e);
                for (std::size_t i = 0; i < img.pixel_count(); ++i) img.planes[c][i] = src[i] / 255.0;
            }
            s.images.push_back(std::move(img));
        }
    }
    return s;
}

EncodeResult encode_stream(const SceneStack& scene, const EncodeConfig& cfg) {
    cfg.validate();
    scene.validate();
    if (scene.meta.space != ColorSpace::RGB) throw ArgumentError("encode_stream expects an RGB scene");
    const SceneMeta& meta = scene.meta;

    EncodeResult result;
    StreamHeader& h = result.stream.header;
    h.path = cfg.path;
    h.space = cfg.space;
    h.views = narrow_field<std::uint8_t>(meta.views, "view count");
    h.exposures = narrow_field<std::uint8_t>(meta.exposures, "exposure count");
    h.height = narrow_field<std::uint16_t>(meta.height, "height");
    h.width = narrow_field<std::uint16_t>(meta.width, "width");
    const Dims ranks = cfg.resolve_ranks(meta);
    for (std::size_t m = 0; m < 4; ++m) h.ranks[m] = narrow_field<std::uint16_t>(ranks[m], "rank");
    h.qp = static_cast<std::uint8_t>(cfg.qp);
    h.entropy = cfg.entropy;

    const SceneStack coded = convert_scene(scene, cfg.space);
    SolveConfig solver = cfg.solver;
    solver.ranks = ranks;

    std::array<ChannelSolve, 3> solved;
    if (cfg.parallel_channels) {
        std::array<std::future<ChannelSolve>, 3> jobs;
        for (std::size_t c = 0; c < 3; ++c) {
            jobs[c] = std::async(std::launch::async, [&, c] { return solve_channel(stack_to_tensor(coded, c), solver); });
        }
        for (std::size_t c = 0; c < 3; ++c) solved[c] = jobs[c].get();
    } else {
        for (std::size_t c = 0; c < 3; ++c) solved[c] = solve_channel(stack_to_tensor(coded, c), solver);
    }
    for (std::size_t c = 0; c < 3; ++c) {
        result.stats.fit[c] = solved[c].fit;
        result.stats.sweeps[c] = solved[c].sweeps;
    }

    auto& blocks = result.stream.blocks;
    if (cfg.path == CodingPath::Latent) {
        for (std::size_t c = 0; c < 3; ++c) {
            blocks.push_back(encode_latent_block(quantize_core(solved[c].model, cfg.qp), cfg.entropy));
            result.stats.bits_latent += 8 * blocks.back().size();
        }
    } else {
        std::array<DenseTensor, 3> recon;
        for (std::size_t c = 0; c < 3; ++c) recon[c] = reconstruct(solved[c].model);
        // Reconstructions may overshoot [0,1]; to_8bit clamps.
        const auto frames = scene_to_frames(tensor_to_stack(recon, coded.meta));
        if (cfg.backend.kind == BackendKind::Builtin) {
            for (std::size_t c = 0; c < 3; ++c) {
                Bytes b{kFramesBuiltin};
                const Bytes payload = builtin_frames_encode(frames[c], cfg.qp, cfg.entropy);
                b.insert(b.end(), payload.begin(), payload.end());
                result.stats.bits_backend += 8 * payload.size();
                blocks.push_back(std::move(b));
            }
        } else {
            ExternalEncoded enc = external_encode(frames, cfg.backend, cfg.qp);
            ByteWriter w;
            w.u8(kFramesExternal);
            w.u16(narrow_field<std::uint16_t>(enc.command.size(), "backend command length"));
            w.bytes({reinterpret_cast<const std::uint8_t*>(enc.command.data()), enc.command.size()});
            w.bytes(enc.payload);
            result.stats.bits_backend = 8 * enc.payload.size();
            result.stats.backend_command = std::move(enc.command);
            blocks.push_back(w.take());
        }
    }
    result.bytes = serialize(result.stream);
    result.stats.bits_total = 8 * result.bytes.size();
    return result;
}

SceneStack decode_stream(std::span<const std::uint8_t> data, const DecodeOptions& opts) {
    const CompressedStream s = parse_stream(data);
    const StreamHeader& h = s.header;
    const SceneMeta meta = meta_from_header(h, opts.name);

    if (h.path == CodingPath::Latent) {
        std::array<DenseTensor, 3> channels;
        for (std::size_t c = 0; c < 3; ++c) channels[c] = reconstruct(dequantize(decode_latent_block(s.blocks[c], h)));
        return clamp_unit(scene_to_rgb(tensor_to_stack(channels, meta)));
    }

    const FramePlanes shape = frame_shape(h);
    std::array<FramePlanes, 3> frames;
    if (s.blocks.size() == 3) {
        for (std::size_t c = 0; c < 3; ++c) {
            const Bytes& b = s.blocks[c];
            if (b.empty() || b[0] != kFramesBuiltin) throw FormatError("unknown frames block kind");
            frames[c] = builtin_frames_decode(std::span(b).subspan(1), shape, h.qp, h.entropy);
        }
    } else {
        ByteReader r(s.blocks[0]);
        r.u8("frames block kind");
        const std::uint16_t len = r.u16("backend command length");
        r.bytes(len, "backend command");
        frames = external_decode(r.bytes(r.remaining()), shape, opts.backend, h.qp);
    }
    return clamp_unit(scene_to_rgb(frames_to_scene(frames, meta)));
}

}  // namespace tmc
