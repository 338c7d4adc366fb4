#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "test_util.hpp"
#include "tmc/codec.hpp"
#include "tmc/errors.hpp"
#include "tmc/metrics.hpp"

using namespace tmc;
using namespace tmc::testing;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("tmc_codec_" + tag + "_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

std::array<FramePlanes, 3> random_channels(std::size_t w, std::size_t h, std::size_t e, std::size_t v,
                                            std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> d(0, 255);
    std::array<FramePlanes, 3> out;
    for (auto& c : out) {
        c = FramePlanes(w, h, e, v);
        for (auto& s : c.samples) s = static_cast<std::uint8_t>(d(rng));
    }
    return out;
}

SceneMeta meta_of(std::size_t w, std::size_t h, std::size_t e, std::size_t v) {
    SceneMeta m;
    m.width = w;
    m.height = h;
    m.exposures = e;
    m.views = v;
    return m;
}

}  // namespace

TEST_CASE("rank presets") {
    const RankPresetTable table;
    const SceneMeta m = meta_of(256, 144, 5, 2);
    CHECK(table.ranks(1, m) == Dims{8, 13, 1, 1});
    CHECK(table.ranks(3, m) == Dims{22, 39, 3, 2});
    CHECK(table.ranks(5, m) == Dims{36, 64, 5, 2});
    CHECK(table.ranks(1, meta_of(3, 2, 1, 1)) == Dims{1, 1, 1, 1});
    CHECK_THROWS_AS(table.ranks(0, m), ArgumentError);
    CHECK_THROWS_AS(table.ranks(6, m), ArgumentError);
    RankPresetTable dense{1.0};
    CHECK(dense.ranks(5, m) == Dims{144, 256, 5, 2});
}

TEST_CASE("core step halves every six qp") {
    const double max_abs = 3.7;
    CHECK(core_step(max_abs, 51) == doctest::Approx(max_abs / 256.0).epsilon(1e-15));
    for (int qp = 6; qp <= 51; ++qp) CHECK(core_step(max_abs, qp - 6) == core_step(max_abs, qp) / 2.0);
    for (int qp = 0; qp <= 51; ++qp) {
        CHECK(core_step(max_abs, qp) == doctest::Approx(max_abs * std::exp2((qp - 51) / 6.0) / 256.0).epsilon(1e-14));
    }
    CHECK(core_step(0.0, 20) == 1.0);
    CHECK_THROWS_AS(core_step(1.0, 52), ArgumentError);
}

TEST_CASE("all-zero core quantizes losslessly") {
    TuckerModel m = random_model({6, 5, 3, 2}, {2, 2, 2, 1}, 1);
    for (double& v : m.core.data()) v = 0.0;
    const QuantizedModel q = quantize_core(m, 30);
    CHECK(q.step == 1.0);
    for (auto l : q.levels) CHECK(l == 0);
    const TuckerModel back = dequantize(q);
    for (double v : back.core.data()) CHECK(v == 0.0);
}

TEST_CASE("quantization error is at most half a step") {
    const TuckerModel m = random_model({9, 8, 4, 2}, {4, 3, 3, 2}, 2);
    for (int qp : {51, 45, 39, 20, 0}) {
        const QuantizedModel q = quantize_core(m, qp);
        double max_abs = 0.0;
        for (double v : m.core.data()) max_abs = std::max(max_abs, std::abs(v));
        CHECK(q.step == core_step(max_abs, qp));
        const TuckerModel back = dequantize(q);
        for (std::size_t i = 0; i < m.core.size(); ++i) {
            CHECK(std::abs(back.core.data()[i] - m.core.data()[i]) <= q.step / 2 * (1 + 1e-12));
        }
        for (std::size_t r = 0; r < 4; ++r) CHECK((back.factors[r] - m.factors[r]).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("round half away from zero") {
    TuckerModel m = random_model({4, 4, 2, 2}, {2, 2, 1, 1}, 3);
    auto core = m.core.data();
    // max 256 at qp 51 gives step exactly 1
    core[0] = 256.0;
    core[1] = 2.5;
    core[2] = -2.5;
    core[3] = 0.5;
    const QuantizedModel q = quantize_core(m, 51);
    CHECK(q.step == 1.0);
    CHECK(q.levels[1] == 3);
    CHECK(q.levels[2] == -3);
    CHECK(q.levels[3] == 1);
}

TEST_CASE("reconstruction error does not grow as qp decreases") {
    const Dims dims{12, 10, 4, 2};
    const DenseTensor t = random_tensor(dims, 4);
    const TuckerModel m = t_hosvd(t, {5, 4, 3, 2});
    const DenseTensor exact = reconstruct(m);
    double prev = std::numeric_limits<double>::infinity();
    for (int qp : {51, 45, 39}) {
        const double err = squared_norm(reconstruct(dequantize(quantize_core(m, qp))) - exact);
        CHECK(err <= prev);
        prev = err;
    }
}

TEST_CASE("dequantize rejects inconsistent payloads") {
    const TuckerModel m = random_model({5, 4, 2, 2}, {2, 2, 1, 1}, 5);
    QuantizedModel q = quantize_core(m, 10);
    QuantizedModel bad = q;
    bad.levels.pop_back();
    CHECK_THROWS_AS(dequantize(bad), FormatError);
    bad = q;
    bad.factors[1].push_back(0.0f);
    CHECK_THROWS_AS(dequantize(bad), FormatError);
    bad = q;
    for (auto& x : bad.factors[0]) x *= 2.0f;
    CHECK_THROWS_AS(dequantize(bad), FormatError);
}

TEST_CASE("header round trips field for field") {
    CompressedStream s;
    StreamHeader& h = s.header;
    h.path = CodingPath::Frames;
    h.space = ColorSpace::IPT;
    h.views = 2;
    h.exposures = 5;
    h.height = 144;
    h.width = 256;
    h.ranks = {22, 39, 3, 2};
    h.qp = 15;
    h.entropy = EntropyTag::Stored;
    s.blocks = {Bytes{0, 1, 2}, Bytes{0}, Bytes{0, 9}};
    const Bytes bytes = serialize(s);
    CHECK(bytes.size() == StreamHeader::kSize + 3 * 4 + 6);
    CHECK(bytes[0] == 'T');
    CHECK(bytes[3] == '1');
    const CompressedStream back = parse_stream(bytes);
    CHECK(back.header == h);
    CHECK(back.blocks == s.blocks);
    CHECK(serialize(back) == bytes);
}

TEST_CASE("container errors") {
    const SceneStack scene = synthesize_scene(16, 12, 2, 2, 1);
    EncodeConfig cfg;
    cfg.preset = 2;
    cfg.qp = 10;
    const Bytes good = encode_stream(scene, cfg).bytes;

    Bytes bad = good;
    bad[0] = 'X';
    CHECK_THROWS_WITH_AS(parse_stream(bad), "bad magic", FormatError);
    CHECK_THROWS_WITH_AS(decode_stream(Bytes{'T', 'M'}), "bad magic", FormatError);

    bad = good;
    bad[4] = 2;
    CHECK_THROWS_WITH_AS(parse_stream(bad), "unsupported version 2", FormatError);

    bad = good;
    bad[23] = 9;  // entropy tag
    CHECK_THROWS_WITH_AS(parse_stream(bad), "unknown entropy tag 9", FormatError);

    bad = good;
    bad.resize(bad.size() - 5);
    CHECK_THROWS_AS(decode_stream(bad), FormatError);
    bad.resize(StreamHeader::kSize + 2);
    CHECK_THROWS_AS(decode_stream(bad), FormatError);
}

TEST_CASE("full rank qp 0 latent is near lossless") {
    const SceneStack scene = synthesize_scene(48, 32, 3, 2, 7);
    EncodeConfig cfg;
    cfg.ranks = Dims{32, 48, 3, 2};
    cfg.qp = 0;
    for (auto space : {ColorSpace::RGB, ColorSpace::YCbCr, ColorSpace::IPT}) {
        cfg.space = space;
        const EncodeResult r = encode_stream(scene, cfg);
        CHECK(r.stats.bits_backend == 0);
        CHECK(r.stats.bits_total == 8 * r.bytes.size());
        CHECK(r.stats.bits_latent + 8 * (StreamHeader::kSize + 12) == r.stats.bits_total);
        const ScenePsnr p = scene_psnr(scene, decode_stream(r.bytes));
        for (const auto& v : p.views) CHECK(v.psnr > 55.0);
    }
}

TEST_CASE("encoding is deterministic and the stream decodes to the same scene twice") {
    const SceneStack scene = synthesize_scene(32, 24, 3, 2, 8);
    EncodeConfig cfg;
    cfg.preset = 3;
    cfg.qp = 20;
    for (auto path : {CodingPath::Latent, CodingPath::Frames}) {
        cfg.path = path;
        const Bytes a = encode_stream(scene, cfg).bytes;
        cfg.parallel_channels = false;
        const Bytes b = encode_stream(scene, cfg).bytes;
        cfg.parallel_channels = true;
        CHECK(a == b);
        const SceneStack d1 = decode_stream(a);
        const SceneStack d2 = decode_stream(a);
        CHECK(d1.meta == d2.meta);
        for (std::size_t i = 0; i < d1.images.size(); ++i) CHECK(d1.images[i].planes == d2.images[i].planes);
        CHECK(serialize(parse_stream(a)) == a);
    }
}

TEST_CASE("bitrate grows with preset and falls with qp") {
    const SceneStack scene = synthesize_scene(64, 48, 3, 2, 9);
    EncodeConfig cfg;
    cfg.path = CodingPath::Frames;
    auto bits = [&](int preset, int qp) {
        cfg.preset = preset;
        cfg.qp = qp;
        return encode_stream(scene, cfg).stats.bits_total;
    };
    CHECK(bits(1, 5) < bits(5, 5));
    CHECK(bits(3, 5) > bits(3, 20));
    cfg.path = CodingPath::Latent;
    CHECK(bits(1, 5) < bits(5, 5));
    CHECK(bits(3, 5) > bits(3, 20));
}

TEST_CASE("T-HOSVD latent distortion is non-increasing in preset") {
    const SceneStack scene = synthesize_scene(64, 48, 5, 2, 10);
    EncodeConfig cfg;
    cfg.solver.max_sweeps = 0;
    cfg.qp = 10;
    double prev = 0.0;
    for (int preset = 1; preset <= 5; ++preset) {
        cfg.preset = preset;
        const ScenePsnr p = scene_psnr(scene, decode_stream(encode_stream(scene, cfg).bytes));
        const double mean = (p.views[0].psnr + p.views[1].psnr) / 2;
        CHECK(mean >= prev);
        prev = mean;
    }
}

TEST_CASE("frames path at qp 0 reproduces the 8-bit reconstruction") {
    const SceneStack scene = synthesize_scene(24, 16, 2, 2, 11);
    EncodeConfig cfg;
    cfg.path = CodingPath::Frames;
    cfg.ranks = Dims{16, 24, 2, 2};
    cfg.qp = 0;
    cfg.space = ColorSpace::RGB;
    const EncodeResult r = encode_stream(scene, cfg);
    CHECK(r.stats.bits_latent == 0);
    CHECK(r.stats.bits_backend > 0);
    const SceneStack d = decode_stream(r.bytes);
    // Full-rank RGB reconstruction is exact up to rounding, so the 8-bit planes come back unchanged.
    const ScenePsnr p = scene_psnr(scene, d);
    for (const auto& v : p.views) CHECK(v.psnr == kPsnrInfinity);
}

TEST_CASE("zero channels are coded without a solve") {
    SceneStack scene = synthesize_scene(16, 8, 2, 1, 12);
    for (auto& img : scene.images)
        for (auto& p : img.planes)
            for (double& v : p) v = 0.0;
    EncodeConfig cfg;
    cfg.space = ColorSpace::RGB;
    cfg.preset = 2;
    const SceneStack d = decode_stream(encode_stream(scene, cfg).bytes);
    CHECK(scene_psnr(scene, d).views[0].psnr == kPsnrInfinity);
}

TEST_CASE("encode config validation") {
    const SceneStack scene = synthesize_scene(16, 8, 2, 1, 13);
    EncodeConfig cfg;
    cfg.qp = 52;
    CHECK_THROWS_AS(encode_stream(scene, cfg), ArgumentError);
    cfg.qp = 10;
    cfg.ranks = Dims{9, 2, 1, 1};
    CHECK_THROWS_AS(encode_stream(scene, cfg), ArgumentError);
    cfg.ranks.reset();
    cfg.backend = parse_backend("cmd:cat {in} > {out}");
    CHECK_THROWS_AS(encode_stream(scene, cfg), ArgumentError);
    CHECK_THROWS_AS(parse_backend("ffmpeg"), ArgumentError);
    CHECK(to_string(parse_backend("builtin")) == "builtin");
}

TEST_CASE("template substitution") {
    CHECK(substitute_template("enc -q {qp}", "a", "b", 20) == "enc -q 20");
    CHECK(substitute_template("cp {in} {out}", "/tmp/x y", "o", 0) == "cp '/tmp/x y' 'o'");
    CHECK(substitute_template("{other} {qp", "a", "b", 1) == "{other} {qp");
}

TEST_CASE("yuv packing layout") {
    const auto ch = random_channels(3, 2, 2, 2, 14);
    const Bytes yuv = pack_yuv444(ch);
    REQUIRE(yuv.size() == 3 * 6 * 4);
    // Second frame is view 0, exposure 1; its V plane starts 2 planes in.
    CHECK(yuv[3 * 6 + 2 * 6] == ch[2].samples[ch[2].plane_offset(0, 1)]);
    CHECK(unpack_yuv444(yuv, ch[0]) == ch);
    CHECK_THROWS_AS(unpack_yuv444(std::span(yuv).first(10), ch[0]), FormatError);
}

TEST_CASE("identity external backend") {
    TempDir scratch("identity");
    BackendConfig cfg = parse_backend("cmd:cp {in} {out}");
    cfg.scratch_dir = scratch.path;
    const auto ch = random_channels(8, 6, 2, 2, 15);
    const ExternalEncoded enc = external_encode(ch, cfg, 20);
    CHECK(enc.payload == pack_yuv444(ch));
    CHECK(enc.command.starts_with("cp '"));
    CHECK(external_decode(enc.payload, ch[0], cfg, 20) == ch);
    // Scratch files are cleaned up.
    CHECK(fs::is_empty(scratch.path));
}

TEST_CASE("qp placeholder reaches the command") {
    TempDir scratch("qp");
    BackendConfig cfg = parse_backend("cmd:echo {qp} > {out}");
    cfg.scratch_dir = scratch.path;
    const ExternalEncoded enc = external_encode(random_channels(2, 2, 1, 1, 16), cfg, 20);
    CHECK(std::string(enc.payload.begin(), enc.payload.end()) == "20\n");
}

TEST_CASE("missing binary is a spawn error carrying the command") {
    BackendConfig cfg = parse_backend("cmd:/nonexistent/encoder {in} {out}");
    try {
        external_encode(random_channels(2, 2, 1, 1, 17), cfg, 5);
        FAIL("expected BackendError");
    } catch (const BackendError& e) {
        CHECK(std::string(e.what()).find("failed to spawn") != std::string::npos);
        CHECK(e.command().find("/nonexistent/encoder") != std::string::npos);
        CHECK(std::string(e.what()).find("/nonexistent/encoder") != std::string::npos);
    }
}

TEST_CASE("backend failures") {
    SUBCASE("nonzero exit keeps diagnostics") {
        BackendConfig cfg = parse_backend("cmd:echo broken >&2; exit 3");
        try {
            external_encode(random_channels(2, 2, 1, 1, 18), cfg, 5);
            FAIL("expected BackendError");
        } catch (const BackendError& e) {
            CHECK(std::string(e.what()).find("status 3") != std::string::npos);
            CHECK(e.diagnostics().find("broken") != std::string::npos);
        }
    }
    SUBCASE("no output file") {
        BackendConfig cfg = parse_backend("cmd:true");
        CHECK_THROWS_AS(external_encode(random_channels(2, 2, 1, 1, 19), cfg, 5), BackendError);
    }
    SUBCASE("timeout") {
        BackendConfig cfg = parse_backend("cmd:sleep 5");
        cfg.timeout = std::chrono::milliseconds(200);
        const auto t0 = std::chrono::steady_clock::now();
        CHECK_THROWS_WITH_AS(external_encode(random_channels(2, 2, 1, 1, 20), cfg, 5),
                             doctest::Contains("timed out"), BackendError);
        CHECK(std::chrono::steady_clock::now() - t0 < std::chrono::seconds(3));
    }
}

TEST_CASE("frames path through an external backend") {
    const SceneStack scene = synthesize_scene(16, 12, 2, 2, 21);
    EncodeConfig cfg;
    cfg.path = CodingPath::Frames;
    cfg.preset = 5;
    cfg.qp = 20;
    cfg.backend = parse_backend("cmd:cp {in} {out}");
    const EncodeResult r = encode_stream(scene, cfg);
    CHECK(r.stream.blocks.size() == 1);
    CHECK(r.stats.backend_command.starts_with("cp "));
    CHECK(r.stats.bits_backend == 8 * 3 * 16 * 12 * 4);

    // The recorded command travels in the block.
    const std::string block(r.stream.blocks[0].begin(), r.stream.blocks[0].end());
    CHECK(block.find(r.stats.backend_command) != std::string::npos);

    cfg.backend = BackendConfig{};
    const EncodeResult builtin = encode_stream(scene, cfg);
    // Both routes carry the same 8-bit planes; builtin at qp 20 quantizes further.
    const SceneStack via_external = decode_stream(r.bytes);
    cfg.qp = 0;
    const SceneStack via_builtin = decode_stream(encode_stream(scene, cfg).bytes);
    for (std::size_t i = 0; i < via_external.images.size(); ++i) {
        CHECK(via_external.images[i].planes == via_builtin.images[i].planes);
    }
    CHECK(builtin.stream.blocks.size() == 3);
}
