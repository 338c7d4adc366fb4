// tmc: compress, decompress, sweep and report on multi-exposure stereo scenes.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <sstream>

#include "tmc/codec.hpp"
#include "tmc/errors.hpp"
#include "tmc/harness.hpp"

namespace fs = std::filesystem;
using namespace tmc;

namespace {

constexpr int kPipelineError = 1;
constexpr int kArgumentError = 2;

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

std::vector<int> parse_ints(const std::string& s, const char* what) {
    std::vector<int> out;
    for (const auto& item : split_list(s)) {
        std::size_t used = 0;
        int v = 0;
        try {
            v = std::stoi(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used != item.size() || item.empty()) throw ArgumentError(std::string("bad ") + what + " value '" + item + "'");
        out.push_back(v);
    }
    if (out.empty()) throw ArgumentError(std::string("empty ") + what + " list");
    return out;
}

// Runs the part of a command that touches data; any failure there is a pipeline error.
template <class F>
int pipeline(F&& body) {
    try {
        body();
        return 0;
    } catch (const BackendError& e) {
        std::cerr << "error: " << e.what() << "\n";
        if (!e.diagnostics().empty()) std::cerr << e.diagnostics() << "\n";
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
    }
    return kPipelineError;
}

ImageFormat parse_format(const std::string& s) {
    if (s == "png") return ImageFormat::Png;
    if (s == "ppm") return ImageFormat::Ppm;
    throw ArgumentError("format must be png or ppm");
}

struct BackendFlags {
    std::string backend = "builtin";
    std::string decode_cmd;
    double timeout_s = 600;
    std::string scratch;

    BackendConfig resolve() const {
        BackendConfig cfg = parse_backend(backend);
        cfg.decode_template = decode_cmd;
        if (!(timeout_s > 0)) throw ArgumentError("timeout must be positive");
        cfg.timeout = std::chrono::milliseconds(static_cast<long long>(timeout_s * 1000));
        cfg.scratch_dir = scratch;
        if (cfg.kind == BackendKind::Builtin && !decode_cmd.empty()) {
            throw ArgumentError("--decode-cmd needs an external backend");
        }
        return cfg;
    }
};

void add_backend_flags(CLI::App* cmd, BackendFlags& f) {
    cmd->add_option("--backend", f.backend, "builtin or cmd:<template> with {in} {out} {qp}");
    cmd->add_option("--decode-cmd", f.decode_cmd, "decoder template for external streams");
    cmd->add_option("--timeout", f.timeout_s, "external backend timeout in seconds")->check(CLI::PositiveNumber);
    cmd->add_option("--scratch", f.scratch, "directory for backend scratch files");
}

struct CompressArgs {
    std::string scene;
    std::string out;
    std::string pattern{kDefaultPattern};
    std::string space = "ycbcr";
    std::string ranks = "5";
    int qp = 20;
    std::string path = "latent";
    std::string entropy = "range";
    int sweeps = 50;
    std::uint64_t seed = 0;
    BackendFlags backend;
};

int cmd_compress(const CompressArgs& a) {
    EncodeConfig cfg;
    cfg.space = parse_color_space(a.space);
    const auto ranks = parse_ints(a.ranks, "rank");
    if (ranks.size() == 1) {
        cfg.preset = ranks[0];
    } else if (ranks.size() == 4) {
        Dims d;
        for (int r : ranks) {
            if (r < 1) throw ArgumentError("ranks must be positive");
            d.push_back(static_cast<std::size_t>(r));
        }
        cfg.ranks = d;
    } else {
        throw ArgumentError("--ranks takes a preset 1..5 or four ranks H,W,E,V");
    }
    cfg.qp = a.qp;
    cfg.path = parse_coding_path(a.path);
    cfg.entropy = a.entropy == "stored" ? EntropyTag::Stored
                  : a.entropy == "range" ? EntropyTag::Range
                                         : throw ArgumentError("entropy must be stored or range");
    if (a.sweeps < 0) throw ArgumentError("--sweeps must be non-negative");
    cfg.solver.max_sweeps = static_cast<std::size_t>(a.sweeps);
    cfg.solver.seed = a.seed;
    cfg.backend = a.backend.resolve();
    cfg.validate();

    return pipeline([&] {
        const SceneStack scene = load_scene(a.scene, a.pattern);
        EncodeResult encoded;
        const RDPoint p = measure(scene, cfg, &encoded);
        std::ofstream out(a.out, std::ios::binary);
        out.write(reinterpret_cast<const char*>(encoded.bytes.data()),
                  static_cast<std::streamsize>(encoded.bytes.size()));
        if (!out) throw IoError("cannot write " + a.out);
        std::cout << format_csv_row(p) << "\n";
    });
}

struct DecompressArgs {
    std::string stream;
    std::string out;
    std::string pattern{kDefaultPattern};
    std::string format = "png";
    std::string decode_cmd;
    double timeout_s = 600;
    std::string scratch;
};

int cmd_decompress(const DecompressArgs& a) {
    const ImageFormat format = parse_format(a.format);
    DecodeOptions opts;
    opts.backend.decode_template = a.decode_cmd;
    opts.backend.timeout = std::chrono::milliseconds(static_cast<long long>(a.timeout_s * 1000));
    opts.backend.scratch_dir = a.scratch;
    return pipeline([&] {
        std::ifstream in(a.stream, std::ios::binary);
        if (!in) throw IoError("cannot read " + a.stream);
        const Bytes data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        const SceneStack scene = decode_stream(data, opts);
        fs::create_directories(a.out);
        write_scene(scene, a.out, format, a.pattern);
        std::cerr << "wrote " << scene.images.size() << " images to " << a.out << "\n";
    });
}

struct SweepArgs {
    std::string scene;
    std::string out;
    std::string pattern{kDefaultPattern};
    std::string spaces = "ycbcr,ipt";
    std::string ranks = "1,2,3,4,5";
    std::string qps = "5,10,15,20";
    std::string path = "latent";
    int sweeps = 50;
    std::size_t jobs = 1;
    std::uint64_t seed = 0;
    bool quiet = false;
    BackendFlags backend;
};

int cmd_sweep(const SweepArgs& a) {
    SweepSpec spec;
    spec.scene_dir = a.scene;
    spec.pattern = a.pattern;
    spec.spaces.clear();
    for (const auto& s : split_list(a.spaces)) spec.spaces.push_back(parse_color_space(s));
    spec.presets = parse_ints(a.ranks, "preset");
    spec.qps = parse_ints(a.qps, "qp");
    spec.path = parse_coding_path(a.path);
    spec.backend = a.backend.resolve();
    spec.out_dir = a.out;
    spec.jobs = a.jobs;
    spec.seed = a.seed;
    if (a.sweeps < 0) throw ArgumentError("--sweeps must be non-negative");
    spec.solver.max_sweeps = static_cast<std::size_t>(a.sweeps);
    spec.validate();

    const bool quiet = a.quiet;
    bool any_ok = false;
    const int rc = pipeline([&] {
        const SweepSummary s = run_sweep(spec, [quiet](const RDPoint& p, std::size_t done, std::size_t total) {
            if (quiet) return;
            std::cerr << "[" << done << "/" << total << "] " << to_string(p.space) << " preset " << p.preset << " qp "
                      << p.qp << (p.ok() ? "" : " FAILED: " + p.error) << "\n";
        });
        std::cerr << s.cells << " cells: " << s.computed << " computed, " << s.reused << " reused, " << s.failed
                  << " failed -> " << s.csv.string() << "\n";
        any_ok = s.computed + s.reused > 0;
    });
    if (rc != 0) return rc;
    return any_ok ? 0 : kPipelineError;
}

struct ReportArgs {
    std::vector<std::string> csvs;
    std::string out;
};

int cmd_report(const ReportArgs& a) {
    return pipeline([&] {
        std::vector<RDPoint> all;
        for (const auto& path : a.csvs) {
            const auto rows = read_csv(path);
            all.insert(all.end(), rows.begin(), rows.end());
        }
        const auto merged = dedupe_keep_last(all);
        const auto series = build_series(merged);
        if (a.out.empty()) {
            write_series(std::cout, series);
        } else {
            std::ofstream out(a.out);
            write_series(out, series);
            if (!out) throw IoError("cannot write " + a.out);
        }
        std::cerr << merged.size() << " rows, " << series.size() << " series\n";
    });
}

struct SynthArgs {
    std::string out;
    std::size_t width = 256;
    std::size_t height = 144;
    std::size_t exposures = 5;
    std::size_t views = 2;
    std::uint64_t seed = 0;
    std::string format = "png";
};

int cmd_synth(const SynthArgs& a) {
    const ImageFormat format = parse_format(a.format);
    return pipeline([&] {
        const SceneStack s = synthesize_scene(a.width, a.height, a.exposures, a.views, a.seed);
        fs::create_directories(a.out);
        write_scene(s, a.out, format);
    });
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tucker-based multi-exposure stereo image coder"};
    app.require_subcommand(1);

    CompressArgs ca;
    auto* compress = app.add_subcommand("compress", "encode a scene directory into a stream");
    compress->add_option("scene", ca.scene, "scene directory")->required()->check(CLI::ExistingDirectory);
    compress->add_option("-o,--out", ca.out, "output stream file")->required();
    compress->add_option("--pattern", ca.pattern, "file name pattern with {view} and {exposure}");
    compress->add_option("--space", ca.space, "rgb, ycbcr or ipt");
    compress->add_option("--ranks", ca.ranks, "rank preset 1..5 or explicit H,W,E,V");
    compress->add_option("--qp", ca.qp, "quantization parameter 0..51")->check(CLI::Range(0, 51));
    compress->add_option("--path", ca.path, "latent or frames");
    compress->add_option("--entropy", ca.entropy, "stored or range");
    compress->add_option("--sweeps", ca.sweeps, "maximum ALS sweeps (0 = T-HOSVD only)");
    compress->add_option("--seed", ca.seed, "solver seed");
    add_backend_flags(compress, ca.backend);

    DecompressArgs da;
    auto* decompress = app.add_subcommand("decompress", "decode a stream into images");
    decompress->add_option("stream", da.stream, "stream file")->required()->check(CLI::ExistingFile);
    decompress->add_option("-o,--out", da.out, "output directory (created if absent)")->required();
    decompress->add_option("--pattern", da.pattern, "file name pattern with {view} and {exposure}");
    decompress->add_option("--format", da.format, "png or ppm");
    decompress->add_option("--decode-cmd", da.decode_cmd, "decoder template for external streams");
    decompress->add_option("--timeout", da.timeout_s, "external decoder timeout in seconds")->check(CLI::PositiveNumber);
    decompress->add_option("--scratch", da.scratch, "directory for decoder scratch files");

    SweepArgs sa;
    auto* sweep = app.add_subcommand("sweep", "run a color space x rank preset x qp grid");
    sweep->add_option("scene", sa.scene, "scene directory")->required()->check(CLI::ExistingDirectory);
    sweep->add_option("-o,--out", sa.out, "output directory for rd.csv and rd_<space>.dat")->required();
    sweep->add_option("--pattern", sa.pattern, "file name pattern with {view} and {exposure}");
    sweep->add_option("--space", sa.spaces, "comma-separated color spaces");
    sweep->add_option("--ranks", sa.ranks, "comma-separated rank presets");
    sweep->add_option("--qps", sa.qps, "comma-separated qp values");
    sweep->add_option("--path", sa.path, "latent or frames");
    sweep->add_option("--sweeps", sa.sweeps, "maximum ALS sweeps (0 = T-HOSVD only)");
    sweep->add_option("--jobs", sa.jobs, "grid cells run in parallel")->check(CLI::PositiveNumber);
    sweep->add_option("--seed", sa.seed, "solver seed");
    sweep->add_flag("-q,--quiet", sa.quiet, "no per-cell progress");
    add_backend_flags(sweep, sa.backend);

    ReportArgs ra;
    auto* report = app.add_subcommand("report", "merge sweep CSVs into bitrate-sorted series");
    report->add_option("csv", ra.csvs, "rd.csv files")->required()->check(CLI::ExistingFile);
    report->add_option("-o,--out", ra.out, "output file (default stdout)");

    SynthArgs ya;
    auto* synth = app.add_subcommand("synth", "write a synthetic multi-exposure stereo scene");
    synth->add_option("-o,--out", ya.out, "output directory")->required();
    synth->add_option("--width", ya.width, "image width")->check(CLI::PositiveNumber);
    synth->add_option("--height", ya.height, "image height")->check(CLI::PositiveNumber);
    synth->add_option("--exposures", ya.exposures, "exposures per view")->check(CLI::PositiveNumber);
    synth->add_option("--views", ya.views, "1 for mono, 2 for stereo")->check(CLI::Range(1, 2));
    synth->add_option("--seed", ya.seed, "scene seed");
    synth->add_option("--format", ya.format, "png or ppm");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kArgumentError;
    }

    try {
        if (*compress) return cmd_compress(ca);
        if (*decompress) return cmd_decompress(da);
        if (*sweep) return cmd_sweep(sa);
        if (*report) return cmd_report(ra);
        if (*synth) return cmd_synth(ya);
    } catch (const std::exception& e) {
        // Anything escaping the pipeline wrappers comes from argument checking.
        std::cerr << "error: " << e.what() << "\n";
        return kArgumentError;
    }
    return kArgumentError;
}
