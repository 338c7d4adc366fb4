#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "tmc/codec.hpp"
#include "tmc/metrics.hpp"

namespace tmc {

struct RDPoint {
    std::string scene;
    ColorSpace space = ColorSpace::YCbCr;
    int preset = 0;  // 0 when explicit ranks were used
    int qp = 0;
    CodingPath path = CodingPath::Latent;
    std::uint64_t bits_latent = 0;
    std::uint64_t bits_backend = 0;
    std::uint64_t bits_total = 0;
    double psnr_left = 0.0;
    double psnr_right = 0.0;  // NaN for mono scenes
    std::string error;        // empty on success
    BackendKind backend = BackendKind::Builtin;
    std::string cell_id;
    std::vector<double> psnr_exp_left;
    std::vector<double> psnr_exp_right;

    bool ok() const noexcept { return error.empty(); }
};

// FNV-1a 64 over the cell coordinates, as 16 hex digits.
std::string cell_id(const std::string& scene, ColorSpace space, int preset, int qp, CodingPath path,
                    BackendKind backend);

inline constexpr std::string_view kCsvVersionLine = "# rdcsv v1";
// Fixed columns first; later columns were appended without changing the leading ones.
inline constexpr std::string_view kCsvColumns =
    "scene,space,preset,qp,path,bits_latent,bits_backend,bits_total,psnr_left,psnr_right,error,backend,cell_id,"
    "psnr_exp_left,psnr_exp_right";

class CsvError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string format_csv_row(const RDPoint& p);
// `where` prefixes error messages, typically "file:line".
RDPoint parse_csv_row(const std::string& line, const std::string& where);

std::vector<RDPoint> read_csv(const std::filesystem::path& path);
void write_csv(const std::filesystem::path& path, const std::vector<RDPoint>& points);
void write_csv(std::ostream& out, const std::vector<RDPoint>& points);

// Encodes, decodes and measures one configuration. Pipeline errors propagate.
RDPoint measure(const SceneStack& scene, const EncodeConfig& cfg, EncodeResult* encoded = nullptr);

struct SweepSpec {
    std::filesystem::path scene_dir;
    std::string pattern{kDefaultPattern};
    std::vector<ColorSpace> spaces{ColorSpace::YCbCr, ColorSpace::IPT};
    std::vector<int> presets{1, 2, 3, 4, 5};
    std::vector<int> qps{5, 10, 15, 20};
    CodingPath path = CodingPath::Latent;
    BackendConfig backend;
    std::filesystem::path out_dir;
    std::size_t jobs = 1;
    std::uint64_t seed = 0;
    // Solver settings shared by every cell (ranks are set per preset).
    SolveConfig solver;

    void validate() const;
};

struct SweepSummary {
    std::size_t cells = 0;
    std::size_t computed = 0;
    std::size_t reused = 0;
    std::size_t failed = 0;
    std::filesystem::path csv;
    std::vector<std::filesystem::path> dat_files;
};

using ProgressFn = std::function<void(const RDPoint&, std::size_t done, std::size_t total)>;

// Runs the grid in `scene`, resuming from an existing rd.csv in spec.out_dir.
SweepSummary run_sweep(const SweepSpec& spec, const SceneStack& scene, const ProgressFn& progress = {});
SweepSummary run_sweep(const SweepSpec& spec, const ProgressFn& progress = {});

// Keeps the last row for every cell id, in order of last appearance.
std::vector<RDPoint> dedupe_keep_last(const std::vector<RDPoint>& points);

struct RDSeries {
    std::string scene;
    ColorSpace space;
    int preset;
    CodingPath path;
    std::vector<RDPoint> points;  // ascending bits_total
};

// Successful points grouped per (scene, space, preset, path), each sorted by bitrate.
std::vector<RDSeries> build_series(const std::vector<RDPoint>& points);
void write_series(std::ostream& out, const std::vector<RDSeries>& series);

}  // namespace tmc
